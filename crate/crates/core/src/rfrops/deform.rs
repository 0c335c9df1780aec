//! Modulated deformable convolution.

use super::scalar::Scalar;
use super::tensor::{Conv, FeatureMap};
use crate::error::{Error, Result};

/// Per-pixel sampling offsets and modulation for one deformable layer.
///
/// `offsets` has `2N` channels holding `(Δy, Δx)` for taps in row-major kernel order;
/// `modulation` has `N` channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformParams<S = f64> {
    pub offsets: FeatureMap<S>,
    pub modulation: FeatureMap<S>,
    pub conv: Conv<S>,
}

impl<S: Scalar> DeformParams<S> {
    /// Zero offsets and unit modulation: the layer reduces to `conv`.
    pub fn rigid(conv: Conv<S>, h: usize, w: usize) -> Self {
        let n = conv.taps();
        Self {
            offsets: FeatureMap::zeros(2 * n, h, w),
            modulation: FeatureMap::from_fn(n, h, w, |_, _, _| S::cst(1.0)),
            conv,
        }
    }

    pub fn apply(&self, f: &FeatureMap<S>) -> Result<FeatureMap<S>> {
        deform_conv(f, &self.offsets, &self.modulation, &self.conv)
    }
}

/// `out(p0) = b + Σ_n w_n · f(p0 + p_n + Δp_n) · Δm_n`, bilinear sampling, zero outside.
pub fn deform_conv<S: Scalar>(
    f: &FeatureMap<S>,
    offsets: &FeatureMap<S>,
    modulation: &FeatureMap<S>,
    conv: &Conv<S>,
) -> Result<FeatureMap<S>> {
    let (c, h, w) = f.shape();
    let n = conv.taps();
    if conv.in_c != c {
        return Err(Error::invalid(format!("deform conv expects {} input channels, got {c}", conv.in_c)));
    }
    if offsets.shape() != (2 * n, h, w) {
        return Err(Error::invalid(format!("offsets must be {:?}, got {:?}", (2 * n, h, w), offsets.shape())));
    }
    if modulation.shape() != (n, h, w) {
        return Err(Error::invalid(format!("modulation must be {:?}, got {:?}", (n, h, w), modulation.shape())));
    }
    if let Some(m) = modulation.data().iter().find(|m| !(0.0..=1.0).contains(&m.re())) {
        return Err(Error::invalid(format!("modulation {} outside [0, 1]", m.re())));
    }
    if offsets.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("deformable offsets".into()));
    }
    let (ph, pw) = (conv.kh / 2, conv.kw / 2);
    let mut out = FeatureMap::zeros(conv.out_c, h, w);
    let mut acc = vec![S::default(); conv.out_c];
    let mut col = vec![S::default(); c];
    for y in 0..h {
        for x in 0..w {
            acc.copy_from_slice(&conv.bias);
            for ky in 0..conv.kh {
                for kx in 0..conv.kw {
                    let t = ky * conv.kw + kx;
                    let sy = S::cst(y as f64 + ky as f64 - ph as f64) + offsets.at(2 * t, y, x);
                    let sx = S::cst(x as f64 + kx as f64 - pw as f64) + offsets.at(2 * t + 1, y, x);
                    let m = modulation.at(t, y, x);
                    for (i, v) in col.iter_mut().enumerate() {
                        *v = f.sample_zero(i, sy, sx) * m;
                    }
                    for (o, a) in acc.iter_mut().enumerate() {
                        for (i, v) in col.iter().enumerate() {
                            *a += conv.weight[conv.index(o, i, ky, kx)] * *v;
                        }
                    }
                }
            }
            for (o, a) in acc.iter().enumerate() {
                *out.at_mut(o, y, x) = *a;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_conv(rng: &mut impl Rng, o: usize, i: usize, k: usize) -> Conv {
        Conv::new(
            o,
            i,
            k,
            k,
            (0..o * i * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..o).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn rigid_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_map(&mut rng, 3, 9, 7);
        let conv = random_conv(&mut rng, 2, 3, 3);
        let a = DeformParams::rigid(conv.clone(), 9, 7).apply(&f).unwrap();
        let b = conv.apply(&f, 1).unwrap();
        let err = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn integer_offset_is_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_map(&mut rng, 2, 10, 10);
        let conv = random_conv(&mut rng, 2, 2, 3);
        let mut p = DeformParams::rigid(conv.clone(), 10, 10);
        for t in 0..9 {
            for y in 0..10 {
                for x in 0..10 {
                    *p.offsets.at_mut(2 * t, y, x) = 1.0;
                }
            }
        }
        let a = p.apply(&f).unwrap();
        let shifted = FeatureMap::from_fn(2, 10, 10, |c, y, x| if y + 1 < 10 { f.at(c, y + 1, x) } else { 0.0 });
        let b = conv.apply(&shifted, 1).unwrap();
        for y in 1..8 {
            for x in 1..9 {
                for o in 0..2 {
                    assert!((a.at(o, y, x) - b.at(o, y, x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_modulation_leaves_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_map(&mut rng, 2, 5, 5);
        let mut conv = random_conv(&mut rng, 2, 2, 3);
        conv.bias = vec![0.0; 2];
        let mut p = DeformParams::rigid(conv, 5, 5);
        p.modulation = FeatureMap::zeros(9, 5, 5);
        assert!(p.apply(&f).unwrap().data().iter().all(|v| *v == 0.0));
        p.modulation = FeatureMap::from_fn(9, 5, 5, |_, _, _| 1.5);
        assert!(p.apply(&f).is_err());
    }
}

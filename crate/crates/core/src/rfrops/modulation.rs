//! Temporal, spatial and frequency modulation.

use std::f64::consts::PI;

use super::scalar::Scalar;
use super::tensor::{concat, Conv, FeatureMap, Linear};
use crate::error::{Error, Result};

/// Modulated feature with the attention map that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated<S = f64> {
    pub output: FeatureMap<S>,
    pub attention: FeatureMap<S>,
}

/// Embedding `θ` (stacked `C→C` convs, no activation) and `2C→C` fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeights<S = f64> {
    pub embed: Vec<Conv<S>>,
    pub fuse: Conv<S>,
}

impl<S: Scalar> TemporalWeights<S> {
    pub fn lift<T: Scalar>(&self, f: impl Fn(S) -> T + Copy) -> TemporalWeights<T> {
        TemporalWeights {
            embed: self.embed.iter().map(|c| c.lift(f)).collect(),
            fuse: self.fuse.lift(f),
        }
    }
}

pub fn embed<S: Scalar>(f: &FeatureMap<S>, layers: &[Conv<S>]) -> Result<FeatureMap<S>> {
    let mut x = f.clone();
    for l in layers {
        x = l.apply(&x, 1)?;
    }
    Ok(x)
}

/// `1×H×W` map `sigmoid(⟨θ(f_a)(p), θ(g)(p)⟩)`, inner product over channels.
pub fn temporal_attention<S: Scalar>(fa: &FeatureMap<S>, g: &FeatureMap<S>, layers: &[Conv<S>]) -> Result<FeatureMap<S>> {
    fa.same_shape(g)?;
    let ef = embed(fa, layers)?;
    let eg = embed(g, layers)?;
    let (c, h, w) = ef.shape();
    Ok(FeatureMap::from_fn(1, h, w, |_, y, x| {
        let mut dot = S::default();
        for k in 0..c {
            dot += ef.at(k, y, x) * eg.at(k, y, x);
        }
        dot.sigmoid()
    }))
}

/// `fuse([f_a ⊙ M^s, g])`.
pub fn temporal_modulation<S: Scalar>(fa: &FeatureMap<S>, g: &FeatureMap<S>, w: &TemporalWeights<S>) -> Result<Modulated<S>> {
    let attention = temporal_attention(fa, g, &w.embed)?;
    let output = w.fuse.apply(&concat(&[&fa.modulate(&attention)?, g])?, 1)?;
    Ok(Modulated { output, attention })
}

/// `2×H×W`: per-pixel channel maximum, then channel mean.
pub fn channel_max_mean<S: Scalar>(f: &FeatureMap<S>) -> FeatureMap<S> {
    let (c, h, w) = f.shape();
    let inv = 1.0 / c as f64;
    FeatureMap::from_fn(2, h, w, |k, y, x| {
        if k == 0 {
            (1..c).fold(f.at(0, y, x), |m, i| {
                let v = f.at(i, y, x);
                if v.re() > m.re() {
                    v
                } else {
                    m
                }
            })
        } else {
            let mut s = S::default();
            for i in 0..c {
                s += f.at(i, y, x);
            }
            s * inv
        }
    })
}

/// `f ⊙ sigmoid(conv([max_c f, mean_c f]))`, broadcast over channels. `conv` maps 2→1 channels.
pub fn spatial_modulation<S: Scalar>(f: &FeatureMap<S>, conv: &Conv<S>) -> Result<Modulated<S>> {
    if (conv.out_c, conv.in_c) != (1, 2) {
        return Err(Error::invalid(format!("spatial conv must map 2->1 channels, got {}->{}", conv.in_c, conv.out_c)));
    }
    let attention = conv.apply(&channel_max_mean(f), 1)?.map(S::sigmoid);
    Ok(Modulated {
        output: f.modulate(&attention)?,
        attention,
    })
}

/// Orthonormal 2D DCT-II basis images, one per channel group.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    h: usize,
    w: usize,
    components: Vec<(usize, usize)>,
    images: Vec<Vec<f64>>,
}

fn dct_1d(freq: usize, pos: usize, n: usize) -> f64 {
    let scale = if freq == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    scale * (PI * freq as f64 * (pos as f64 + 0.5) / n as f64).cos()
}

/// First `n` `(u, v)` indices of the JPEG zig-zag scan over an `h×w` grid.
pub fn zigzag(h: usize, w: usize, n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n);
    for s in 0..h + w - 1 {
        let rows: Vec<usize> = (0..=s).filter(|u| *u < h && s - u < w).collect();
        let it: Box<dyn Iterator<Item = &usize>> = if s % 2 == 0 { Box::new(rows.iter().rev()) } else { Box::new(rows.iter()) };
        for u in it {
            if out.len() == n {
                return out;
            }
            out.push((*u, s - u));
        }
    }
    out
}

impl DctBasis {
    pub fn new(h: usize, w: usize, components: Vec<(usize, usize)>) -> Result<Self> {
        if h == 0 || w == 0 || components.is_empty() {
            return Err(Error::invalid("DCT basis needs a positive size and at least one component"));
        }
        if let Some(c) = components.iter().find(|(u, v)| *u >= h || *v >= w) {
            return Err(Error::invalid(format!("DCT component {c:?} outside {h}x{w}")));
        }
        let images = components
            .iter()
            .map(|&(u, v)| {
                let mut img = Vec::with_capacity(h * w);
                for y in 0..h {
                    let by = dct_1d(u, y, h);
                    for x in 0..w {
                        img.push(by * dct_1d(v, x, w));
                    }
                }
                img
            })
            .collect();
        Ok(Self { h, w, components, images })
    }

    /// The `n` lowest-frequency components in zig-zag order.
    pub fn lowest(h: usize, w: usize, n: usize) -> Result<Self> {
        if n > h * w {
            return Err(Error::invalid(format!("{n} DCT components requested from a {h}x{w} grid")));
        }
        Self::new(h, w, zigzag(h, w, n))
    }

    pub fn groups(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[(usize, usize)] {
        &self.components
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i]
    }

    pub fn size(&self) -> (usize, usize) {
        (self.h, self.w)
    }
}

/// Per-channel `Σ_{h,w} X_c(h,w)·B^{u_i,v_i}(h,w)`, where channel `c` belongs to group `i = c / (C/n)`.
pub fn dct_pool<S: Scalar>(f: &FeatureMap<S>, basis: &DctBasis) -> Result<Vec<S>> {
    let (c, h, w) = f.shape();
    let n = basis.groups();
    if (h, w) != basis.size() {
        return Err(Error::invalid(format!("DCT basis is {:?}, feature is {h}x{w}", basis.size())));
    }
    if c % n != 0 {
        return Err(Error::invalid(format!("{c} channels cannot be split into {n} frequency groups")));
    }
    let per = c / n;
    Ok((0..c)
        .map(|k| {
            let b = basis.image(k / per);
            let mut s = S::default();
            for (v, bv) in f.plane(k).iter().zip(b) {
                s += *v * *bv;
            }
            s
        })
        .collect())
}

/// `f ⊙ sigmoid(fc(Freq))`, broadcast over pixels. `fc` maps `C→C`.
pub fn frequency_modulation<S: Scalar>(f: &FeatureMap<S>, basis: &DctBasis, fc: &Linear<S>) -> Result<Modulated<S>> {
    let freq = dct_pool(f, basis)?;
    let c = f.channels();
    if (fc.out_n, fc.in_n) != (c, c) {
        return Err(Error::invalid(format!("frequency fc must map {c}->{c}, got {}->{}", fc.in_n, fc.out_n)));
    }
    let m: Vec<S> = fc.apply(&freq)?.into_iter().map(S::sigmoid).collect();
    let attention = FeatureMap::from_fn(c, 1, 1, |k, _, _| m[k]);
    Ok(Modulated {
        output: f.modulate(&attention)?,
        attention,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsfmWeights<S = f64> {
    pub temporal: TemporalWeights<S>,
    pub spatial: Conv<S>,
    pub frequency: Linear<S>,
}

impl<S: Scalar> TsfmWeights<S> {
    pub fn lift<T: Scalar>(&self, f: impl Fn(S) -> T + Copy) -> TsfmWeights<T> {
        TsfmWeights {
            temporal: self.temporal.lift(f),
            spatial: self.spatial.lift(f),
            frequency: self.frequency.lift(f),
        }
    }
}

/// Temporal, then spatial, then frequency modulation.
pub fn tsfm<S: Scalar>(fa: &FeatureMap<S>, g: &FeatureMap<S>, w: &TsfmWeights<S>, basis: &DctBasis) -> Result<FeatureMap<S>> {
    let s = temporal_modulation(fa, g, &w.temporal)?.output;
    let st = spatial_modulation(&s, &w.spatial)?.output;
    Ok(frequency_modulation(&st, basis, &w.frequency)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_order() {
        assert_eq!(zigzag(4, 4, 6), vec![(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]);
        assert_eq!(zigzag(1, 3, 5), vec![(0, 0), (0, 1), (0, 2)]);
    }

    #[test]
    fn orthonormal_basis() {
        let b = DctBasis::lowest(5, 6, 12).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let dot: f64 = b.image(i).iter().zip(b.image(j)).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "{i} {j} {dot}");
            }
        }
        assert!(DctBasis::new(4, 4, vec![(4, 0)]).is_err());
    }

    #[test]
    fn constant_input_has_only_dc() {
        let (h, w) = (4, 5);
        let b = DctBasis::new(h, w, vec![(0, 0), (1, 0), (0, 2)]).unwrap();
        let f = FeatureMap::from_fn(6, h, w, |_, _, _| 3.0);
        let p = dct_pool(&f, &b).unwrap();
        let dc = 3.0 * (h * w) as f64 / ((h * w) as f64).sqrt();
        assert!((p[0] - dc).abs() < 1e-12 && (p[1] - dc).abs() < 1e-12);
        assert!(p[2..].iter().all(|v| v.abs() < 1e-12));
        assert!(dct_pool(&FeatureMap::<f64>::zeros(4, h, w), &b).is_err());
    }

    #[test]
    fn zero_weights_halve() {
        let f = FeatureMap::from_fn(4, 3, 3, |c, y, x| (c + y * x) as f64 + 1.0);
        let s = spatial_modulation(&f, &Conv::zeros(1, 2, 3, 3).unwrap()).unwrap();
        assert!(s.output.data().iter().zip(f.data()).all(|(a, b)| *a == b / 2.0));
        let b = DctBasis::lowest(3, 3, 2).unwrap();
        let q = frequency_modulation(&f, &b, &Linear::zeros(4, 4)).unwrap();
        assert!(q.attention.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn identity_embedding_closed_form() {
        let f = FeatureMap::from_fn(2, 3, 3, |c, y, x| {
            let a = (y * 3 + x) as f64;
            if c == 0 {
                a.cos()
            } else {
                a.sin()
            }
        });
        let id = vec![Conv::identity(2, 3).unwrap(); 2];
        let m = temporal_attention(&f, &f, &id).unwrap();
        assert!(m.data().iter().all(|v| (v - 0.731_058_578_630_004_9).abs() < 1e-12));
        let g = FeatureMap::from_fn(2, 3, 3, |c, y, x| if c == 0 { -f.at(1, y, x) } else { f.at(0, y, x) });
        let m = temporal_attention(&f, &g, &id).unwrap();
        assert!(m.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}

//! Feature maps, dense convolution and resampling helpers.

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// `C×H×W` tensor, row-major by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S = f64> {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<S>,
}

impl<S: Scalar> FeatureMap<S> {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<S>) -> Result<Self> {
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!("feature map dims must be positive, got {c}x{h}x{w}")));
        }
        if data.len() != c * h * w {
            return Err(Error::invalid(format!("feature map {c}x{h}x{w} needs {} values, got {}", c * h * w, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![S::default(); c * h * w],
        }
    }

    pub fn from_fn(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(k, y, x));
                }
            }
        }
        Self { c, h, w, data }
    }

    pub fn channels(&self) -> usize {
        self.c
    }
    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }
    pub fn data(&self) -> &[S] {
        &self.data
    }
    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> S {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut S {
        &mut self.data[(c * self.h + y) * self.w + x]
    }

    pub fn plane(&self, c: usize) -> &[S] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        self.with_data(self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn lift<T: Scalar>(&self, f: impl Fn(S) -> T) -> FeatureMap<T> {
        FeatureMap {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn to_f64(&self) -> FeatureMap<f64> {
        self.lift(|v| v.re())
    }

    /// Channels `range` as a new map.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Self {
        let n = self.h * self.w;
        Self {
            c: range.len(),
            h: self.h,
            w: self.w,
            data: self.data[range.start * n..range.end * n].to_vec(),
        }
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        Ok(self.with_data(self.data.iter().zip(&o.data).map(|(a, b)| *a + *b).collect()))
    }

    /// `self ⊙ m` where `m` is `1×H×W` (broadcast over channels) or `C×1×1` (broadcast over pixels).
    pub fn modulate(&self, m: &Self) -> Result<Self> {
        let n = self.h * self.w;
        if m.c == 1 && m.h == self.h && m.w == self.w {
            Ok(self.with_data(self.data.iter().enumerate().map(|(i, v)| *v * m.data[i % n]).collect()))
        } else if m.c == self.c && m.h == 1 && m.w == 1 {
            Ok(self.with_data(self.data.iter().enumerate().map(|(i, v)| *v * m.data[i / n]).collect()))
        } else {
            Err(Error::invalid(format!("cannot broadcast {:?} over {:?}", m.shape(), self.shape())))
        }
    }

    pub fn same_shape(&self, o: &Self) -> Result<()> {
        if self.shape() != o.shape() {
            return Err(Error::invalid(format!("shape mismatch: {:?} vs {:?}", self.shape(), o.shape())));
        }
        Ok(())
    }

    fn with_data(&self, data: Vec<S>) -> Self {
        Self {
            c: self.c,
            h: self.h,
            w: self.w,
            data,
        }
    }

    /// Bilinear read of channel `c` at fractional `(y, x)`; taps outside the map contribute zero.
    pub fn sample_zero(&self, c: usize, y: S, x: S) -> S {
        let (yr, xr) = (y.re(), x.re());
        let (h, w) = (self.h as f64, self.w as f64);
        if !(yr > -1.0 && yr < h && xr > -1.0 && xr < w) {
            return S::default();
        }
        let (y0, x0) = (yr.floor(), xr.floor());
        let ly = y - S::cst(y0);
        let lx = x - S::cst(x0);
        let one = S::cst(1.0);
        let (hy, hx) = (one - ly, one - lx);
        let (y0, x0) = (y0 as i64, x0 as i64);
        let tap = |yy: i64, xx: i64| -> Option<S> {
            (yy >= 0 && xx >= 0 && (yy as usize) < self.h && (xx as usize) < self.w).then(|| self.at(c, yy as usize, xx as usize))
        };
        let mut v = S::default();
        if let Some(t) = tap(y0, x0) {
            v += hy * hx * t;
        }
        if let Some(t) = tap(y0, x0 + 1) {
            v += hy * lx * t;
        }
        if let Some(t) = tap(y0 + 1, x0) {
            v += ly * hx * t;
        }
        if let Some(t) = tap(y0 + 1, x0 + 1) {
            v += ly * lx * t;
        }
        v
    }
}

/// Stacks maps along the channel axis.
pub fn concat<S: Scalar>(maps: &[&FeatureMap<S>]) -> Result<FeatureMap<S>> {
    let first = maps.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
    let (h, w) = (first.h, first.w);
    let mut data = Vec::new();
    let mut c = 0;
    for m in maps {
        if (m.h, m.w) != (h, w) {
            return Err(Error::invalid(format!("cannot concatenate {}x{} with {}x{}", h, w, m.h, m.w)));
        }
        data.extend_from_slice(&m.data);
        c += m.c;
    }
    Ok(FeatureMap { c, h, w, data })
}

/// Bilinear ×2 upsampling with half-pixel centres and edge clamping.
pub fn upsample2<S: Scalar>(f: &FeatureMap<S>) -> FeatureMap<S> {
    let (h, w) = (f.h * 2, f.w * 2);
    let axis = |dst: usize, n: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) / 2.0 - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, src - i0 as f64)
    };
    let ys: Vec<_> = (0..h).map(|y| axis(y, f.h)).collect();
    let xs: Vec<_> = (0..w).map(|x| axis(x, f.w)).collect();
    FeatureMap::from_fn(f.c, h, w, |c, y, x| {
        let (y0, y1, ly) = ys[y];
        let (x0, x1, lx) = xs[x];
        let top = f.at(c, y0, x0) * (1.0 - lx) + f.at(c, y0, x1) * lx;
        let bot = f.at(c, y1, x0) * (1.0 - lx) + f.at(c, y1, x1) * lx;
        top * (1.0 - ly) + bot * ly
    })
}

/// Convolution layer: weight `[out][in][kh][kw]`, bias `[out]`, odd kernel, zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<S = f64> {
    pub out_c: usize,
    pub in_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Conv<S> {
    pub fn new(out_c: usize, in_c: usize, kh: usize, kw: usize, weight: Vec<S>, bias: Vec<S>) -> Result<Self> {
        let c = Self::zeros(out_c, in_c, kh, kw)?;
        if weight.len() != c.weight.len() || bias.len() != out_c {
            return Err(Error::invalid(format!(
                "conv {out_c}x{in_c}x{kh}x{kw} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias, ..c })
    }

    pub fn zeros(out_c: usize, in_c: usize, kh: usize, kw: usize) -> Result<Self> {
        if out_c == 0 || in_c == 0 || kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(Error::invalid(format!("conv needs positive channels and odd kernel, got {out_c}x{in_c}x{kh}x{kw}")));
        }
        Ok(Self {
            out_c,
            in_c,
            kh,
            kw,
            weight: vec![S::default(); out_c * in_c * kh * kw],
            bias: vec![S::default(); out_c],
        })
    }

    /// Kernel with a single centre tap of 1 from channel `o` to `o`.
    pub fn identity(c: usize, k: usize) -> Result<Self> {
        let mut conv = Self::zeros(c, c, k, k)?;
        for o in 0..c {
            let i = conv.index(o, o, k / 2, k / 2);
            conv.weight[i] = S::cst(1.0);
        }
        Ok(conv)
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_c + i) * self.kh + ky) * self.kw + kx
    }

    pub fn taps(&self) -> usize {
        self.kh * self.kw
    }

    pub fn lift<T: Scalar>(&self, f: impl Fn(S) -> T) -> Conv<T> {
        Conv {
            out_c: self.out_c,
            in_c: self.in_c,
            kh: self.kh,
            kw: self.kw,
            weight: self.weight.iter().map(|v| f(*v)).collect(),
            bias: self.bias.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Dense convolution with the given stride.
    pub fn apply(&self, f: &FeatureMap<S>, stride: usize) -> Result<FeatureMap<S>> {
        if f.c != self.in_c {
            return Err(Error::invalid(format!("conv expects {} input channels, got {}", self.in_c, f.c)));
        }
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let oh = (f.h + 2 * ph - self.kh) / stride + 1;
        let ow = (f.w + 2 * pw - self.kw) / stride + 1;
        let mut out = FeatureMap::zeros(self.out_c, oh, ow);
        for o in 0..self.out_c {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_c {
                        for ky in 0..self.kh {
                            let sy = (y * stride + ky) as i64 - ph as i64;
                            if sy < 0 || sy >= f.h as i64 {
                                continue;
                            }
                            for kx in 0..self.kw {
                                let sx = (x * stride + kx) as i64 - pw as i64;
                                if sx < 0 || sx >= f.w as i64 {
                                    continue;
                                }
                                acc += self.weight[self.index(o, i, ky, kx)] * f.at(i, sy as usize, sx as usize);
                            }
                        }
                    }
                    *out.at_mut(o, y, x) = acc;
                }
            }
        }
        Ok(out)
    }
}

/// Fully connected layer: weight `[out][in]`, bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S = f64> {
    pub out_n: usize,
    pub in_n: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(out_n: usize, in_n: usize, weight: Vec<S>, bias: Vec<S>) -> Result<Self> {
        if out_n == 0 || in_n == 0 || weight.len() != out_n * in_n || bias.len() != out_n {
            return Err(Error::invalid(format!(
                "linear {out_n}x{in_n} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self { out_n, in_n, weight, bias })
    }

    pub fn zeros(out_n: usize, in_n: usize) -> Self {
        Self {
            out_n,
            in_n,
            weight: vec![S::default(); out_n * in_n],
            bias: vec![S::default(); out_n],
        }
    }

    pub fn lift<T: Scalar>(&self, f: impl Fn(S) -> T) -> Linear<T> {
        Linear {
            out_n: self.out_n,
            in_n: self.in_n,
            weight: self.weight.iter().map(|v| f(*v)).collect(),
            bias: self.bias.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn apply(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.in_n {
            return Err(Error::invalid(format!("linear expects {} inputs, got {}", self.in_n, x.len())));
        }
        Ok((0..self.out_n)
            .map(|o| {
                let mut acc = self.bias[o];
                for (w, v) in self.weight[o * self.in_n..(o + 1) * self.in_n].iter().zip(x) {
                    acc += *w * *v;
                }
                acc
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_conv_and_stride() {
        let f = FeatureMap::from_fn(2, 4, 6, |c, y, x| (c * 100 + y * 10 + x) as f64);
        let id = Conv::<f64>::identity(2, 3).unwrap();
        assert_eq!(id.apply(&f, 1).unwrap(), f);
        let down = id.apply(&f, 2).unwrap();
        assert_eq!(down.shape(), (2, 2, 3));
        assert_eq!(down.at(1, 1, 2), f.at(1, 2, 4));
    }

    #[test]
    fn zero_padding_at_border() {
        let f = FeatureMap::from_fn(1, 3, 3, |_, _, _| 1.0);
        let mut box3 = Conv::<f64>::zeros(1, 1, 3, 3).unwrap();
        box3.weight.iter_mut().for_each(|w| *w = 1.0);
        let o = box3.apply(&f, 1).unwrap();
        assert_eq!((o.at(0, 0, 0), o.at(0, 1, 1), o.at(0, 0, 1)), (4.0, 9.0, 6.0));
    }

    #[test]
    fn sampling_and_upsampling() {
        let f = FeatureMap::from_fn(1, 4, 4, |_, y, x| (2 * y + 3 * x) as f64);
        assert!((f.sample_zero(0, 1.25, 2.5) - (2.5 + 7.5)).abs() < 1e-12);
        assert_eq!(f.sample_zero(0, -1.0, 0.0), 0.0);
        assert_eq!(f.sample_zero(0, -0.5, 0.0), 0.0 * 0.5);
        let up = upsample2(&f);
        // interior of a ramp stays a ramp at half the slope
        assert!((up.at(0, 3, 3) - (2.0 * 1.25 + 3.0 * 1.25)).abs() < 1e-12);
        assert_eq!(up.at(0, 0, 0), 0.0);
    }

    #[test]
    fn broadcast_modulation() {
        let f = FeatureMap::from_fn(2, 2, 2, |c, y, x| (1 + c + y + x) as f64);
        let pix = FeatureMap::new(1, 2, 2, vec![0.5, 1.0, 2.0, 0.0]).unwrap();
        let ch = FeatureMap::new(2, 1, 1, vec![3.0, 0.5]).unwrap();
        assert_eq!(f.modulate(&pix).unwrap().at(1, 1, 0), 3.0 * 2.0);
        assert_eq!(f.modulate(&ch).unwrap().at(1, 1, 1), 4.0 * 0.5);
        assert!(f.modulate(&f).is_err());
    }
}

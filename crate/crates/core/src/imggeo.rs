//! Grayscale image buffers and plane projective geometry.
//!
//! Coordinates are continuous with pixel centers on integers: pixel `(x, y)`
//! covers `[x - 0.5, x + 0.5) x [y - 0.5, y + 0.5)`. A [`Homography`] maps a
//! point in a source plane to a destination plane; [`warp`] uses inverse
//! mapping, so every output pixel pulls from `h^-1 * p` in the source.

use std::ops::Mul;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default field of view (height, width) in pixels.
pub const DEFAULT_FOV: (usize, usize) = (1024, 1024);

/// Tolerance below which a homography determinant is treated as zero.
pub const DET_EPS: f64 = 1e-12;

/// Sampling positions this close outside the source are snapped onto the border.
const EDGE_TOL: f64 = 1e-9;

/// Row-major grayscale image in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    data: Vec<f64>,
    /// `true` where the value originates from source pixels, `false` where a fill was used.
    /// `None` means every pixel is valid.
    valid: Option<Vec<bool>>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image size must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "image data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite intensity at index {i}")));
        }
        Ok(Self {
            height,
            width,
            data,
            valid: None,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image size must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
            valid: None,
        }
    }

    /// Builds an image from `f(x, y)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image size must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            height,
            width,
            data,
            valid: None,
        }
    }

    pub fn with_valid_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(Error::invalid("valid mask length does not match image"));
        }
        self.valid = Some(mask);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid
            .as_ref()
            .is_none_or(|m| m[y * self.width + x])
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.valid
            .as_ref()
            .map_or(self.data.len(), |m| m.iter().filter(|&&v| v).count())
    }

    /// Mean over valid pixels (over all pixels when none are valid).
    pub fn mean(&self) -> f64 {
        let (sum, n) = match &self.valid {
            Some(m) if m.iter().any(|&v| v) => self
                .data
                .iter()
                .zip(m)
                .filter(|(_, &v)| v)
                .fold((0.0, 0usize), |(s, n), (d, _)| (s + d, n + 1)),
            _ => (self.data.iter().sum(), self.data.len()),
        };
        sum / n as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear sample at continuous `(x, y)`.
    ///
    /// Returns `None` outside `[0, W-1] x [0, H-1]`; otherwise the value and
    /// whether every source pixel with non-zero weight is valid. Taps with zero
    /// weight are never read, so integer positions return stored values exactly.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<(f64, bool)> {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        if !(x >= -EDGE_TOL && x <= xmax + EDGE_TOL && y >= -EDGE_TOL && y <= ymax + EDGE_TOL) {
            return None;
        }
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;

        let mut value = 0.0;
        let mut valid = true;
        let mut tap = |xi: usize, yi: usize, wgt: f64| {
            if wgt != 0.0 {
                value += wgt * self.get(xi, yi);
                valid &= self.is_valid(xi, yi);
            }
        };
        if fx == 0.0 && fy == 0.0 {
            tap(x0, y0, 1.0);
        } else if fy == 0.0 {
            tap(x0, y0, 1.0 - fx);
            tap(x0 + 1, y0, fx);
        } else if fx == 0.0 {
            tap(x0, y0, 1.0 - fy);
            tap(x0, y0 + 1, fy);
        } else {
            tap(x0, y0, (1.0 - fx) * (1.0 - fy));
            tap(x0 + 1, y0, fx * (1.0 - fy));
            tap(x0, y0 + 1, (1.0 - fx) * fy);
            tap(x0 + 1, y0 + 1, fx * fy);
        }
        Some((value, valid))
    }

    /// Pixel-wise comparison of two valid masks, treating `None` as all-valid.
    pub fn same_validity(&self, other: &ImageF) -> bool {
        if self.data.len() != other.data.len() {
            return false;
        }
        (0..self.data.len()).all(|i| {
            let a = self.valid.as_ref().is_none_or(|m| m[i]);
            let b = other.valid.as_ref().is_none_or(|m| m[i]);
            a == b
        })
    }
}

/// 3x3 plane projective transform, normalized so that `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("homography has non-finite entries"));
        }
        let s = m[2][2];
        if s.abs() < DET_EPS {
            return Err(Error::DegenerateHomography(format!(
                "m[2][2] = {s:e} cannot be normalized"
            )));
        }
        let mut n = m;
        n.iter_mut().flatten().for_each(|v| *v /= s);
        let h = Self { m: n };
        let det = h.det();
        if det.abs() < DET_EPS {
            return Err(Error::DegenerateHomography(format!("determinant {det:e}")));
        }
        Ok(h)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() < DET_EPS || !det.is_finite() {
            return Err(Error::DegenerateHomography(format!("determinant {det:e}")));
        }
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut inv = adj;
        inv.iter_mut().flatten().for_each(|v| *v /= det);
        Homography::from_matrix(inv)
    }

    /// Projective application to a point. Points mapped to infinity come back non-finite.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Homography) -> Homography {
        *next * *self
    }
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// `a * b` applies `b` first, then `a`.
impl Mul for Homography {
    type Output = Homography;

    fn mul(self, rhs: Homography) -> Homography {
        let mut m = matmul(&self.m, &rhs.m);
        let s = m[2][2];
        if s.abs() > f64::MIN_POSITIVE {
            m.iter_mut().flatten().for_each(|v| *v /= s);
        }
        Homography { m }
    }
}

/// Rotation `Rz(roll) * Ry(yaw) * Rx(pitch)` for angles in degrees.
pub fn rotation_matrix(attitude_deg: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, g] = attitude_deg.map(f64::to_radians);
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sg, cg) = g.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
    matmul(&rz, &matmul(&ry, &rx))
}

/// Largest accepted attitude magnitude in degrees.
pub const MAX_ATTITUDE_DEG: f64 = 45.0;

/// Homography induced by a camera attitude and an image-plane shift:
/// `T(tx, ty) * K * R(attitude) * K^-1` with a pinhole intrinsic matrix `K`.
pub fn build_homography(
    attitude_deg: [f64; 3],
    translation: (f64, f64),
    focal: f64,
    principal_point: (f64, f64),
) -> Result<Homography> {
    let scalars = [translation.0, translation.1, focal, principal_point.0, principal_point.1];
    if attitude_deg.iter().chain(&scalars).any(|v| !v.is_finite()) {
        return Err(Error::invalid("homography parameters must be finite"));
    }
    if let Some(a) = attitude_deg.iter().find(|a| a.abs() > MAX_ATTITUDE_DEG) {
        return Err(Error::invalid(format!(
            "attitude angle {a} deg exceeds +/-{MAX_ATTITUDE_DEG}"
        )));
    }
    if focal <= 0.0 {
        return Err(Error::invalid(format!("focal length must be positive, got {focal}")));
    }
    let (cx, cy) = principal_point;
    let k = [[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]];
    let k_inv = [
        [1.0 / focal, 0.0, -cx / focal],
        [0.0, 1.0 / focal, -cy / focal],
        [0.0, 0.0, 1.0],
    ];
    let r = rotation_matrix(attitude_deg);
    let t = [
        [1.0, 0.0, translation.0],
        [0.0, 1.0, translation.1],
        [0.0, 0.0, 1.0],
    ];
    Homography::from_matrix(matmul(&t, &matmul(&k, &matmul(&r, &k_inv))))
}

/// Inverse-mapped bilinear warp: `out(p) = img(h^-1 * p)`.
///
/// Pixels whose pre-image falls outside `img` receive `fill` and are marked
/// invalid; pixels reading any invalid source tap are marked invalid as well.
pub fn warp(img: &ImageF, h: &Homography, out_size: (usize, usize), fill: f64) -> Result<ImageF> {
    let (oh, ow) = out_size;
    if oh == 0 || ow == 0 {
        return Err(Error::invalid(format!("output size must be positive, got {oh}x{ow}")));
    }
    let inv = h.inverse()?;
    resample(img, oh, ow, fill, |x, y| inv.apply(x, y))
}

/// Bilinear window of `size = (H0, W0)` whose top-left pixel sits at `origin = (x, y)`.
///
/// Fractional origins are resampled; pixels outside the source take the
/// source mean and are marked invalid.
pub fn crop(img: &ImageF, origin: (f64, f64), size: (usize, usize)) -> Result<ImageF> {
    let (oh, ow) = size;
    if oh == 0 || ow == 0 {
        return Err(Error::invalid(format!("crop size must be positive, got {oh}x{ow}")));
    }
    if !origin.0.is_finite() || !origin.1.is_finite() {
        return Err(Error::invalid("crop origin must be finite"));
    }
    let fill = img.mean();
    resample(img, oh, ow, fill, |x, y| (x + origin.0, y + origin.1))
}

fn resample(
    img: &ImageF,
    oh: usize,
    ow: usize,
    fill: f64,
    map: impl Fn(f64, f64) -> (f64, f64) + Sync,
) -> Result<ImageF> {
    let mut data = vec![0.0; oh * ow];
    let mut valid = vec![true; oh * ow];
    data.par_chunks_mut(ow)
        .zip(valid.par_chunks_mut(ow))
        .enumerate()
        .for_each(|(y, (row, vrow))| {
            for x in 0..ow {
                let (sx, sy) = map(x as f64, y as f64);
                match img.sample_bilinear(sx, sy) {
                    Some((v, ok)) => {
                        row[x] = v;
                        vrow[x] = ok;
                    }
                    None => {
                        row[x] = fill;
                        vrow[x] = false;
                    }
                }
            }
        });
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("resampled pixel {i}")));
    }
    let keep_mask = img.valid.is_some() || valid.iter().any(|&v| !v);
    Ok(ImageF {
        height: oh,
        width: ow,
        data,
        valid: keep_mask.then_some(valid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ramp(h: usize, w: usize) -> ImageF {
        ImageF::from_fn(h, w, |x, y| 3.0 * x as f64 + 7.0 * y as f64 + 1.0)
    }

    #[test]
    fn zero_motion_is_identity() {
        let h = build_homography([0.0; 3], (0.0, 0.0), 1024.0, (512.0, 512.0)).unwrap();
        assert_eq!(h, Homography::identity());
    }

    #[test]
    fn pure_translation_moves_origin() {
        let h = build_homography([0.0; 3], (3.0, 4.0), 1024.0, (512.0, 512.0)).unwrap();
        assert_eq!(h.apply(0.0, 0.0), (3.0, 4.0));
    }

    /// Point-wise route: back-project, rotate axis by axis, re-project, shift.
    fn oracle_point(att: [f64; 3], t: (f64, f64), f: f64, pp: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let [a, b, g] = att.map(f64::to_radians);
        let mut v = [(p.0 - pp.0) / f, (p.1 - pp.1) / f, 1.0];
        // x-axis
        v = [v[0], a.cos() * v[1] - a.sin() * v[2], a.sin() * v[1] + a.cos() * v[2]];
        // y-axis
        v = [b.cos() * v[0] + b.sin() * v[2], v[1], -b.sin() * v[0] + b.cos() * v[2]];
        // z-axis
        v = [g.cos() * v[0] - g.sin() * v[1], g.sin() * v[0] + g.cos() * v[1], v[2]];
        (f * v[0] / v[2] + pp.0 + t.0, f * v[1] / v[2] + pp.1 + t.1)
    }

    #[test]
    fn corners_match_pointwise_oracle() {
        let att = [1.0, 2.0, 3.0];
        let t = (5.0, -5.0);
        let (f, pp) = (1024.0, (512.0, 512.0));
        let h = build_homography(att, t, f, pp).unwrap();
        for p in [(0.0, 0.0), (1023.0, 0.0), (0.0, 1023.0), (1023.0, 1023.0)] {
            let (x, y) = h.apply(p.0, p.1);
            let (ox, oy) = oracle_point(att, t, f, pp, p);
            assert!((x - ox).abs() < 1e-9 && (y - oy).abs() < 1e-9, "{p:?}: {x},{y} vs {ox},{oy}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            build_homography([f64::NAN, 0.0, 0.0], (0.0, 0.0), 10.0, (0.0, 0.0)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(build_homography([50.0, 0.0, 0.0], (0.0, 0.0), 10.0, (0.0, 0.0)).is_err());
        assert!(build_homography([0.0; 3], (0.0, 0.0), 0.0, (0.0, 0.0)).is_err());
        assert!(matches!(
            Homography::from_matrix([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]),
            Err(Error::DegenerateHomography(_))
        ));
    }

    #[test]
    fn composition_is_associative_on_points() {
        let mut rng = crate::rng::stream_rng(3, 0);
        for _ in 0..50 {
            let mut draw = || {
                let att = [0; 3].map(|_| rng.gen_range(-5.0..5.0));
                build_homography(att, (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)), 800.0, (400.0, 300.0))
                    .unwrap()
            };
            let (h1, h2) = (draw(), draw());
            let p = (rng.gen_range(0.0..800.0), rng.gen_range(0.0..600.0));
            let a = (h2 * h1).apply(p.0, p.1);
            let q = h1.apply(p.0, p.1);
            let b = h2.apply(q.0, q.1);
            assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
            assert_eq!(h1.then(&h2), h2 * h1);
        }
    }

    #[test]
    fn identity_warp_is_exact() {
        let mut rng = crate::rng::stream_rng(4, 0);
        let img = ImageF::from_fn(17, 23, |_, _| rng.gen_range(0.0..100.0));
        let out = warp(&img, &Homography::identity(), (17, 23), -1.0).unwrap();
        assert_eq!(out.data(), img.data());
        assert!(out.valid_mask().is_none());

        let masked = img.clone().with_valid_mask((0..17 * 23).map(|i| i % 5 != 0).collect()).unwrap();
        let out = warp(&masked, &Homography::identity(), (17, 23), -1.0).unwrap();
        assert_eq!(out.data(), masked.data());
        assert!(out.same_validity(&masked));
    }

    #[test]
    fn integer_translation_shifts_exactly() {
        let img = ramp(10, 12);
        let out = warp(&img, &Homography::translation(2.0, 0.0), (10, 12), 0.0).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                if x >= 2 {
                    assert_eq!(out.get(x, y), img.get(x - 2, y));
                    assert!(out.is_valid(x, y));
                } else {
                    assert!(!out.is_valid(x, y));
                    assert_eq!(out.get(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn singular_warp_fails() {
        let img = ramp(4, 4);
        let h = Homography { m: [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
        assert!(matches!(warp(&img, &h, (4, 4), 0.0), Err(Error::DegenerateHomography(_))));
    }

    #[test]
    fn crop_full_and_integer() {
        let img = ramp(40, 50);
        let full = crop(&img, (0.0, 0.0), (40, 50)).unwrap();
        assert_eq!(full.data(), img.data());
        let sub = crop(&img, (10.0, 20.0), (5, 7)).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(sub.get(x, y), img.get(x + 10, y + 20));
            }
        }
        assert!(crop(&img, (0.0, 0.0), (0, 3)).is_err());
    }

    #[test]
    fn fractional_crop_on_ramp_is_analytic() {
        let img = ramp(40, 50);
        let sub = crop(&img, (10.5, 20.0), (8, 8)).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expect = 3.0 * (x as f64 + 10.5) + 7.0 * (y as f64 + 20.0) + 1.0;
                assert!((sub.get(x, y) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn crop_outside_uses_source_mean() {
        let img = ramp(4, 4);
        let out = crop(&img, (2.0, 0.0), (4, 4)).unwrap();
        assert!(!out.is_valid(3, 0));
        assert_eq!(out.get(3, 0), img.mean());
        assert!(out.is_valid(1, 0));
    }

    #[test]
    fn invalid_taps_propagate() {
        let img = ramp(6, 6)
            .with_valid_mask((0..36).map(|i| i != 14).collect())
            .unwrap();
        // pixel (2,2) is invalid; a half-pixel shift reads it from two outputs
        let out = warp(&img, &Homography::translation(0.5, 0.0), (6, 6), 0.0).unwrap();
        assert!(!out.is_valid(2, 2));
        assert!(!out.is_valid(3, 2));
        assert!(out.is_valid(4, 2));
    }

    #[test]
    fn image_rejects_bad_data() {
        assert!(ImageF::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageF::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(ImageF::new(0, 1, vec![]).is_err());
    }
}

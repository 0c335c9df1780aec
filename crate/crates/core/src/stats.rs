//! Target SCR, background complexity, and attribute binning.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imggeo::ImageF;

/// Local background margin around the target bounding box, in pixels.
pub const DEFAULT_NEIGHBORHOOD: usize = 20;

/// Axis-aligned pixel box `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
}

impl PixelBox {
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w as i64 && y < self.y + self.h as i64
    }

    pub fn contains_point(&self, p: (f64, f64)) -> bool {
        p.0 >= self.x as f64 - 0.5
            && p.1 >= self.y as f64 - 0.5
            && p.0 <= (self.x + self.w as i64) as f64 - 0.5
            && p.1 <= (self.y + self.h as i64) as f64 - 0.5
    }

    pub fn expand(&self, by: usize) -> PixelBox {
        PixelBox {
            x: self.x - by as i64,
            y: self.y - by as i64,
            w: self.w + 2 * by,
            h: self.h + 2 * by,
        }
    }

    /// Intersection with `[0, width) x [0, height)`.
    pub fn clip(&self, height: usize, width: usize) -> Option<PixelBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w as i64).min(width as i64);
        let y1 = (self.y + self.h as i64).min(height as i64);
        (x1 > x0 && y1 > y0).then(|| PixelBox {
            x: x0,
            y: y0,
            w: (x1 - x0) as usize,
            h: (y1 - y0) as usize,
        })
    }

    pub fn bounding(points: impl IntoIterator<Item = (i64, i64)>) -> Option<PixelBox> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.0, first.1, first.0, first.1);
        for (x, y) in it {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Some(PixelBox {
            x: x0,
            y: y0,
            w: (x1 - x0 + 1) as usize,
            h: (y1 - y0 + 1) as usize,
        })
    }
}

/// Binary mask patch placed at `origin` in frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPatch {
    pub origin: (i64, i64),
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl MaskPatch {
    pub fn from_points(points: &[(i64, i64)]) -> Option<MaskPatch> {
        let b = PixelBox::bounding(points.iter().copied())?;
        let mut bits = vec![false; b.w * b.h];
        for &(x, y) in points {
            bits[(y - b.y) as usize * b.w + (x - b.x) as usize] = true;
        }
        Some(MaskPatch {
            origin: (b.x, b.y),
            width: b.w,
            height: b.h,
            bits,
        })
    }

    pub fn points(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| {
            (
                self.origin.0 + (i % self.width) as i64,
                self.origin.1 + (i / self.width) as i64,
            )
        })
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bbox(&self) -> Option<PixelBox> {
        PixelBox::bounding(self.points())
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        let (dx, dy) = (x - self.origin.0, y - self.origin.1);
        dx >= 0
            && dy >= 0
            && (dx as usize) < self.width
            && (dy as usize) < self.height
            && self.bits[dy as usize * self.width + dx as usize]
    }

    /// Keeps only the pixels inside a `height x width` frame.
    pub fn clip(&self, height: usize, width: usize) -> Option<MaskPatch> {
        let pts: Vec<(i64, i64)> = self
            .points()
            .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height)
            .collect();
        MaskPatch::from_points(&pts)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Local background pixels of `mask`: its bounding box grown by `d`, minus the mask, valid pixels only.
pub fn local_background(frame: &ImageF, mask: &MaskPatch, d: usize) -> Result<Vec<f64>> {
    let (h, w) = (frame.height(), frame.width());
    let bbox = mask
        .bbox()
        .ok_or_else(|| Error::invalid("target mask is empty"))?;
    if bbox.clip(h, w) != Some(bbox) {
        return Err(Error::invalid(format!("target mask {bbox:?} extends outside the {w}x{h} frame")));
    }
    let hood = bbox.expand(d).clip(h, w).expect("box inside frame");
    let mut out = Vec::with_capacity(hood.w * hood.h);
    for y in hood.y..hood.y + hood.h as i64 {
        for x in hood.x..hood.x + hood.w as i64 {
            let (ux, uy) = (x as usize, y as usize);
            if !mask.contains(x, y) && frame.is_valid(ux, uy) {
                out.push(frame.get(ux, uy));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("target neighbourhood holds no valid background pixels"));
    }
    Ok(out)
}

/// Signal-to-clutter ratio `|mu_t - mu_b| / sigma_b`.
///
/// Returns `+inf` (with a warning) when the background is flat and the
/// target differs from it, and 0 when both are equal.
pub fn scr(frame: &ImageF, mask: &MaskPatch, d: usize) -> Result<f64> {
    let bg = local_background(frame, mask, d)?;
    let target: Vec<f64> = mask
        .points()
        .map(|(x, y)| frame.get(x as usize, y as usize))
        .collect();
    let mu_t = target.iter().sum::<f64>() / target.len() as f64;
    let (mu_b, sigma_b) = mean_std(&bg);
    let num = (mu_t - mu_b).abs();
    if sigma_b == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        log::warn!("flat local background: SCR is infinite");
        return Ok(f64::INFINITY);
    }
    Ok(num / sigma_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityLevel {
    Easy,
    Medium,
    Complex,
    Extreme,
}

impl ComplexityLevel {
    /// Bins `[0, 200)`, `[200, 1000)`, `[1000, 2000)`, `[2000, inf)`; negative values count as easy.
    pub fn from_value(c: f64) -> Self {
        if c < 200.0 {
            ComplexityLevel::Easy
        } else if c < 1000.0 {
            ComplexityLevel::Medium
        } else if c < 2000.0 {
            ComplexityLevel::Complex
        } else {
            ComplexityLevel::Extreme
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub level: ComplexityLevel,
}

/// 256-level histogram of the valid pixels after per-frame min-max scaling and flooring.
pub fn gray_histogram(img: &ImageF) -> [u64; 256] {
    let mut hist = [0u64; 256];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let pixels = || {
        img.data()
            .iter()
            .enumerate()
            .filter(|(i, _)| img.valid_mask().is_none_or(|m| m[*i]))
            .map(|(_, v)| *v)
    };
    for v in pixels() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    for v in pixels() {
        let s = if range > 0.0 {
            (((v - lo) / range) * 255.0).floor().clamp(0.0, 255.0) as usize
        } else {
            0
        };
        hist[s] += 1;
    }
    hist
}

/// `C_t = -sum_s (s - mean_s) p_s ln p_s` over the 256-level histogram.
pub fn frame_complexity(img: &ImageF) -> f64 {
    let hist = gray_histogram(img);
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let p: Vec<f64> = hist.iter().map(|&c| c as f64 / n as f64).collect();
    let mean: f64 = p.iter().enumerate().map(|(s, ps)| s as f64 * ps).sum();
    let sum: f64 = p
        .iter()
        .enumerate()
        .filter(|(_, ps)| **ps > 0.0)
        .map(|(s, ps)| (s as f64 - mean) * ps * ps.ln())
        .sum();
    0.0 - sum
}

/// Per-frame complexity, its mean over the sequence, and the level.
pub fn background_complexity(frames: &[ImageF]) -> Result<ComplexityReport> {
    if frames.is_empty() {
        return Err(Error::invalid("background complexity needs at least one frame"));
    }
    let per_frame: Vec<f64> = frames.par_iter().map(frame_complexity).collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(ComplexityReport {
        per_frame,
        mean,
        level: ComplexityLevel::from_value(mean),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedLevel {
    Slow,
    Medium,
    Fast,
    VeryFast,
}

impl SpeedLevel {
    /// Bins `[0, 1/10)`, `[1/10, 1/3)`, `[1/3, 1)`, `[1, inf)` pixels per frame.
    pub fn from_speed(v: f64) -> Self {
        if v < 0.1 {
            SpeedLevel::Slow
        } else if v < 1.0 / 3.0 {
            SpeedLevel::Medium
        } else if v < 1.0 {
            SpeedLevel::Fast
        } else {
            SpeedLevel::VeryFast
        }
    }
}

/// Mean per-frame displacement along a path.
pub fn mean_speed(path: &[(f64, f64)]) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::invalid("speed needs a path of at least 2 points"));
    }
    let total: f64 = path
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum();
    Ok(total / (path.len() - 1) as f64)
}

pub fn speed_level(path: &[(f64, f64)]) -> Result<SpeedLevel> {
    mean_speed(path).map(SpeedLevel::from_speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShapeBin {
    S0,
    S1,
    S2,
    S3,
    S4,
}

impl ShapeBin {
    /// Eccentricity bins `[0,.2), [.2,.4), [.4,.6), [.6,.8), [.8,1]`.
    pub fn from_eccentricity(e: f64) -> Self {
        if e < 0.2 {
            ShapeBin::S0
        } else if e < 0.4 {
            ShapeBin::S1
        } else if e < 0.6 {
            ShapeBin::S2
        } else if e < 0.8 {
            ShapeBin::S3
        } else {
            ShapeBin::S4
        }
    }
}

/// `sqrt(1 - (w/h)^2)` with the axes ordered so that `h >= w`.
pub fn eccentricity(h: f64, w: f64) -> f64 {
    let (a, b) = (h.max(w), h.min(w));
    if a <= 0.0 {
        return 0.0;
    }
    (1.0 - (b / a).powi(2)).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrLevel {
    /// `[0, 3)`
    Dim,
    /// `[3, 6)`
    Low,
    /// `[6, 10)`
    Medium,
    /// `[10, inf]`
    High,
}

impl ScrLevel {
    pub fn from_scr(v: f64) -> Self {
        if v < 3.0 {
            ScrLevel::Dim
        } else if v < 6.0 {
            ScrLevel::Low
        } else if v < 10.0 {
            ScrLevel::Medium
        } else {
            ScrLevel::High
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAttributes {
    pub id: u32,
    #[serde(with = "crate::stats::finite_or_null")]
    pub scr: f64,
    pub scr_level: ScrLevel,
    pub speed: f64,
    pub speed_level: SpeedLevel,
    pub swerves: usize,
    pub mean_area: f64,
    pub eccentricity: f64,
    pub shape_bin: ShapeBin,
}

/// Counts of targets, annotations and sequences per bin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub sequences: usize,
    pub targets: usize,
    pub annotations: usize,
    pub scr_levels: BTreeMap<ScrLevel, usize>,
    pub speed_levels: BTreeMap<SpeedLevel, usize>,
    pub swerves: BTreeMap<usize, usize>,
    pub shape_bins: BTreeMap<ShapeBin, usize>,
    pub complexity_levels: BTreeMap<ComplexityLevel, usize>,
    pub background_speed_levels: BTreeMap<SpeedLevel, usize>,
    pub fraction_scr_below_3: f64,
    pub mean_annotation_area: f64,
}

impl BinSummary {
    pub fn add_sequence(&mut self, complexity: ComplexityLevel, background_speed: SpeedLevel) {
        self.sequences += 1;
        *self.complexity_levels.entry(complexity).or_default() += 1;
        *self.background_speed_levels.entry(background_speed).or_default() += 1;
    }

    pub fn add_target(&mut self, t: &TargetAttributes) {
        self.targets += 1;
        *self.scr_levels.entry(t.scr_level).or_default() += 1;
        *self.speed_levels.entry(t.speed_level).or_default() += 1;
        *self.swerves.entry(t.swerves).or_default() += 1;
    }

    /// Records one per-frame annotation of `area` pixels and eccentricity `e`.
    pub fn add_annotation(&mut self, area: usize, e: f64) {
        let n = self.annotations as f64;
        self.mean_annotation_area = (self.mean_annotation_area * n + area as f64) / (n + 1.0);
        self.annotations += 1;
        *self.shape_bins.entry(ShapeBin::from_eccentricity(e)).or_default() += 1;
    }

    pub fn finish(&mut self) {
        let dim = self.scr_levels.get(&ScrLevel::Dim).copied().unwrap_or(0);
        self.fraction_scr_below_3 = if self.targets == 0 {
            0.0
        } else {
            dim as f64 / self.targets as f64
        };
    }
}

/// Serializes non-finite values as `null` and reads `null` back as `+inf`.
pub mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn square_mask(x: i64, y: i64, n: i64) -> MaskPatch {
        let pts: Vec<(i64, i64)> = (y..y + n).flat_map(|yy| (x..x + n).map(move |xx| (xx, yy))).collect();
        MaskPatch::from_points(&pts).unwrap()
    }

    #[test]
    fn scr_substitution() {
        // checkerboard 90/110 has mean 100 and population std 10
        let mut img = ImageF::from_fn(64, 64, |x, y| if (x + y) % 2 == 0 { 90.0 } else { 110.0 });
        let mask = square_mask(30, 30, 2);
        for (x, y) in mask.points() {
            img.set(x as usize, y as usize, 150.0);
        }
        assert!((scr(&img, &mask, 20).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn scr_zero_and_flat() {
        let img = ImageF::filled(40, 40, 7.0);
        assert_eq!(scr(&img, &square_mask(10, 10, 3), 20).unwrap(), 0.0);
        let mut img = img;
        img.set(10, 10, 9.0);
        assert_eq!(scr(&img, &square_mask(10, 10, 1), 20).unwrap(), f64::INFINITY);
    }

    #[test]
    fn scr_rejects_outside_mask() {
        let img = ImageF::filled(16, 16, 1.0);
        assert!(scr(&img, &square_mask(15, 15, 2), 20).is_err());
        let empty = MaskPatch {
            origin: (0, 0),
            width: 1,
            height: 1,
            bits: vec![false],
        };
        assert!(scr(&img, &empty, 20).is_err());
    }

    #[test]
    fn scr_matches_two_pass_oracle() {
        let mut rng = stream_rng(21, 0);
        for _ in 0..20 {
            let img = ImageF::from_fn(64, 64, |_, _| rng.gen_range(0.0..255.0));
            let (mx, my) = (rng.gen_range(0..60), rng.gen_range(0..60));
            let mask = square_mask(mx, my, rng.gen_range(1..=4).min(64 - mx.max(my)));
            let d = rng.gen_range(1..25);
            let b = mask.bbox().unwrap();
            let (x0, y0) = ((b.x - d as i64).max(0), (b.y - d as i64).max(0));
            let (x1, y1) = ((b.x + b.w as i64 + d as i64).min(64), (b.y + b.h as i64 + d as i64).min(64));
            let (mut ts, mut tn, mut bs, mut bn) = (0.0, 0.0, 0.0, 0.0);
            for y in 0..64 {
                for x in 0..64 {
                    let v = img.get(x as usize, y as usize);
                    if mask.contains(x, y) {
                        ts += v;
                        tn += 1.0;
                    } else if x >= x0 && x < x1 && y >= y0 && y < y1 {
                        bs += v;
                        bn += 1.0;
                    }
                }
            }
            let mb = bs / bn;
            let mut var = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    if !mask.contains(x, y) {
                        var += (img.get(x as usize, y as usize) - mb).powi(2);
                    }
                }
            }
            let want = (ts / tn - mb).abs() / (var / bn).sqrt();
            let got = scr(&img, &mask, d).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn scr_shift_and_scale() {
        let mut rng = stream_rng(22, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let base = ImageF::from_fn(48, 48, |_, _| noise.sample(&mut rng));
        let mask = square_mask(20, 20, 2);
        let with = |k: f64, c: f64| {
            let mut img = ImageF::from_fn(48, 48, |x, y| 100.0 + c + k * base.get(x, y));
            let (mu_b, _) = mean_std(&local_background(&img, &mask, 20).unwrap());
            for (x, y) in mask.points() {
                img.set(x as usize, y as usize, mu_b + 50.0);
            }
            scr(&img, &mask, 20).unwrap()
        };
        let s = with(1.0, 0.0);
        assert!((with(1.0, 37.5) - s).abs() < 1e-9);
        for k in [0.5, 2.0, 4.0] {
            assert!((with(k, 0.0) - s / k).abs() < 1e-9 * s);
        }
    }

    #[test]
    fn constant_image_has_zero_complexity() {
        let r = background_complexity(&[ImageF::filled(8, 8, 3.0)]).unwrap();
        assert_eq!(r.per_frame, vec![0.0]);
        assert_eq!(r.level, ComplexityLevel::Easy);
    }

    #[test]
    fn two_level_image_is_symmetric() {
        let img = ImageF::from_fn(8, 8, |x, _| if x < 4 { 0.0 } else { 255.0 });
        assert!(frame_complexity(&img).abs() < 1e-12);
    }

    #[test]
    fn complexity_matches_hand_histogram() {
        // three levels 0, 127, 255 with masses 1/2, 1/4, 1/4
        let img = ImageF::new(1, 4, vec![0.0, 0.0, 127.5, 255.0]).unwrap();
        let p = [0.5f64, 0.25, 0.25];
        let s = [0.0f64, 127.0, 255.0];
        let mean: f64 = p.iter().zip(&s).map(|(a, b)| a * b).sum();
        let want: f64 = -p.iter().zip(&s).map(|(pp, ss)| (ss - mean) * pp * pp.ln()).sum::<f64>();
        assert!((frame_complexity(&img) - want).abs() < 1e-9);
    }

    #[test]
    fn complexity_uses_valid_pixels_only() {
        let img = ImageF::new(1, 4, vec![0.0, 255.0, 1e6, 1e6])
            .unwrap()
            .with_valid_mask(vec![true, true, false, false])
            .unwrap();
        assert!(frame_complexity(&img).abs() < 1e-12);
        assert!(background_complexity(&[]).is_err());
    }

    #[test]
    fn complexity_levels_are_half_open() {
        assert_eq!(ComplexityLevel::from_value(-5.0), ComplexityLevel::Easy);
        assert_eq!(ComplexityLevel::from_value(199.999), ComplexityLevel::Easy);
        assert_eq!(ComplexityLevel::from_value(200.0), ComplexityLevel::Medium);
        assert_eq!(ComplexityLevel::from_value(1000.0), ComplexityLevel::Complex);
        assert_eq!(ComplexityLevel::from_value(2000.0), ComplexityLevel::Extreme);
        assert_eq!(ComplexityLevel::from_value(5596.0), ComplexityLevel::Extreme);
    }

    #[test]
    fn speed_levels() {
        assert_eq!(speed_level(&[(1.0, 1.0); 10]).unwrap(), SpeedLevel::Slow);
        let path: Vec<(f64, f64)> = (0..20).map(|i| (0.5 * i as f64, 0.0)).collect();
        assert_eq!(speed_level(&path).unwrap(), SpeedLevel::Fast);
        assert_eq!(SpeedLevel::from_speed(0.1), SpeedLevel::Medium);
        assert_eq!(SpeedLevel::from_speed(1.0 / 3.0), SpeedLevel::Fast);
        assert_eq!(SpeedLevel::from_speed(1.0), SpeedLevel::VeryFast);
        assert!(mean_speed(&[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn mean_speed_matches_oracle() {
        let mut rng = stream_rng(23, 0);
        let path: Vec<(f64, f64)> = (0..50).map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect();
        let mut total = 0.0;
        for i in 1..path.len() {
            total += (path[i].0 - path[i - 1].0).hypot(path[i].1 - path[i - 1].1);
        }
        assert!((mean_speed(&path).unwrap() - total / 49.0).abs() < 1e-12);
    }

    #[test]
    fn shape_bins() {
        assert_eq!(eccentricity(4.0, 4.0), 0.0);
        assert!((eccentricity(5.0, 3.0) - 0.8).abs() < 1e-12);
        assert_eq!(ShapeBin::from_eccentricity(0.0), ShapeBin::S0);
        assert_eq!(ShapeBin::from_eccentricity(0.2), ShapeBin::S1);
        assert_eq!(ShapeBin::from_eccentricity(0.8), ShapeBin::S4);
        assert_eq!(ShapeBin::from_eccentricity(1.0), ShapeBin::S4);
    }

    #[test]
    fn infinite_scr_round_trips_through_json() {
        let t = TargetAttributes {
            id: 1,
            scr: f64::INFINITY,
            scr_level: ScrLevel::High,
            speed: 0.0,
            speed_level: SpeedLevel::Slow,
            swerves: 0,
            mean_area: 1.0,
            eccentricity: 0.0,
            shape_bin: ShapeBin::S0,
        };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"scr\":null"));
        let back: TargetAttributes = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}

//! Gaussian target templates, appearance interpolation, and trajectories.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imggeo::{Homography, ImageF};
use crate::motion::{curve_sample, curve_sample_1d, random_curve, CurveSpec};
use crate::rng::{random_sign, uniform, uniform_int};

/// Render support threshold (fraction of peak) for target templates.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.05;
/// Annotation mask threshold (fraction of peak).
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.75;

/// Anisotropic Gaussian appearance. The major axis `h` lies along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub h: f64,
    pub w: f64,
    pub sigma: f64,
}

impl GaussianSpec {
    pub fn new(h: f64, w: f64, sigma: f64) -> Result<Self> {
        let s = Self { h, w, sigma };
        s.validate()?;
        Ok(s)
    }

    /// Orders the two axis lengths so that `h >= w`.
    pub fn oriented(a: f64, b: f64, sigma: f64) -> Result<Self> {
        Self::new(a.max(b), a.min(b), sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.h, self.w, self.sigma].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("gaussian parameters must be finite"));
        }
        if !(self.w > 0.0 && self.h >= self.w) {
            return Err(Error::invalid(format!(
                "gaussian axes must satisfy h >= w > 0, got h={} w={}",
                self.h, self.w
            )));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::invalid(format!("gaussian sigma must lie in (0, 1], got {}", self.sigma)));
        }
        Ok(())
    }

    /// Standard deviations along x and y.
    pub fn std_devs(&self) -> (f64, f64) {
        (self.sigma * self.h / 2.0, self.sigma * self.w / 2.0)
    }

    pub fn value(&self, du: f64, dv: f64) -> f64 {
        let (sx, sy) = self.std_devs();
        (-0.5 * ((du / sx).powi(2) + (dv / sy).powi(2))).exp()
    }

    /// `sqrt(1 - (w/h)^2)`.
    pub fn eccentricity(&self) -> f64 {
        let r = self.w / self.h;
        (1.0 - r * r).max(0.0).sqrt()
    }
}

/// Odd-sized template with its peak (exactly 1) at the centre pixel.
#[derive(Debug, Clone)]
pub struct Template {
    pub image: ImageF,
    /// Half extents `(rx, ry)`; the image is `(2ry+1) x (2rx+1)`.
    pub radius: (usize, usize),
}

impl Template {
    pub fn value(&self, dx: i64, dy: i64) -> f64 {
        let (rx, ry) = (self.radius.0 as i64, self.radius.1 as i64);
        if dx.abs() > rx || dy.abs() > ry {
            return 0.0;
        }
        self.image.get((dx + rx) as usize, (dy + ry) as usize)
    }

    /// Offsets `(dx, dy)` of all non-zero template pixels.
    pub fn support(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let (rx, ry) = (self.radius.0 as i64, self.radius.1 as i64);
        (-ry..=ry)
            .flat_map(move |dy| (-rx..=rx).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| self.value(dx, dy) > 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.image.data().iter().sum()
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Samples `spec` on the integer grid around its centre, zeroing values below `support_threshold`.
pub fn render_gaussian(spec: &GaussianSpec, support_threshold: f64) -> Result<Template> {
    spec.validate()?;
    check_threshold(support_threshold)?;
    let (sx, sy) = spec.std_devs();
    let reach = (-2.0 * support_threshold.ln()).sqrt();
    let rx = (sx * reach).floor() as usize;
    let ry = (sy * reach).floor() as usize;
    let image = ImageF::from_fn(2 * ry + 1, 2 * rx + 1, |x, y| {
        if x == rx && y == ry {
            return 1.0;
        }
        let v = spec.value(x as f64 - rx as f64, y as f64 - ry as f64);
        if v >= support_threshold {
            v
        } else {
            0.0
        }
    });
    Ok(Template {
        image,
        radius: (rx, ry),
    })
}

/// Integer offsets where the template reaches `threshold` of its peak.
pub fn mask_offsets(spec: &GaussianSpec, threshold: f64) -> Result<Vec<(i64, i64)>> {
    Ok(render_gaussian(spec, threshold)?.support().collect())
}

/// Default ranges for appearance draws and clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppearanceRanges {
    pub h: (f64, f64),
    pub w: (f64, f64),
    pub sigma: (f64, f64),
    pub keys: (u32, u32),
    pub order: (f64, f64),
}

impl Default for AppearanceRanges {
    fn default() -> Self {
        Self {
            h: (1.0, 9.0),
            w: (1.0, 9.0),
            sigma: (0.1, 1.0),
            keys: (2, 5),
            order: (1.0, 3.0),
        }
    }
}

impl AppearanceRanges {
    fn clamp(&self, g: GaussianSpec) -> GaussianSpec {
        let (a, b) = (g.h.max(g.w), g.h.min(g.w));
        GaussianSpec {
            h: a.clamp(self.h.0, self.h.1),
            w: b.clamp(self.w.0, self.w.1).min(a.clamp(self.h.0, self.h.1)),
            sigma: g.sigma.clamp(self.sigma.0, self.sigma.1),
        }
    }

    pub fn draw_spec(&self, rng: &mut impl Rng) -> Result<GaussianSpec> {
        let a = uniform(rng, self.h.0, self.h.1);
        let b = uniform(rng, self.w.0, self.w.1);
        let s = uniform(rng, self.sigma.0, self.sigma.1);
        GaussianSpec::oriented(a, b, s)
    }
}

/// Appearance at a key frame (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyAppearance {
    pub frame: usize,
    pub spec: GaussianSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bend {
    pub order: f64,
    pub direction: i8,
}

impl Bend {
    pub const LINEAR: Bend = Bend {
        order: 1.0,
        direction: 1,
    };

    pub fn draw(rng: &mut impl Rng, order: (f64, f64)) -> Self {
        Bend {
            order: uniform(rng, order.0, order.1),
            direction: random_sign(rng) as i8,
        }
    }
}

/// Key appearances plus the curve bend of (h, w, sigma) between consecutive keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearancePlan {
    pub keys: Vec<KeyAppearance>,
    pub bends: Vec<[Bend; 3]>,
}

fn validate_keys(keys: &[KeyAppearance], frames: usize) -> Result<()> {
    if keys.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 key appearances, got {}", keys.len())));
    }
    if keys[0].frame != 1 || keys[keys.len() - 1].frame != frames {
        return Err(Error::invalid(format!(
            "key appearances must start at frame 1 and end at frame {frames}"
        )));
    }
    if keys.windows(2).any(|w| w[1].frame <= w[0].frame) {
        return Err(Error::invalid("key frames must be strictly increasing"));
    }
    for k in keys {
        k.spec.validate()?;
    }
    Ok(())
}

/// Draws `K` key appearances with first key at frame 1 and last at frame `frames`.
pub fn draw_keys(rng: &mut impl Rng, frames: usize, ranges: &AppearanceRanges) -> Result<Vec<KeyAppearance>> {
    if frames < 2 {
        return Err(Error::invalid("appearance needs at least 2 frames"));
    }
    let k = (uniform_int(rng, ranges.keys.0.max(2), ranges.keys.1.max(2)) as usize).min(frames);
    let mut inner: Vec<usize> = sample(rng, frames - 2, k - 2).into_iter().map(|i| i + 2).collect();
    inner.sort_unstable();
    let mut key_frames = vec![1];
    key_frames.extend(inner);
    key_frames.push(frames);
    key_frames
        .into_iter()
        .map(|frame| {
            Ok(KeyAppearance {
                frame,
                spec: ranges.draw_spec(rng)?,
            })
        })
        .collect()
}

/// Per-frame appearance from a plan: each parameter follows its own curve between keys.
pub fn interpolate_plan(plan: &AppearancePlan, frames: usize, ranges: &AppearanceRanges) -> Result<Vec<GaussianSpec>> {
    let keys = &plan.keys;
    validate_keys(keys, frames)?;
    if plan.bends.len() != keys.len() - 1 {
        return Err(Error::invalid("appearance plan needs one bend per key interval"));
    }
    let mut out = Vec::with_capacity(frames);
    for (i, (pair, bends)) in keys.windows(2).zip(&plan.bends).enumerate() {
        let n = pair[1].frame - pair[0].frame + 1;
        let (a, b) = (pair[0].spec, pair[1].spec);
        let param = |x: f64, y: f64, bend: &Bend| curve_sample_1d(x, y, bend.order, bend.direction, n);
        let hs = param(a.h, b.h, &bends[0])?;
        let ws = param(a.w, b.w, &bends[1])?;
        let ss = param(a.sigma, b.sigma, &bends[2])?;
        let skip = usize::from(i > 0);
        for j in skip..n {
            out.push(ranges.clamp(GaussianSpec {
                h: hs[j],
                w: ws[j],
                sigma: ss[j],
            }));
        }
    }
    for (k, spec) in keys.iter().map(|k| (k.frame - 1, k.spec)) {
        out[k] = spec;
    }
    Ok(out)
}

/// Per-frame appearance from key appearances, drawing the curve bends from `rng`.
pub fn interpolate_appearance(
    keys: &[KeyAppearance],
    frames: usize,
    rng: &mut impl Rng,
    ranges: &AppearanceRanges,
) -> Result<Vec<GaussianSpec>> {
    validate_keys(keys, frames)?;
    let bends = (1..keys.len())
        .map(|_| [(); 3].map(|_| Bend::draw(rng, ranges.order)))
        .collect();
    interpolate_plan(
        &AppearancePlan {
            keys: keys.to_vec(),
            bends,
        },
        frames,
        ranges,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Chord speed of each segment in pixels per frame.
    pub speed_range: (f64, f64),
    pub order_range: (f64, f64),
    /// Start points keep this fraction of the field of view away from its borders.
    pub start_margin: f64,
    pub smooth_window: usize,
    pub max_swerves: u32,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            speed_range: (0.0, 1.0),
            order_range: (1.0, 3.0),
            start_margin: 0.1,
            smooth_window: 5,
            max_swerves: 2,
        }
    }
}

/// Trajectory recipe in the frame-1 reference.
///
/// Segment `k` covers frames `junctions[k]..=junctions[k + 1]` (0-based), so
/// consecutive segments share their junction frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub segments: Vec<CurveSpec>,
    pub junctions: Vec<usize>,
    pub smooth_window: usize,
}

impl TrajectoryPlan {
    pub fn swerves(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }

    pub fn frames(&self) -> usize {
        self.junctions.last().map_or(0, |j| j + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.junctions.len() != self.segments.len() + 1 {
            return Err(Error::invalid("trajectory plan needs S+1 segments and S+2 junctions"));
        }
        if self.junctions[0] != 0 || self.junctions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("trajectory junctions must start at 0 and increase strictly"));
        }
        if self.segments.windows(2).any(|w| w[0].end != w[1].start) {
            return Err(Error::invalid("trajectory segments must connect end to start"));
        }
        Ok(())
    }

    /// Segments joined end to end, before junction smoothing.
    pub fn raw(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.frames());
        for (k, seg) in self.segments.iter().enumerate() {
            let n = self.junctions[k + 1] - self.junctions[k] + 1;
            let pts = curve_sample(seg, n)?;
            let skip = usize::from(k > 0);
            out.extend_from_slice(&pts[skip..]);
        }
        Ok(out)
    }

    pub fn sample(&self) -> Result<Vec<(f64, f64)>> {
        let raw = self.raw()?;
        let inner = &self.junctions[1..self.junctions.len() - 1];
        Ok(smooth_junctions(&raw, inner, self.smooth_window))
    }
}

/// Centred moving average over `±window` frames around each junction.
///
/// The window shrinks symmetrically near the sequence ends so smoothed
/// values stay continuous with their unsmoothed neighbours.
pub fn smooth_junctions(raw: &[(f64, f64)], junctions: &[usize], window: usize) -> Vec<(f64, f64)> {
    let n = raw.len();
    let mut out = raw.to_vec();
    if window == 0 || n == 0 {
        return out;
    }
    for &j in junctions {
        let lo = j.saturating_sub(window);
        let hi = (j + window).min(n - 1);
        for (t, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let half = window.min(t).min(n - 1 - t);
            let span = &raw[t - half..=t + half];
            let m = span.len() as f64;
            *slot = (
                span.iter().map(|p| p.0).sum::<f64>() / m,
                span.iter().map(|p| p.1).sum::<f64>() / m,
            );
        }
    }
    out
}

impl TrajectoryConfig {
    /// Draws a plan with `swerves` direction changes starting inside `fov = (H0, W0)`.
    pub fn draw_plan(&self, rng: &mut impl Rng, frames: usize, swerves: usize, fov: (usize, usize)) -> Result<TrajectoryPlan> {
        let segs = swerves + 1;
        if frames < 2 * segs {
            return Err(Error::invalid(format!(
                "{frames} frames cannot hold {swerves} swerves (need at least {})",
                2 * segs
            )));
        }
        let steps = frames - 1;
        let base = steps as f64 / segs as f64;
        let mut junctions = vec![0usize];
        for k in 1..segs {
            let jitter = uniform(rng, -0.25, 0.25) * base;
            let j = (k as f64 * base + jitter).round() as usize;
            let lo = junctions[k - 1] + 1;
            let hi = steps - (segs - k);
            junctions.push(j.clamp(lo, hi));
        }
        junctions.push(steps);

        let (fh, fw) = (fov.0 as f64, fov.1 as f64);
        let m = self.start_margin.clamp(0.0, 0.49);
        let mut at = (uniform(rng, m * fw, (1.0 - m) * fw), uniform(rng, m * fh, (1.0 - m) * fh));
        let mut segments = Vec::with_capacity(segs);
        for k in 0..segs {
            let len = (junctions[k + 1] - junctions[k]) as f64;
            let speed = uniform(rng, self.speed_range.0, self.speed_range.1);
            let heading = uniform(rng, 0.0, std::f64::consts::TAU);
            let end = (at.0 + speed * len * heading.cos(), at.1 + speed * len * heading.sin());
            segments.push(random_curve(rng, at, end, self.order_range));
            at = end;
        }
        Ok(TrajectoryPlan {
            segments,
            junctions,
            smooth_window: self.smooth_window,
        })
    }
}

/// Random smoothed multi-segment trajectory in the frame-1 reference.
pub fn synthesize_trajectory(
    rng: &mut impl Rng,
    frames: usize,
    swerves: usize,
    fov: (usize, usize),
    smooth_window: usize,
    config: &TrajectoryConfig,
) -> Result<Vec<(f64, f64)>> {
    let cfg = TrajectoryConfig {
        smooth_window,
        ..*config
    };
    cfg.draw_plan(rng, frames, swerves, fov)?.sample()
}

/// Applies `H_t` to the frame-1 position at every frame `t`.
pub fn transform_to_current(traj: &[(f64, f64)], chain: &[Homography]) -> Result<Vec<(f64, f64)>> {
    if traj.len() != chain.len() {
        return Err(Error::invalid(format!(
            "trajectory has {} frames but homography chain has {}",
            traj.len(),
            chain.len()
        )));
    }
    traj.iter()
        .zip(chain)
        .map(|(p, h)| {
            if h.det().abs() < crate::imggeo::DET_EPS {
                return Err(Error::DegenerateHomography(format!("determinant {}", h.det())));
            }
            let q = h.apply(p.0, p.1);
            if q.0.is_finite() && q.1.is_finite() {
                Ok(q)
            } else {
                Err(Error::DegenerateHomography(format!("point ({}, {}) maps to infinity", p.0, p.1)))
            }
        })
        .collect()
}

/// Whether `p` lies in `[0, W0) x [0, H0)` expanded by `half = (rx, ry)`.
pub fn in_fov(p: (f64, f64), fov: (usize, usize), half: (f64, f64)) -> bool {
    p.0 >= -half.0 && p.0 < fov.1 as f64 + half.0 && p.1 >= -half.1 && p.1 < fov.0 as f64 + half.1
}

/// Accelerate sequence `a_t`: zero at frame 1, curve-shaped towards `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelPlan {
    pub end: f64,
    pub bend: Bend,
}

impl AccelPlan {
    pub const ZERO: AccelPlan = AccelPlan {
        end: 0.0,
        bend: Bend::LINEAR,
    };

    pub fn sample(&self, frames: usize) -> Result<Vec<f64>> {
        if frames == 1 {
            return Ok(vec![0.0]);
        }
        curve_sample_1d(0.0, self.end, self.bend.order, self.bend.direction, frames)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccelConfig {
    /// `a_T` is drawn from `[-range, range]`.
    pub range: f64,
    pub order_range: (f64, f64),
}

impl Default for AccelConfig {
    fn default() -> Self {
        Self {
            range: 0.2,
            order_range: (1.0, 3.0),
        }
    }
}

impl AccelConfig {
    pub fn draw(&self, rng: &mut impl Rng) -> AccelPlan {
        AccelPlan {
            end: uniform(rng, -self.range, self.range),
            bend: Bend::draw(rng, self.order_range),
        }
    }
}

/// Fully resolved recipe for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: u32,
    /// Requested SCR at frame 1.
    pub scr: f64,
    pub appearance: AppearancePlan,
    pub trajectory: TrajectoryPlan,
    pub accel: AccelPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetConfig {
    pub count_range: (u32, u32),
    pub scr_range: (f64, f64),
    pub appearance: AppearanceRanges,
    pub trajectory: TrajectoryConfig,
    pub accel: AccelConfig,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            count_range: (1, 6),
            scr_range: (1.0, 20.0),
            appearance: AppearanceRanges::default(),
            trajectory: TrajectoryConfig::default(),
            accel: AccelConfig::default(),
        }
    }
}

impl TargetConfig {
    pub fn draw_count(&self, rng: &mut impl Rng) -> u32 {
        uniform_int(rng, self.count_range.0, self.count_range.1)
    }

    /// Draws every parameter of target `id` for a sequence of `frames` frames.
    pub fn draw_target(&self, rng: &mut impl Rng, id: u32, frames: usize, fov: (usize, usize)) -> Result<TargetSpec> {
        let ranges = &self.appearance;
        let keys = draw_keys(rng, frames, ranges)?;
        let bends = (1..keys.len())
            .map(|_| [(); 3].map(|_| Bend::draw(rng, ranges.order)))
            .collect();
        let max_swerves = (frames / 2).saturating_sub(1).min(self.trajectory.max_swerves as usize);
        let swerves = uniform_int(rng, 0, max_swerves as u32) as usize;
        let trajectory = self.trajectory.draw_plan(rng, frames, swerves, fov)?;
        Ok(TargetSpec {
            id,
            scr: uniform(rng, self.scr_range.0, self.scr_range.1),
            appearance: AppearancePlan { keys, bends },
            trajectory,
            accel: self.accel.draw(rng),
        })
    }
}

/// Per-frame target state resolved against the platform motion.
#[derive(Debug, Clone)]
pub struct TargetTrack {
    pub id: u32,
    pub scr: f64,
    pub swerves: usize,
    pub appearance: Vec<GaussianSpec>,
    pub traj_ref1: Vec<(f64, f64)>,
    pub traj_cur: Vec<(f64, f64)>,
    pub accel: Vec<f64>,
}

impl TargetTrack {
    pub fn build(spec: &TargetSpec, frames: usize, chain: &[Homography], ranges: &AppearanceRanges) -> Result<Self> {
        if spec.trajectory.frames() != frames {
            return Err(Error::invalid(format!(
                "target {} trajectory covers {} frames, sequence has {frames}",
                spec.id,
                spec.trajectory.frames()
            )));
        }
        let traj_ref1 = spec.trajectory.sample()?;
        let traj_cur = transform_to_current(&traj_ref1, chain)?;
        Ok(Self {
            id: spec.id,
            scr: spec.scr,
            swerves: spec.trajectory.swerves(),
            appearance: interpolate_plan(&spec.appearance, frames, ranges)?,
            traj_ref1,
            traj_cur,
            accel: spec.accel.sample(frames)?,
        })
    }
}

//! Declarative sequence specs (TOML) and their resolution into fully drawn sequences.
//!
//! Every field is optional. Omitted parameters are drawn from the seeded RNG within
//! the default generation ranges; values outside those ranges are rejected unless
//! `allow_out_of_range` is set.
//!
//! ```toml
//! seed = 42
//! sequences = 2
//! frames = 104
//! fov = [1024, 1024]
//!
//! [background]
//! kind = "synthetic"
//!
//! [targets]
//! count = 2
//!
//! [[targets.list]]
//! scr = 10.0
//! swerves = 1
//! ```

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compose::{BackgroundSource, RenderConfig, ResolvedSequence, SyntheticBackground};
use crate::error::{Error, Result};
use crate::motion::{AttitudeConfig, AttitudeMode, AttitudeSchedule, CurveSpec, MotionSpec, TranslationConfig};
use crate::rng::{stream_rng, uniform, uniform_int, SimRng};
use crate::stats::DEFAULT_NEIGHBORHOOD;
use crate::target::{
    AccelConfig, AccelPlan, AppearancePlan, AppearanceRanges, Bend, GaussianSpec, KeyAppearance, TargetConfig, TargetSpec,
    TrajectoryConfig, TrajectoryPlan, DEFAULT_MASK_THRESHOLD, DEFAULT_SUPPORT_THRESHOLD,
};

pub const DEFAULT_FOV: (usize, usize) = (1024, 1024);
pub const FRAME_RANGE: (usize, usize) = (200, 1200);
pub const BLUR_KERNELS: [usize; 3] = [3, 5, 7];
pub const BLUR_SIGMA_RANGE: (f64, f64) = (0.2, 0.6);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSpec {
    pub seed: u64,
    /// Number of sequences; sequence `i` draws from RNG stream `i`.
    pub sequences: usize,
    /// Fixed frame count; drawn from `frame_range` when absent.
    pub frames: Option<usize>,
    pub frame_range: (usize, usize),
    /// `(H0, W0)`.
    pub fov: (usize, usize),
    /// Focal length in pixels; defaults to the larger FOV dimension.
    pub focal: Option<f64>,
    pub allow_out_of_range: bool,
    pub background: BackgroundSpec,
    pub attitude: AttitudeSpec,
    pub translation: TranslationSpec,
    pub targets: TargetsSpec,
    pub render: RenderSpec,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            sequences: 1,
            frames: None,
            frame_range: FRAME_RANGE,
            fov: DEFAULT_FOV,
            focal: None,
            allow_out_of_range: false,
            background: BackgroundSpec::default(),
            attitude: AttitudeSpec::default(),
            translation: TranslationSpec::default(),
            targets: TargetsSpec::default(),
            render: RenderSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSpec {
    /// Textured synthetic background; `seed` is drawn when absent.
    Synthetic {
        seed: Option<u64>,
        mean: Option<f64>,
        texture_std: Option<f64>,
        texture_scale: Option<f64>,
        noise_std: Option<f64>,
        clouds: Option<u32>,
        cloud_amplitude: Option<f64>,
    },
    /// White Gaussian noise around `mean`.
    FlatNoise { seed: Option<u64>, mean: f64, std: f64 },
    /// Grayscale PNG; relative paths resolve against the spec file's directory.
    Image { path: PathBuf },
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec::Synthetic {
            seed: None,
            mean: None,
            texture_std: None,
            texture_scale: None,
            noise_std: None,
            clouds: None,
            cloud_amplitude: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeChoice {
    /// Constant or linear with `linear_probability`.
    #[default]
    Random,
    Constant,
    Linear,
    /// Zero attitude throughout.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttitudeSpec {
    pub mode: AttitudeChoice,
    pub linear_probability: f64,
    pub constant_range: f64,
    pub schedule_range: f64,
    /// Explicit `(pitch, yaw, roll)` at the first frame, degrees.
    pub start: Option<[f64; 3]>,
    /// Explicit attitude at the last frame (linear mode).
    pub end: Option<[f64; 3]>,
}

impl Default for AttitudeSpec {
    fn default() -> Self {
        let c = AttitudeConfig::default();
        Self {
            mode: AttitudeChoice::Random,
            linear_probability: c.linear_probability,
            constant_range: c.constant_range,
            schedule_range: c.schedule_range,
            start: None,
            end: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationSpec {
    /// Per-axis speed range, pixels per frame.
    pub speed_range: (f64, f64),
    pub order_range: (f64, f64),
    /// No platform translation.
    pub stationary: bool,
}

impl Default for TranslationSpec {
    fn default() -> Self {
        let c = TranslationConfig::default();
        Self {
            speed_range: c.speed_range,
            order_range: c.order_range,
            stationary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetsSpec {
    /// Fixed target count; defaults to the length of `list` when that is non-empty.
    pub count: Option<u32>,
    pub count_range: (u32, u32),
    pub scr_range: (f64, f64),
    pub appearance: AppearanceRanges,
    pub trajectory: TrajectoryConfig,
    pub accel: AccelConfig,
    /// Per-target overrides, applied to targets `1..=list.len()`.
    pub list: Vec<TargetOverride>,
}

impl Default for TargetsSpec {
    fn default() -> Self {
        let c = TargetConfig::default();
        Self {
            count: None,
            count_range: c.count_range,
            scr_range: c.scr_range,
            appearance: c.appearance,
            trajectory: c.trajectory,
            accel: c.accel,
            list: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetOverride {
    pub scr: Option<f64>,
    pub swerves: Option<u32>,
    /// Acceleration at the last frame; 0 disables acceleration.
    pub accel: Option<f64>,
    /// Constant appearance for the whole sequence.
    pub appearance: Option<GaussianSpec>,
    /// Frame-1 position `(x, y)`.
    pub start: Option<(f64, f64)>,
    /// Target does not move in the frame-1 reference.
    pub stationary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSpec {
    /// Drawn from {3, 5, 7} when absent.
    pub blur_kernel: Option<usize>,
    /// Drawn from [0.2, 0.6] when absent.
    pub blur_sigma: Option<f64>,
    pub support_threshold: f64,
    pub mask_threshold: f64,
    pub neighborhood: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            blur_kernel: None,
            blur_sigma: None,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            neighborhood: DEFAULT_NEIGHBORHOOD,
        }
    }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn range_within(r: (f64, f64), lo: f64, hi: f64) -> bool {
    r.0 <= r.1 && within(r.0, lo, hi) && within(r.1, lo, hi)
}

impl SequenceSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("sequence spec", e.message()))
    }

    /// Reads a spec file and resolves a relative background image path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text).map_err(|e| match e {
            Error::Format { detail, .. } => Error::format(format!("sequence spec {}", path.display()), detail),
            e => e,
        })?;
        if let BackgroundSpec::Image { path: img } = &mut spec.background {
            if img.is_relative() {
                if let Some(dir) = path.parent() {
                    *img = dir.join(&*img);
                }
            }
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Structural errors that no acknowledgement can override.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.sequences == 0 {
            return bad("sequences must be at least 1".into());
        }
        if self.fov.0 < 8 || self.fov.1 < 8 {
            return bad(format!("fov {:?} is too small (minimum 8x8)", self.fov));
        }
        if let Some(t) = self.frames {
            if t < 2 {
                return bad(format!("frames must be at least 2, got {t}"));
            }
        }
        if self.frame_range.0 < 2 || self.frame_range.0 > self.frame_range.1 {
            return bad(format!("bad frame_range {:?}", self.frame_range));
        }
        if let Some(f) = self.focal {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("focal must be positive, got {f}"));
            }
        }
        if let Some(k) = self.render.blur_kernel {
            if k % 2 == 0 || k == 0 {
                return bad(format!("blur kernel must be odd, got {k}"));
            }
        }
        if let Some(s) = self.render.blur_sigma {
            if !(s > 0.0) {
                return bad(format!("blur sigma must be positive, got {s}"));
            }
        }
        for (name, v) in [("support_threshold", self.render.support_threshold), ("mask_threshold", self.render.mask_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if let Some(n) = self.targets.count {
            if self.targets.list.len() > n as usize {
                return bad(format!("{} target overrides for {n} targets", self.targets.list.len()));
            }
        }
        if self.targets.count_range.0 > self.targets.count_range.1 || self.targets.count_range.1 > 255 {
            return bad(format!("bad target count_range {:?}", self.targets.count_range));
        }
        if self.targets.count.is_some_and(|c| c > 255) {
            return bad("at most 255 targets per sequence".into());
        }
        Ok(())
    }

    /// Parameters outside the default generation ranges.
    pub fn out_of_range(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut flag = |ok: bool, what: String| {
            if !ok {
                v.push(what);
            }
        };
        flag(self.fov == DEFAULT_FOV, format!("fov {:?} (expected {:?})", self.fov, DEFAULT_FOV));
        flag(
            self.frame_range.0 >= FRAME_RANGE.0 && self.frame_range.1 <= FRAME_RANGE.1,
            format!("frame_range {:?} outside {:?}", self.frame_range, FRAME_RANGE),
        );
        let a = &self.attitude;
        flag(within(a.linear_probability, 0.0, 1.0), format!("attitude.linear_probability {}", a.linear_probability));
        flag(within(a.constant_range, 0.0, 10.0), format!("attitude.constant_range {} > 10", a.constant_range));
        flag(within(a.schedule_range, 0.0, 5.0), format!("attitude.schedule_range {} > 5", a.schedule_range));
        if let Some(s) = a.start {
            flag(s.iter().all(|x| within(*x, -10.0, 10.0)), format!("attitude.start {s:?} outside [-10, 10]"));
            if let Some(e) = a.end {
                flag(
                    s.iter().zip(&e).all(|(x, y)| (y - x).abs() <= 5.0),
                    format!("attitude change {s:?} -> {e:?} exceeds 5 degrees"),
                );
            }
        }
        let t = &self.translation;
        flag(range_within(t.speed_range, 0.05, 2.0), format!("translation.speed_range {:?} outside [0.05, 2]", t.speed_range));
        flag(range_within(t.order_range, 0.0, 3.0), format!("translation.order_range {:?} outside [0, 3]", t.order_range));
        let g = &self.targets;
        if let Some(c) = g.count {
            flag((1..=6).contains(&c), format!("targets.count {c} outside [1, 6]"));
        }
        flag(
            g.count_range.0 >= 1 && g.count_range.1 <= 6,
            format!("targets.count_range {:?} outside [1, 6]", g.count_range),
        );
        flag(range_within(g.scr_range, 1.0, 20.0), format!("targets.scr_range {:?} outside [1, 20]", g.scr_range));
        let ap = &g.appearance;
        flag(range_within(ap.h, 1.0, 9.0), format!("targets.appearance.h {:?} outside [1, 9]", ap.h));
        flag(range_within(ap.w, 1.0, 9.0), format!("targets.appearance.w {:?} outside [1, 9]", ap.w));
        flag(range_within(ap.sigma, 0.1, 1.0), format!("targets.appearance.sigma {:?} outside [0.1, 1]", ap.sigma));
        flag(ap.keys.0 >= 2 && ap.keys.1 <= 5 && ap.keys.0 <= ap.keys.1, format!("targets.appearance.keys {:?} outside [2, 5]", ap.keys));
        flag(range_within(ap.order, 0.0, 3.0), format!("targets.appearance.order {:?} outside [0, 3]", ap.order));
        flag(g.trajectory.max_swerves <= 2, format!("targets.trajectory.max_swerves {} > 2", g.trajectory.max_swerves));
        flag(
            range_within(g.trajectory.order_range, 0.0, 3.0),
            format!("targets.trajectory.order_range {:?} outside [0, 3]", g.trajectory.order_range),
        );
        for (i, o) in g.list.iter().enumerate() {
            if let Some(s) = o.scr {
                flag(within(s, 1.0, 20.0), format!("targets.list[{i}].scr {s} outside [1, 20]"));
            }
            if let Some(s) = o.swerves {
                flag(s <= 2, format!("targets.list[{i}].swerves {s} > 2"));
            }
            if let Some(ap) = o.appearance {
                flag(
                    within(ap.h, 1.0, 9.0) && within(ap.w, 1.0, 9.0) && within(ap.sigma, 0.1, 1.0),
                    format!("targets.list[{i}].appearance {ap:?} outside the generation ranges"),
                );
            }
        }
        if let Some(k) = self.render.blur_kernel {
            flag(BLUR_KERNELS.contains(&k), format!("render.blur_kernel {k} not in {BLUR_KERNELS:?}"));
        }
        if let Some(s) = self.render.blur_sigma {
            flag(
                within(s, BLUR_SIGMA_RANGE.0, BLUR_SIGMA_RANGE.1),
                format!("render.blur_sigma {s} outside {BLUR_SIGMA_RANGE:?}"),
            );
        }
        v
    }

    /// Validates, enforces generation ranges unless acknowledged, and resolves sequence `index`.
    pub fn resolve(&self, index: usize) -> Result<ResolvedSequence> {
        self.validate()?;
        let oor = self.out_of_range();
        if !oor.is_empty() && !self.allow_out_of_range {
            return Err(Error::invalid(format!(
                "parameters outside the generation ranges (acknowledge with --allow-out-of-range): {}",
                oor.join("; ")
            )));
        }
        if index >= self.sequences {
            return Err(Error::invalid(format!("sequence {index} requested from a spec with {}", self.sequences)));
        }
        let mut rng = stream_rng(self.seed, index as u64);
        self.draw(&mut rng)
    }

    fn draw(&self, rng: &mut SimRng) -> Result<ResolvedSequence> {
        let frames = match self.frames {
            Some(t) => t,
            None => uniform_int(rng, self.frame_range.0 as u32, self.frame_range.1 as u32) as usize,
        };
        let fov = self.fov;
        let motion = MotionSpec {
            frames,
            attitude: self.draw_attitude(rng),
            translation: self.draw_translation(rng, frames),
            focal: self.focal.unwrap_or(fov.0.max(fov.1) as f64),
            principal_point: (fov.1 as f64 / 2.0, fov.0 as f64 / 2.0),
        };
        let background = match &self.background {
            BackgroundSpec::Synthetic {
                seed,
                mean,
                texture_std,
                texture_scale,
                noise_std,
                clouds,
                cloud_amplitude,
            } => {
                let d = SyntheticBackground::default();
                let s: u64 = rng.gen();
                BackgroundSource::Synthetic(SyntheticBackground {
                    seed: seed.unwrap_or(s),
                    mean: mean.unwrap_or(d.mean),
                    texture_std: texture_std.unwrap_or(d.texture_std),
                    texture_scale: texture_scale.unwrap_or(d.texture_scale),
                    noise_std: noise_std.unwrap_or(d.noise_std),
                    clouds: clouds.unwrap_or(d.clouds),
                    cloud_amplitude: cloud_amplitude.unwrap_or(d.cloud_amplitude),
                    cloud_scale: d.cloud_scale,
                })
            }
            BackgroundSpec::FlatNoise { seed, mean, std } => {
                let s: u64 = rng.gen();
                BackgroundSource::Synthetic(SyntheticBackground::flat_noise(seed.unwrap_or(s), *mean, *std))
            }
            BackgroundSpec::Image { path } => BackgroundSource::Image { path: path.clone() },
        };
        let k = BLUR_KERNELS[uniform_int(rng, 0, 2) as usize];
        let s = uniform(rng, BLUR_SIGMA_RANGE.0, BLUR_SIGMA_RANGE.1);
        let render = RenderConfig {
            blur_kernel: self.render.blur_kernel.unwrap_or(k),
            blur_sigma: self.render.blur_sigma.unwrap_or(s),
            support_threshold: self.render.support_threshold,
            mask_threshold: self.render.mask_threshold,
            neighborhood: self.render.neighborhood,
        };

        let g = &self.targets;
        let cfg = TargetConfig {
            count_range: g.count_range,
            scr_range: g.scr_range,
            appearance: g.appearance,
            trajectory: g.trajectory,
            accel: g.accel,
        };
        let drawn = cfg.draw_count(rng);
        let count = match (g.count, g.list.len()) {
            (Some(c), _) => c,
            (None, 0) => drawn,
            (None, n) => n as u32,
        };
        let mut targets = Vec::with_capacity(count as usize);
        for id in 1..=count {
            let ov = g.list.get(id as usize - 1).copied().unwrap_or_default();
            targets.push(draw_target(&cfg, rng, id, frames, fov, &ov)?);
        }
        Ok(ResolvedSequence {
            frames,
            fov,
            motion,
            background,
            render,
            appearance_ranges: g.appearance,
            targets,
        })
    }

    fn draw_attitude(&self, rng: &mut SimRng) -> AttitudeSchedule {
        let a = &self.attitude;
        let cfg = AttitudeConfig {
            linear_probability: a.linear_probability,
            constant_range: a.constant_range,
            schedule_range: a.schedule_range,
        };
        let mode = match a.mode {
            AttitudeChoice::Random => cfg.draw_mode(rng),
            AttitudeChoice::Constant => AttitudeMode::Constant,
            AttitudeChoice::Linear => AttitudeMode::Linear,
            AttitudeChoice::None => return AttitudeSchedule::Constant { attitude: [0.0; 3] },
        };
        let drawn = cfg.draw_schedule(mode, rng);
        match (drawn, a.start, a.end) {
            (AttitudeSchedule::Constant { .. }, Some(s), _) => AttitudeSchedule::Constant { attitude: s },
            (AttitudeSchedule::Linear { start, end }, s, e) => {
                let s2 = s.unwrap_or(start);
                let e2 = e.unwrap_or_else(|| {
                    let mut d = end;
                    for i in 0..3 {
                        d[i] = s2[i] + (end[i] - start[i]);
                    }
                    d
                });
                AttitudeSchedule::Linear { start: s2, end: e2 }
            }
            (d, _, _) => d,
        }
    }

    fn draw_translation(&self, rng: &mut SimRng, frames: usize) -> CurveSpec {
        let t = &self.translation;
        let drawn = TranslationConfig {
            speed_range: t.speed_range,
            order_range: t.order_range,
        }
        .draw(rng, frames);
        if t.stationary {
            CurveSpec::line((0.0, 0.0), (0.0, 0.0))
        } else {
            drawn
        }
    }
}

/// Draws a target and applies `ov` on top of the drawn parameters.
fn draw_target(
    cfg: &TargetConfig,
    rng: &mut SimRng,
    id: u32,
    frames: usize,
    fov: (usize, usize),
    ov: &TargetOverride,
) -> Result<TargetSpec> {
    let mut t = cfg.draw_target(rng, id, frames, fov)?;
    if let Some(s) = ov.swerves {
        let plan = cfg.trajectory.draw_plan(rng, frames, s as usize, fov)?;
        t.trajectory = plan;
    }
    if let Some(s) = ov.scr {
        t.scr = s;
    }
    if let Some(a) = ov.accel {
        t.accel = if a == 0.0 {
            AccelPlan::ZERO
        } else {
            AccelPlan {
                end: a,
                bend: t.accel.bend,
            }
        };
    }
    if let Some(spec) = ov.appearance {
        spec.validate()?;
        t.appearance = AppearancePlan {
            keys: vec![
                KeyAppearance { frame: 1, spec },
                KeyAppearance { frame: frames, spec },
            ],
            bends: vec![[Bend::LINEAR; 3]],
        };
    }
    if ov.stationary {
        let at = ov.start.unwrap_or(t.trajectory.segments[0].start);
        t.trajectory = TrajectoryPlan {
            segments: vec![CurveSpec::line(at, at)],
            junctions: vec![0, frames - 1],
            smooth_window: t.trajectory.smooth_window,
        };
    } else if let Some(at) = ov.start {
        let s0 = t.trajectory.segments[0].start;
        let (dx, dy) = (at.0 - s0.0, at.1 - s0.1);
        for s in &mut t.trajectory.segments {
            s.start = (s.start.0 + dx, s.start.1 + dy);
            s.end = (s.end.0 + dx, s.end.1 + dy);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_uses_defaults() {
        let s = SequenceSpec::from_toml("").unwrap();
        assert_eq!(s, SequenceSpec::default());
        let r = s.resolve(0).unwrap();
        assert!((200..=1200).contains(&r.frames));
        assert_eq!(r.fov, (1024, 1024));
        assert!((1..=6).contains(&r.targets.len()));
        assert!(BLUR_KERNELS.contains(&r.render.blur_kernel));
        assert!((0.2..=0.6).contains(&r.render.blur_sigma));
    }

    #[test]
    fn resolution_is_deterministic_per_stream() {
        let s = SequenceSpec::from_toml("seed = 42\nsequences = 3\nframes = 50").unwrap();
        assert_eq!(s.resolve(1).unwrap(), s.resolve(1).unwrap());
        assert_ne!(s.resolve(0).unwrap(), s.resolve(1).unwrap());
        assert!(s.resolve(3).is_err());
    }

    #[test]
    fn out_of_range_needs_acknowledgement() {
        let text = "fov = [64, 64]\nframes = 10\n[targets]\ncount = 0";
        let s = SequenceSpec::from_toml(text).unwrap();
        let err = s.resolve(0).unwrap_err().to_string();
        assert!(err.contains("fov") && err.contains("targets.count"), "{err}");
        let ok = SequenceSpec::from_toml(&format!("allow_out_of_range = true\n{text}")).unwrap();
        assert!(ok.resolve(0).unwrap().targets.is_empty());
    }

    #[test]
    fn unknown_and_malformed_fields() {
        assert!(matches!(SequenceSpec::from_toml("sede = 1"), Err(Error::Format { .. })));
        assert!(SequenceSpec::from_toml("[background]\nkind = \"plasma\"").is_err());
        assert!(SequenceSpec::from_toml("frames = 1").unwrap().resolve(0).is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
            seed = 7
            frames = 30
            allow_out_of_range = true
            fov = [64, 64]
            [background]
            kind = "flat_noise"
            mean = 100.0
            std = 10.0
            [render]
            blur_kernel = 3
            blur_sigma = 0.4
            [attitude]
            mode = "none"
            [translation]
            stationary = true
            [[targets.list]]
            scr = 12.5
            accel = 0.0
            stationary = true
            start = [20.0, 30.0]
            appearance = { h = 3.0, w = 2.0, sigma = 0.5 }
        "#;
        let s = SequenceSpec::from_toml(text).unwrap();
        let r = s.resolve(0).unwrap();
        assert_eq!(r.targets.len(), 1);
        let t = &r.targets[0];
        assert_eq!(t.scr, 12.5);
        assert_eq!(t.accel, AccelPlan::ZERO);
        assert_eq!(t.trajectory.sample().unwrap()[29], (20.0, 30.0));
        assert_eq!(t.appearance.keys[1].spec, GaussianSpec::new(3.0, 2.0, 0.5).unwrap());
        assert!(r.motion.translation.is_stationary());
        assert_eq!(r.motion.attitude, AttitudeSchedule::Constant { attitude: [0.0; 3] });
        assert_eq!(SequenceSpec::from_toml(&s.to_toml()).unwrap(), s);
    }
}

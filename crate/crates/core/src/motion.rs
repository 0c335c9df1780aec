//! Satellite attitude and translation schedules, and the low-order curve
//! sampler shared by every interpolation in the generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imggeo::{build_homography, Homography};
use crate::rng::{random_sign, uniform};

/// Which coordinate of a [`CurveSpec`] advances linearly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveAxis {
    X,
    Y,
}

/// Segment of the curve `v = u^p` stretched between two points.
///
/// The parameter coordinate (picked by `axis`) moves linearly from `start` to
/// `end`; the other one follows `u^p` when `direction == 1` and
/// `1 - (1 - u)^p` when `direction == -1`, which bends the same segment the
/// other way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub order: f64,
    pub axis: CurveAxis,
    pub direction: i8,
}

impl CurveSpec {
    pub fn line(start: (f64, f64), end: (f64, f64)) -> Self {
        Self {
            start,
            end,
            order: 1.0,
            axis: CurveAxis::X,
            direction: 1,
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.start == self.end
    }

    fn validate(&self) -> Result<()> {
        if !(self.order > 0.0 && self.order < 3.0) {
            return Err(Error::invalid(format!(
                "curve order must lie in (0, 3), got {}",
                self.order
            )));
        }
        if self.direction != 1 && self.direction != -1 {
            return Err(Error::invalid(format!(
                "curve direction must be +1 or -1, got {}",
                self.direction
            )));
        }
        let coords = [self.start.0, self.start.1, self.end.0, self.end.1];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("curve endpoints must be finite"));
        }
        Ok(())
    }
}

/// `a + (b - a) * w`, returning `b` exactly at `w == 1`.
#[inline]
pub(crate) fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 1.0 {
        b
    } else {
        a + (b - a) * w
    }
}

/// Normalized curve weights for `n` samples: `phi(u_i)` with `u_i = i / (n - 1)`.
pub fn curve_weights(order: f64, direction: i8, n: usize) -> Result<Vec<f64>> {
    if !(order > 0.0 && order < 3.0) {
        return Err(Error::invalid(format!("curve order must lie in (0, 3), got {order}")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("a curve needs at least 2 samples, got {n}")));
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                0.0
            } else if i == n - 1 {
                1.0
            } else {
                let u = i as f64 / last;
                if direction >= 0 {
                    u.powf(order)
                } else {
                    1.0 - (1.0 - u).powf(order)
                }
            }
        })
        .collect())
}

/// Samples `n` points along `spec`, with the first and last equal to its endpoints.
pub fn curve_sample(spec: &CurveSpec, n: usize) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::invalid(format!("a curve needs at least 2 samples, got {n}")));
    }
    if spec.is_stationary() {
        return Ok(vec![spec.start; n]);
    }
    let bend = curve_weights(spec.order, spec.direction, n)?;
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let u = if i == n - 1 { 1.0 } else { i as f64 / last };
            let w = bend[i];
            match spec.axis {
                CurveAxis::X => (
                    lerp(spec.start.0, spec.end.0, u),
                    lerp(spec.start.1, spec.end.1, w),
                ),
                CurveAxis::Y => (
                    lerp(spec.start.0, spec.end.0, w),
                    lerp(spec.start.1, spec.end.1, u),
                ),
            }
        })
        .collect())
}

/// Scalar version of [`curve_sample`]: `n` values from `a` to `b`.
pub fn curve_sample_1d(a: f64, b: f64, order: f64, direction: i8, n: usize) -> Result<Vec<f64>> {
    if a == b {
        if n < 2 {
            return Err(Error::invalid(format!("a curve needs at least 2 samples, got {n}")));
        }
        return Ok(vec![a; n]);
    }
    Ok(curve_weights(order, direction, n)?
        .into_iter()
        .map(|w| lerp(a, b, w))
        .collect())
}

/// Draws a random bend (order, axis, direction) for a curve between two points.
pub fn random_curve(rng: &mut impl Rng, start: (f64, f64), end: (f64, f64), order_range: (f64, f64)) -> CurveSpec {
    CurveSpec {
        start,
        end,
        order: uniform(rng, order_range.0, order_range.1),
        axis: if rng.gen_bool(0.5) { CurveAxis::X } else { CurveAxis::Y },
        direction: random_sign(rng) as i8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttitudeMode {
    Constant,
    Linear,
}

/// Resolved attitude schedule in degrees, ordered (pitch, yaw, roll).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AttitudeSchedule {
    Constant { attitude: [f64; 3] },
    Linear { start: [f64; 3], end: [f64; 3] },
}

impl AttitudeSchedule {
    pub fn mode(&self) -> AttitudeMode {
        match self {
            AttitudeSchedule::Constant { .. } => AttitudeMode::Constant,
            AttitudeSchedule::Linear { .. } => AttitudeMode::Linear,
        }
    }

    pub fn sample(&self, frames: usize) -> Result<Vec<[f64; 3]>> {
        if frames < 1 {
            return Err(Error::invalid("attitude schedule needs at least one frame"));
        }
        Ok(match *self {
            AttitudeSchedule::Constant { attitude } => vec![attitude; frames],
            AttitudeSchedule::Linear { start, end } => {
                if frames == 1 {
                    return Ok(vec![start]);
                }
                let last = (frames - 1) as f64;
                (0..frames)
                    .map(|i| {
                        let u = i as f64 / last;
                        [0, 1, 2].map(|k| lerp(start[k], end[k], u))
                    })
                    .collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttitudeConfig {
    /// Probability of the linear (scheduled) mode.
    pub linear_probability: f64,
    /// Constant attitudes are drawn from `[-constant_range, constant_range]` degrees.
    pub constant_range: f64,
    /// Linear schedules change each angle by a value in `[-schedule_range, schedule_range]`.
    pub schedule_range: f64,
}

impl Default for AttitudeConfig {
    fn default() -> Self {
        Self {
            linear_probability: 0.5,
            constant_range: 10.0,
            schedule_range: 5.0,
        }
    }
}

impl AttitudeConfig {
    pub fn draw_mode(&self, rng: &mut impl Rng) -> AttitudeMode {
        if rng.gen_bool(self.linear_probability.clamp(0.0, 1.0)) {
            AttitudeMode::Linear
        } else {
            AttitudeMode::Constant
        }
    }

    pub fn draw_schedule(&self, mode: AttitudeMode, rng: &mut impl Rng) -> AttitudeSchedule {
        let c = self.constant_range;
        let start = [0; 3].map(|_| uniform(rng, -c, c));
        match mode {
            AttitudeMode::Constant => AttitudeSchedule::Constant { attitude: start },
            AttitudeMode::Linear => {
                let r = self.schedule_range;
                let mut end = start;
                for e in &mut end {
                    *e += uniform(rng, -r, r);
                }
                AttitudeSchedule::Linear { start, end }
            }
        }
    }
}

/// Per-frame attitudes for `mode`, with parameters drawn from `rng`.
pub fn attitude_schedule(
    mode: AttitudeMode,
    rng: &mut impl Rng,
    frames: usize,
    config: &AttitudeConfig,
) -> Result<Vec<[f64; 3]>> {
    if frames < 1 {
        return Err(Error::invalid("attitude schedule needs at least one frame"));
    }
    config.draw_schedule(mode, rng).sample(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslationConfig {
    /// Per-axis speed `|x_T - x_1| / T` in pixels per frame.
    pub speed_range: (f64, f64),
    /// Curve order range for the path between the endpoints.
    pub order_range: (f64, f64),
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            speed_range: (1.0 / 20.0, 2.0),
            order_range: (1.0, 2.0),
        }
    }
}

impl TranslationConfig {
    /// Draws the translation curve: starts at the origin, ends `v * T` away on each axis.
    pub fn draw(&self, rng: &mut impl Rng, frames: usize) -> CurveSpec {
        let t = frames as f64;
        let (lo, hi) = self.speed_range;
        let vx = uniform(rng, lo, hi) * random_sign(rng);
        let vy = uniform(rng, lo, hi) * random_sign(rng);
        random_curve(rng, (0.0, 0.0), (vx * t, vy * t), self.order_range)
    }
}

/// Random image-plane translation path of `frames` points.
pub fn translation_path(rng: &mut impl Rng, frames: usize, config: &TranslationConfig) -> Result<Vec<(f64, f64)>> {
    if frames < 2 {
        return Err(Error::invalid(format!("translation path needs at least 2 frames, got {frames}")));
    }
    curve_sample(&config.draw(rng, frames), frames)
}

/// Attitude and translation of the platform at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    /// 1-based frame index.
    pub t: usize,
    pub attitude: [f64; 3],
    pub translation: (f64, f64),
}

/// Fully resolved platform motion for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub frames: usize,
    pub attitude: AttitudeSchedule,
    pub translation: CurveSpec,
    pub focal: f64,
    pub principal_point: (f64, f64),
}

/// Per-frame poses with their homographies.
///
/// `scene_to_frame[t]` maps scene coordinates (the reference plane in which
/// the field of view sits at the origin under zero motion) to frame `t`;
/// `ref_to_frame[t]` maps frame-1 pixel coordinates to frame `t` and is the
/// identity at the first frame.
#[derive(Debug, Clone)]
pub struct PoseChain {
    pub poses: Vec<PoseSample>,
    pub scene_to_frame: Vec<Homography>,
    pub ref_to_frame: Vec<Homography>,
}

impl PoseChain {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Builds the per-frame homography chain for a resolved motion.
///
/// The field of view is cropped at `(x_t, y_t)` out of the rotated scene, so
/// scene content moves by `-(x_t, y_t)` in the frame.
pub fn pose_sequence(spec: &MotionSpec) -> Result<PoseChain> {
    let frames = spec.frames;
    let attitudes = spec.attitude.sample(frames)?;
    let path = if frames == 1 {
        vec![spec.translation.start]
    } else {
        curve_sample(&spec.translation, frames)?
    };
    let mut poses = Vec::with_capacity(frames);
    let mut scene_to_frame = Vec::with_capacity(frames);
    for (i, (att, tr)) in attitudes.iter().zip(&path).enumerate() {
        poses.push(PoseSample {
            t: i + 1,
            attitude: *att,
            translation: *tr,
        });
        scene_to_frame.push(build_homography(*att, (-tr.0, -tr.1), spec.focal, spec.principal_point)?);
    }
    let first_inv = scene_to_frame[0].inverse()?;
    let ref_to_frame = scene_to_frame.iter().map(|m| *m * first_inv).collect();
    Ok(PoseChain {
        poses,
        scene_to_frame,
        ref_to_frame,
    })
}

//! Property, oracle and gradient checks over all kernels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::deform::{deform_conv, DeformParams};
use super::gradcheck::{finite_diff_check, DiffOp, Unpack};
use super::modulation::{
    channel_max_mean, dct_pool, frequency_modulation, spatial_modulation, temporal_attention, temporal_modulation, tsfm, DctBasis,
    TemporalWeights, TsfmWeights,
};
use super::pyramid::{feature_pyramid, pyramid_align, PdaOptions, PdaWeights};
use super::scalar::{sigmoid, Scalar};
use super::tensor::{concat, upsample2, Conv, FeatureMap, Linear};
use super::weights::{random_conv, random_linear, random_pda, RfrWeights};
use crate::error::Result;
use crate::rng::{stream_rng, SimRng, RNG_ALGORITHM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub eps: f64,
    pub directions: usize,
    /// Offset factor between pyramid levels; anything but 2 breaks the planted-shift oracle.
    pub offset_upsample_scale: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            eps: 1e-5,
            directions: 3,
            offset_upsample_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Error measure; the check passes when it is finite and `<= tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub options: CheckOptions,
    pub rng: String,
    pub passed: bool,
    pub failures: usize,
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const TOL_EXACT: f64 = 1e-12;
pub const TOL_LINEAR: f64 = 1e-10;
pub const TOL_SHIFT: f64 = 1e-6;
pub const TOL_GRAD_LINEAR: f64 = 1e-9;
pub const TOL_GRAD_OFFSETS: f64 = 1e-4;
pub const TOL_GRAD_ATTENTION: f64 = 1e-5;
pub const TOL_DCT: f64 = 1e-10;

struct Recorder(Vec<CheckResult>);

impl Recorder {
    fn push(&mut self, name: &str, value: f64, tolerance: f64) {
        self.0.push(CheckResult {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        });
    }

    fn run(&mut self, name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) {
        let v = f().unwrap_or_else(|e| {
            log::error!("check {name} failed to run: {e}");
            f64::INFINITY
        });
        self.push(name, v, tolerance);
    }
}

pub fn random_map(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &FeatureMap, b: &FeatureMap) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest difference over pixels at least `margin` away from every border.
pub fn interior_diff(a: &FeatureMap, b: &FeatureMap, margin: usize) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let (c, h, w) = a.shape();
    let mut m = 0.0f64;
    for k in 0..c {
        for y in margin..h.saturating_sub(margin) {
            for x in margin..w.saturating_sub(margin) {
                m = m.max((a.at(k, y, x) - b.at(k, y, x)).abs());
            }
        }
    }
    m
}

/// Offsets whose fractional parts stay in `[0.2, 0.8]`, away from bilinear kinks.
fn fractional_offsets(rng: &mut impl Rng, n: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::from_fn(2 * n, h, w, |_, _, _| rng.gen_range(-2i32..2) as f64 + rng.gen_range(0.2..0.8))
}

fn interior_modulation(rng: &mut impl Rng, n: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::from_fn(n, h, w, |_, _, _| rng.gen_range(0.2..0.8))
}

/// Smooth feature: an affine ramp per channel, reproduced exactly by bilinear sampling.
pub fn ramp(c: usize, h: usize, w: usize, shift_y: f64) -> FeatureMap {
    FeatureMap::from_fn(c, h, w, |k, y, x| {
        let k = k as f64;
        0.1 * (k + 1.0) * (y as f64 - shift_y) - 0.07 * (2.0 - k) * x as f64 + 0.3 * k
    })
}

/// Pyramid weights whose offset predictors are constant: `Δy` per level from `offset_y`, zero `Δx`,
/// zero modulation logits.
pub fn planted_pda(rng: &mut impl Rng, c: usize, levels: usize, offset_y: &[f64]) -> PdaWeights {
    let mut w = random_pda(rng, c, levels, 3, 1.0);
    for (l, conv) in w.offset.iter_mut().enumerate() {
        conv.weight.iter_mut().for_each(|v| *v = 0.0);
        for (o, b) in conv.bias.iter_mut().enumerate() {
            *b = if o < 18 && o % 2 == 0 { offset_y[l] } else { 0.0 };
        }
    }
    w
}

/// Aligning a ramp shifted by 2 px in y, with the coarsest predictor set to the true shift,
/// against the unshifted alignment. Returns the interior error at the finest level.
pub fn planted_shift_error(rng: &mut impl Rng, scale: f64) -> Result<f64> {
    let (c, levels, size) = (4, 3, 64);
    let shift = 2.0;
    let mut offs = vec![0.0; levels];
    offs[levels - 1] = shift / f64::powi(2.0, levels as i32 - 1);
    let w = planted_pda(rng, c, levels, &offs);
    let mut reference = w.clone();
    for conv in &mut reference.offset {
        conv.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let g = ramp(c, size, size, 0.0);
    let f = ramp(c, size, size, shift);
    let opts = PdaOptions { offset_upsample_scale: scale };
    let a = pyramid_align(&f, &g, &w, &opts)?;
    let b = pyramid_align(&g, &g, &reference, &opts)?;
    // padding effects reach about 20 px in from the border after three levels
    Ok(interior_diff(&a.feature, &b.feature, 24))
}

pub fn run_suite(opts: &CheckOptions) -> CheckReport {
    run_suite_with(opts, None)
}

/// Runs the suite, plus checks on a supplied weight set.
pub fn run_suite_with(opts: &CheckOptions, weights: Option<&RfrWeights>) -> CheckReport {
    let mut rng = stream_rng(opts.seed, 0);
    let mut r = Recorder(Vec::new());
    deform_checks(&mut r, &mut rng);
    pyramid_checks(&mut r, &mut rng, opts);
    modulation_checks(&mut r, &mut rng);
    gradient_checks(&mut r, &mut rng, opts);
    if let Some(w) = weights {
        weight_checks(&mut r, &mut stream_rng(opts.seed, 1), w, opts);
    }
    let failures = r.0.iter().filter(|c| !c.passed).count();
    CheckReport {
        options: *opts,
        rng: RNG_ALGORITHM.into(),
        passed: failures == 0,
        failures,
        checks: r.0,
    }
}

fn deform_checks(r: &mut Recorder, rng: &mut SimRng) {
    let (c, h, w) = (4, 12, 12);
    let f = random_map(rng, c, h, w);
    let conv = random_conv(rng, 3, c, 3, 1.0);
    r.run("deform.zero_offsets_vs_dense", TOL_EXACT, || {
        Ok(max_abs_diff(&DeformParams::rigid(conv.clone(), h, w).apply(&f)?, &conv.apply(&f, 1)?))
    });
    r.run("deform.integer_shift", TOL_EXACT, || {
        let mut p = DeformParams::rigid(conv.clone(), h, w);
        for t in 0..9 {
            for y in 0..h {
                for x in 0..w {
                    *p.offsets.at_mut(2 * t, y, x) = 1.0;
                }
            }
        }
        let shifted = FeatureMap::from_fn(c, h, w, |k, y, x| if y + 1 < h { f.at(k, y + 1, x) } else { 0.0 });
        Ok(interior_diff(&p.apply(&f)?, &conv.apply(&shifted, 1)?, 2))
    });
    r.run("deform.zero_modulation", 0.0, || {
        let mut p = DeformParams::rigid(conv.clone(), h, w);
        p.modulation = FeatureMap::zeros(9, h, w);
        let out = p.apply(&f)?;
        let bias = FeatureMap::from_fn(3, h, w, |o, _, _| conv.bias[o]);
        Ok(max_abs_diff(&out, &bias))
    });
    r.run("deform.linearity", TOL_LINEAR, || {
        let mut lin = conv.clone();
        lin.bias.iter_mut().for_each(|b| *b = 0.0);
        let off = fractional_offsets(rng, 9, h, w);
        let m = interior_modulation(rng, 9, h, w);
        let g = random_map(rng, c, h, w);
        let (a, b) = (0.7, -1.9);
        let mix = FeatureMap::from_fn(c, h, w, |k, y, x| a * f.at(k, y, x) + b * g.at(k, y, x));
        let lhs = deform_conv(&mix, &off, &m, &lin)?;
        let of = deform_conv(&f, &off, &m, &lin)?;
        let og = deform_conv(&g, &off, &m, &lin)?;
        let rhs = FeatureMap::from_fn(3, h, w, |k, y, x| a * of.at(k, y, x) + b * og.at(k, y, x));
        Ok(max_abs_diff(&lhs, &rhs))
    });
}

fn pyramid_checks(r: &mut Recorder, rng: &mut SimRng, opts: &CheckOptions) {
    let (c, s) = (4, 16);
    let pda = PdaOptions {
        offset_upsample_scale: opts.offset_upsample_scale,
    };
    let f = random_map(rng, c, s, s);
    let zero = planted_pda(rng, c, 3, &[0.0; 3]);
    r.run("pyramid.identical_inputs_zero_offsets", 0.0, || {
        let a = pyramid_align(&f, &f, &zero, &pda)?;
        Ok(a.offsets.data().iter().fold(0.0f64, |m, v| m.max(v.abs())))
    });
    r.run("pyramid.identical_inputs_vs_dense", TOL_EXACT, || {
        // with zero offsets and modulation sigmoid(0), every deformable layer is half a dense conv
        let a = pyramid_align(&f, &f, &zero, &pda)?;
        let pyr = feature_pyramid(&f, &zero.down)?;
        let mut prev: Option<FeatureMap> = None;
        for l in (0..3).rev() {
            let d = zero.dcn[l].apply(&pyr[l], 1)?;
            let half = FeatureMap::from_fn(c, d.height(), d.width(), |k, y, x| {
                0.5 * (d.at(k, y, x) - zero.dcn[l].bias[k]) + zero.dcn[l].bias[k]
            });
            let next = match &prev {
                Some(p) => zero.fuse[l].apply(&concat(&[&half, &upsample2(p)])?, 1)?,
                None => zero.fuse[l].apply(&half, 1)?,
            };
            prev = Some(next);
        }
        Ok(max_abs_diff(&a.feature, &prev.expect("levels")))
    });
    r.run("pyramid.single_level_collapse", 0.0, || {
        let w = random_pda(rng, c, 1, 3, 0.3);
        let g = random_map(rng, c, s, s);
        let a = pyramid_align(&f, &g, &w, &pda)?;
        let pred = w.offset[0].apply(&concat(&[&f, &g])?, 1)?;
        let m = pred.slice_channels(18..27).map(sigmoid);
        let d = deform_conv(&f, &pred.slice_channels(0..18), &m, &w.dcn[0])?;
        Ok(max_abs_diff(&a.feature, &w.fuse[0].apply(&d, 1)?))
    });
    r.run("pyramid.planted_shift", TOL_SHIFT, || planted_shift_error(rng, opts.offset_upsample_scale));
}

fn modulation_checks(r: &mut Recorder, rng: &mut SimRng) {
    let (c, h, w) = (4, 8, 8);
    let id = vec![Conv::identity(c, 3).expect("odd kernel"); 2];
    r.run("temporal.orthogonal_embeddings", TOL_EXACT, || {
        let f = random_map(rng, c, h, w);
        // rotate channel pairs by 90 degrees: (a, b) -> (-b, a)
        let g = FeatureMap::from_fn(c, h, w, |k, y, x| if k % 2 == 0 { -f.at(k + 1, y, x) } else { f.at(k - 1, y, x) });
        let m = temporal_attention(&f, &g, &id)?;
        Ok(m.data().iter().fold(0.0f64, |a, v| a.max((v - 0.5).abs())))
    });
    r.run("temporal.unit_norm_closed_form", TOL_EXACT, || {
        let raw = random_map(rng, c, h, w);
        let f = FeatureMap::from_fn(c, h, w, |k, y, x| {
            let n = (0..c).map(|i| raw.at(i, y, x).powi(2)).sum::<f64>().sqrt();
            raw.at(k, y, x) / n
        });
        let m = temporal_attention(&f, &f, &id)?;
        Ok(m.data().iter().fold(0.0f64, |a, v| a.max((v - sigmoid(1.0)).abs())))
    });
    r.run("attention.open_unit_interval", 0.0, || {
        let f = random_map(rng, c, h, w);
        let g = random_map(rng, c, h, w);
        let tw = TemporalWeights {
            embed: vec![random_conv(rng, c, c, 3, 1.0), random_conv(rng, c, c, 3, 1.0)],
            fuse: random_conv(rng, c, 2 * c, 3, 1.0),
        };
        let basis = DctBasis::lowest(h, w, 4)?;
        let maps = [
            temporal_modulation(&f, &g, &tw)?.attention,
            spatial_modulation(&f, &random_conv(rng, 1, 2, 7, 1.0))?.attention,
            frequency_modulation(&f, &basis, &random_linear(rng, c, c, 1.0))?.attention,
        ];
        Ok(maps.iter().flat_map(|m| m.data()).filter(|v| !(**v > 0.0 && **v < 1.0)).count() as f64)
    });
    r.run("spatial.zero_weights_halve", 0.0, || {
        let f = FeatureMap::from_fn(c, h, w, |_, _, _| 1.7);
        let out = spatial_modulation(&f, &Conv::zeros(1, 2, 7, 7)?)?.output;
        Ok(out.data().iter().fold(0.0f64, |a, v| a.max((v - 0.85).abs())))
    });
    r.run("spatial.max_mean_vs_naive", 0.0, || {
        let f = random_map(rng, c, h, w);
        let mm = channel_max_mean(&f);
        let mut err = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                let mut mx = f64::NEG_INFINITY;
                let mut sum = 0.0;
                for k in 0..c {
                    mx = mx.max(f.at(k, y, x));
                    sum += f.at(k, y, x);
                }
                err = err.max((mm.at(0, y, x) - mx).abs()).max((mm.at(1, y, x) - sum / c as f64).abs());
            }
        }
        Ok(err)
    });
    r.run("spatial.ratio_equals_map", TOL_EXACT, || {
        let f = random_map(rng, c, h, w);
        let m = spatial_modulation(&f, &random_conv(rng, 1, 2, 7, 1.0))?;
        let mut err = 0.0f64;
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    err = err.max((m.output.at(k, y, x) / f.at(k, y, x) - m.attention.at(0, y, x)).abs());
                }
            }
        }
        Ok(err)
    });
    r.run("frequency.constant_input", TOL_DCT, || {
        let basis = DctBasis::new(h, w, vec![(0, 0), (0, 1), (2, 3), (7, 7)])?;
        let f = FeatureMap::from_fn(8, h, w, |_, _, _| 2.5);
        let p = dct_pool(&f, &basis)?;
        let dc = 2.5 * (h * w) as f64 * basis.image(0)[0];
        Ok(p.iter()
            .enumerate()
            .map(|(k, v)| if k < 2 { (v - dc).abs() } else { v.abs() })
            .fold(0.0, f64::max))
    });
    r.run("frequency.dct_orthogonality", TOL_DCT, || {
        let basis = DctBasis::lowest(h, w, h * w)?;
        let mut err = 0.0f64;
        for i in 0..h * w {
            for j in i..h * w {
                let dot: f64 = basis.image(i).iter().zip(basis.image(j)).map(|(a, b)| a * b).sum();
                err = err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        Ok(err)
    });
    r.run("frequency.zero_fc_halves", 0.0, || {
        let f = random_map(rng, c, h, w);
        let m = frequency_modulation(&f, &DctBasis::lowest(h, w, 2)?, &Linear::zeros(c, c))?;
        Ok(m.attention.data().iter().fold(0.0f64, |a, v| a.max((v - 0.5).abs())))
    });
    r.run("frequency.channel_uniform_scaling", TOL_EXACT, || {
        let f = random_map(rng, c, h, w);
        let m = frequency_modulation(&f, &DctBasis::lowest(h, w, 4)?, &random_linear(rng, c, c, 1.0))?;
        let mut err = 0.0f64;
        for k in 0..c {
            for (o, i) in m.output.plane(k).iter().zip(f.plane(k)) {
                err = err.max((o / i - m.attention.at(k, 0, 0)).abs());
            }
        }
        Ok(err)
    });
}

fn weight_checks(r: &mut Recorder, rng: &mut SimRng, wt: &RfrWeights, opts: &CheckOptions) {
    let c = wt.pda.channels();
    let (h, w) = wt.basis.size();
    r.run("weights.bundle_roundtrip", 0.0, || {
        Ok(if RfrWeights::from_bundle(&wt.to_bundle())? == *wt { 0.0 } else { 1.0 })
    });
    r.run("weights.pyramid_finite", 0.0, || {
        let f = random_map(rng, c, h, w);
        let g = random_map(rng, c, h, w);
        let pda = PdaOptions {
            offset_upsample_scale: opts.offset_upsample_scale,
        };
        let a = pyramid_align(&f, &g, &wt.pda, &pda)?;
        Ok(a.feature.data().iter().filter(|v| !v.is_finite()).count() as f64)
    });
    r.run("weights.grad.tsfm", TOL_GRAD_ATTENTION, || {
        let op = ModulationOp::Tsfm {
            weights: wt.tsfm.clone(),
            basis: wt.basis.clone(),
            shape: (c, h, w),
        };
        let x = random_map(rng, 2 * c, h, w);
        Ok(finite_diff_check(&op, x.data(), opts.eps, opts.directions, rng)?.max_rel_err)
    });
}

fn take_map<S: Scalar>(u: &mut Unpack<S>, c: usize, h: usize, w: usize) -> Result<FeatureMap<S>> {
    FeatureMap::new(c, h, w, u.take(c * h * w)?)
}

fn take_conv<S: Scalar>(u: &mut Unpack<S>, shape: &Conv) -> Result<Conv<S>> {
    let w = u.take(shape.weight.len())?;
    let b = u.take(shape.bias.len())?;
    Conv::new(shape.out_c, shape.in_c, shape.kh, shape.kw, w, b)
}

fn flat_conv(c: &Conv) -> impl Iterator<Item = f64> + '_ {
    c.weight.iter().chain(&c.bias).copied()
}

/// Dense convolution in input and weights.
pub struct ConvOp {
    pub shape: Conv,
    pub size: (usize, usize),
}

impl DiffOp for ConvOp {
    fn name(&self) -> String {
        "conv".into()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let mut u = Unpack::new(x);
        let f = take_map(&mut u, self.shape.in_c, self.size.0, self.size.1)?;
        let conv = take_conv(&mut u, &self.shape)?;
        u.finish()?;
        Ok(conv.apply(&f, 1)?.into_data())
    }
}

/// Deformable convolution in offsets only, or in input, offsets, modulation and weights.
pub struct DeformOp {
    pub f: FeatureMap,
    pub modulation: FeatureMap,
    pub conv: Conv,
    pub offsets_only: bool,
}

impl DiffOp for DeformOp {
    fn name(&self) -> String {
        if self.offsets_only {
            "deform_conv/offsets".into()
        } else {
            "deform_conv/all".into()
        }
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let (c, h, w) = self.f.shape();
        let n = self.conv.taps();
        let mut u = Unpack::new(x);
        let out = if self.offsets_only {
            let off = take_map(&mut u, 2 * n, h, w)?;
            deform_conv(&self.f.lift(S::cst), &off, &self.modulation.lift(S::cst), &self.conv.lift(S::cst))?
        } else {
            let f = take_map(&mut u, c, h, w)?;
            let off = take_map(&mut u, 2 * n, h, w)?;
            let m = take_map(&mut u, n, h, w)?;
            let conv = take_conv(&mut u, &self.conv)?;
            deform_conv(&f, &off, &m, &conv)?
        };
        u.finish()?;
        Ok(out.into_data())
    }
}

/// Pyramid alignment in both input features.
pub struct PyramidOp {
    pub weights: PdaWeights,
    pub opts: PdaOptions,
    pub shape: (usize, usize, usize),
}

impl DiffOp for PyramidOp {
    fn name(&self) -> String {
        "pyramid_align".into()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let (c, h, w) = self.shape;
        let mut u = Unpack::new(x);
        let f = take_map(&mut u, c, h, w)?;
        let g = take_map(&mut u, c, h, w)?;
        u.finish()?;
        Ok(pyramid_align(&f, &g, &self.weights.lift(S::cst), &self.opts)?.feature.into_data())
    }
}

/// One modulation stage in its inputs and (where present) its own weights.
pub enum ModulationOp {
    Temporal { weights: TemporalWeights, shape: (usize, usize, usize) },
    Spatial { conv: Conv, shape: (usize, usize, usize) },
    Frequency { fc: Linear, basis: DctBasis, channels: usize },
    Tsfm { weights: TsfmWeights, basis: DctBasis, shape: (usize, usize, usize) },
}

impl DiffOp for ModulationOp {
    fn name(&self) -> String {
        match self {
            ModulationOp::Temporal { .. } => "temporal_modulation",
            ModulationOp::Spatial { .. } => "spatial_modulation",
            ModulationOp::Frequency { .. } => "frequency_modulation",
            ModulationOp::Tsfm { .. } => "tsfm",
        }
        .into()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let mut u = Unpack::new(x);
        let out = match self {
            ModulationOp::Temporal { weights, shape: (c, h, w) } => {
                let fa = take_map(&mut u, *c, *h, *w)?;
                let g = take_map(&mut u, *c, *h, *w)?;
                temporal_modulation(&fa, &g, &weights.lift(S::cst))?.output
            }
            ModulationOp::Spatial { conv, shape: (c, h, w) } => {
                let f = take_map(&mut u, *c, *h, *w)?;
                let k = take_conv(&mut u, conv)?;
                spatial_modulation(&f, &k)?.output
            }
            ModulationOp::Frequency { fc, basis, channels } => {
                let (h, w) = basis.size();
                let f = take_map(&mut u, *channels, h, w)?;
                let wt = u.take(fc.weight.len())?;
                let b = u.take(fc.bias.len())?;
                frequency_modulation(&f, basis, &Linear::new(fc.out_n, fc.in_n, wt, b)?)?.output
            }
            ModulationOp::Tsfm { weights, basis, shape: (c, h, w) } => {
                let fa = take_map(&mut u, *c, *h, *w)?;
                let g = take_map(&mut u, *c, *h, *w)?;
                tsfm(&fa, &g, &weights.lift(S::cst), basis)?
            }
        };
        u.finish()?;
        Ok(out.into_data())
    }
}

fn gradient_checks(r: &mut Recorder, rng: &mut SimRng, opts: &CheckOptions) {
    let (c, h, w) = (4, 16, 16);
    let mut grad = |r: &mut Recorder, name: &str, tol: f64, op: &dyn Fn(&mut SimRng) -> Result<f64>| {
        let v = op(rng);
        r.run(name, tol, || v);
    };
    let (eps, dirs) = (opts.eps, opts.directions);

    grad(r, "grad.conv", TOL_GRAD_LINEAR, &|rng| {
        let op = ConvOp {
            shape: random_conv(rng, 3, c, 3, 1.0),
            size: (h, w),
        };
        let x: Vec<f64> = random_map(rng, c, h, w).data().iter().copied().chain(flat_conv(&op.shape)).collect();
        Ok(finite_diff_check(&op, &x, eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.deform_offsets", TOL_GRAD_OFFSETS, &|rng| {
        let op = DeformOp {
            f: random_map(rng, c, h, w),
            modulation: interior_modulation(rng, 9, h, w),
            conv: random_conv(rng, c, c, 3, 1.0),
            offsets_only: true,
        };
        let x = fractional_offsets(rng, 9, h, w).into_data();
        Ok(finite_diff_check(&op, &x, eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.deform_all", TOL_GRAD_OFFSETS, &|rng| {
        let op = DeformOp {
            f: FeatureMap::zeros(c, h, w),
            modulation: FeatureMap::zeros(9, h, w),
            conv: random_conv(rng, c, c, 3, 1.0),
            offsets_only: false,
        };
        let x: Vec<f64> = random_map(rng, c, h, w)
            .into_data()
            .into_iter()
            .chain(fractional_offsets(rng, 9, h, w).into_data())
            .chain(interior_modulation(rng, 9, h, w).into_data())
            .chain(flat_conv(&op.conv))
            .collect();
        Ok(finite_diff_check(&op, &x, eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.pyramid_align", TOL_GRAD_OFFSETS, &|rng| {
        let levels = 3;
        let mut weights = random_pda(rng, c, levels, 3, 0.05);
        // constant part of every level's offsets lands on a half-pixel, far from bilinear kinks
        let mut carried = 0.0;
        for l in (0..levels).rev() {
            let target = rng.gen_range(-1i32..=1) as f64 + 0.5;
            let bias = target - opts.offset_upsample_scale * carried;
            for (o, b) in weights.offset[l].bias.iter_mut().enumerate() {
                if o < 18 {
                    *b = bias;
                }
            }
            carried = target;
        }
        let op = PyramidOp {
            weights,
            opts: PdaOptions {
                offset_upsample_scale: opts.offset_upsample_scale,
            },
            shape: (c, h, w),
        };
        let x: Vec<f64> = random_map(rng, 2 * c, h, w).into_data();
        Ok(finite_diff_check(&op, &x, eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.temporal_modulation", TOL_GRAD_ATTENTION, &|rng| {
        let op = ModulationOp::Temporal {
            weights: TemporalWeights {
                embed: vec![random_conv(rng, c, c, 3, 1.0), random_conv(rng, c, c, 3, 1.0)],
                fuse: random_conv(rng, c, 2 * c, 3, 1.0),
            },
            shape: (c, h, w),
        };
        Ok(finite_diff_check(&op, random_map(rng, 2 * c, h, w).data(), eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.spatial_modulation", TOL_GRAD_ATTENTION, &|rng| {
        let conv = random_conv(rng, 1, 2, 7, 1.0);
        let x: Vec<f64> = random_map(rng, c, h, w).into_data().into_iter().chain(flat_conv(&conv)).collect();
        let op = ModulationOp::Spatial { conv, shape: (c, h, w) };
        Ok(finite_diff_check(&op, &x, eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.frequency_modulation", TOL_GRAD_ATTENTION, &|rng| {
        let fc = random_linear(rng, c, c, 1.0);
        let x: Vec<f64> = random_map(rng, c, h, w)
            .into_data()
            .into_iter()
            .chain(fc.weight.iter().chain(&fc.bias).copied())
            .collect();
        let op = ModulationOp::Frequency {
            fc,
            basis: DctBasis::lowest(h, w, 4)?,
            channels: c,
        };
        Ok(finite_diff_check(&op, &x, eps, dirs, rng)?.max_rel_err)
    });
    grad(r, "grad.tsfm", TOL_GRAD_ATTENTION, &|rng| {
        let op = ModulationOp::Tsfm {
            weights: TsfmWeights {
                temporal: TemporalWeights {
                    embed: vec![random_conv(rng, c, c, 3, 1.0), random_conv(rng, c, c, 3, 1.0)],
                    fuse: random_conv(rng, c, 2 * c, 3, 1.0),
                },
                spatial: random_conv(rng, 1, 2, 7, 1.0),
                frequency: random_linear(rng, c, c, 1.0),
            },
            basis: DctBasis::lowest(h, w, 4)?,
            shape: (c, h, w),
        };
        Ok(finite_diff_check(&op, random_map(rng, 2 * c, h, w).data(), eps, dirs, rng)?.max_rel_err)
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_shift_needs_doubling() {
        let mut rng = stream_rng(1, 0);
        let e = planted_shift_error(&mut rng, 2.0).unwrap();
        assert!(e < 1e-6, "{e}");
        let mut rng = stream_rng(1, 0);
        assert!(planted_shift_error(&mut rng, 1.0).unwrap() > 1e-3);
    }
}

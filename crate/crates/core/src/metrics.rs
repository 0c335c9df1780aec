//! Detection scoring: Pd, Fa, ROC and AUC with scene-level breakdown.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use image::{GrayImage, Luma};
use imageproc::region_labelling::{connected_components, Connectivity};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imggeo::ImageF;
use crate::stats::ComplexityLevel;

/// Centroid distance below which a prediction detects a target, in pixels.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 3.0;
/// Fixed binarization threshold for Pd and Fa.
pub const DEFAULT_BINARIZATION: f64 = 0.5;
pub const DEFAULT_ROC_THRESHOLDS: usize = 101;

/// 8-connected predicted region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub centroid: (f64, f64),
    pub pixels: usize,
}

/// 8-connected components of a binary map, in label order.
pub fn components(bits: &[bool], height: usize, width: usize) -> Result<Vec<Component>> {
    if bits.len() != height * width {
        return Err(Error::invalid(format!(
            "binary map has {} pixels, expected {height}x{width}",
            bits.len()
        )));
    }
    if !bits.iter().any(|b| *b) {
        return Ok(Vec::new());
    }
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        Luma([u8::from(bits[y as usize * width + x as usize])])
    });
    let labels = connected_components(&img, Connectivity::Eight, Luma([0u8]));
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for (x, y, l) in labels.enumerate_pixels() {
        let l = l[0] as usize;
        if l == 0 {
            continue;
        }
        if acc.len() < l {
            acc.resize(l, (0.0, 0.0, 0));
        }
        let a = &mut acc[l - 1];
        a.0 += x as f64;
        a.1 += y as f64;
        a.2 += 1;
    }
    Ok(acc
        .into_iter()
        .filter(|a| a.2 > 0)
        .map(|(sx, sy, n)| Component {
            centroid: (sx / n as f64, sy / n as f64),
            pixels: n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// One-to-one by ascending centroid distance.
    #[default]
    Greedy,
    /// Maximum one-to-one matching, ties broken by smallest total distance.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub td: usize,
    pub matched_pred: Vec<bool>,
    /// `(pred, gt, distance)` triples.
    pub pairs: Vec<(usize, usize, f64)>,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// One-to-one matching of predicted and ground-truth centroids at distance `< threshold`.
pub fn match_detections(pred: &[(f64, f64)], gt: &[(f64, f64)], threshold: f64, mode: Matching) -> Result<MatchResult> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("match threshold must be positive, got {threshold}")));
    }
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pc) in pred.iter().enumerate() {
        for (g, gc) in gt.iter().enumerate() {
            let d = dist(*pc, *gc);
            if d < threshold {
                cand.push((d, p, g));
            }
        }
    }
    let mut out = MatchResult {
        td: 0,
        matched_pred: vec![false; pred.len()],
        pairs: Vec::new(),
    };
    match mode {
        Matching::Greedy => {
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut gt_used = vec![false; gt.len()];
            for (d, p, g) in cand {
                if !out.matched_pred[p] && !gt_used[g] {
                    out.matched_pred[p] = true;
                    gt_used[g] = true;
                    out.pairs.push((p, g, d));
                }
            }
        }
        Matching::Optimal => {
            let mut preds: Vec<usize> = cand.iter().map(|c| c.1).collect();
            let mut gts: Vec<usize> = cand.iter().map(|c| c.2).collect();
            for v in [&mut preds, &mut gts] {
                v.sort_unstable();
                v.dedup();
            }
            if !cand.is_empty() {
                // every edge outweighs any sum of distance penalties, so count is maximized first
                const EDGE: i64 = 1 << 40;
                let weight = |p: usize, g: usize| {
                    let d = dist(pred[p], gt[g]);
                    if d < threshold {
                        EDGE - (d * 1e6).round() as i64
                    } else {
                        0
                    }
                };
                let rows_are_gt = gts.len() <= preds.len();
                let (rows, cols) = if rows_are_gt { (&gts, &preds) } else { (&preds, &gts) };
                let m = Matrix::from_fn(rows.len(), cols.len(), |(r, c)| {
                    if rows_are_gt {
                        weight(cols[c], rows[r])
                    } else {
                        weight(rows[r], cols[c])
                    }
                });
                let (_, assign) = kuhn_munkres(&m);
                for (r, c) in assign.into_iter().enumerate() {
                    let (p, g) = if rows_are_gt { (cols[c], rows[r]) } else { (rows[r], cols[c]) };
                    let d = dist(pred[p], gt[g]);
                    if d < threshold {
                        out.matched_pred[p] = true;
                        out.pairs.push((p, g, d));
                    }
                }
                out.pairs.sort_by_key(|a| (a.0, a.1));
            }
        }
    }
    out.td = out.pairs.len();
    Ok(out)
}

/// Integer tallies behind Pd and Fa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    /// Truly detected targets.
    pub td: u64,
    /// All targets.
    pub at: u64,
    /// Pixels of predicted components matched to no target.
    pub fd: u64,
    /// All pixels.
    pub np: u64,
}

impl Counts {
    /// `TD / AT`, or `None` when there are no targets.
    pub fn pd(&self) -> Option<f64> {
        (self.at > 0).then(|| self.td as f64 / self.at as f64)
    }

    pub fn fa(&self) -> f64 {
        if self.np == 0 {
            0.0
        } else {
            self.fd as f64 / self.np as f64
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.td += o.td;
        self.at += o.at;
        self.fd += o.fd;
        self.np += o.np;
    }
}

/// Counts for one binary prediction map against the frame's target centroids.
pub fn frame_counts(
    bits: &[bool],
    height: usize,
    width: usize,
    gt: &[(f64, f64)],
    threshold: f64,
    mode: Matching,
) -> Result<Counts> {
    let comps = components(bits, height, width)?;
    let cents: Vec<(f64, f64)> = comps.iter().map(|c| c.centroid).collect();
    let m = match_detections(&cents, gt, threshold, mode)?;
    let fd: usize = comps
        .iter()
        .zip(&m.matched_pred)
        .filter(|(_, hit)| !**hit)
        .map(|(c, _)| c.pixels)
        .sum();
    Ok(Counts {
        td: m.td as u64,
        at: gt.len() as u64,
        fd: fd as u64,
        np: (height * width) as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdFa {
    pub counts: Counts,
    pub pd: Option<f64>,
    pub fa: f64,
}

/// Pd and Fa over a set of binary frames.
pub fn pd_fa(
    preds: &[Vec<bool>],
    size: (usize, usize),
    gt: &[Vec<(f64, f64)>],
    threshold: f64,
    mode: Matching,
) -> Result<PdFa> {
    if preds.len() != gt.len() {
        return Err(Error::FrameMismatch(format!("{} prediction frames vs {} ground-truth frames", preds.len(), gt.len())));
    }
    let mut c = Counts::default();
    for (p, g) in preds.iter().zip(gt) {
        c += frame_counts(p, size.0, size.1, g, threshold, mode)?;
    }
    Ok(PdFa {
        counts: c,
        pd: c.pd(),
        fa: c.fa(),
    })
}

/// Binarization thresholds `0, 1/(n-1), ..., 1`.
pub fn sweep_thresholds(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!("ROC needs at least 2 thresholds, got {n}")));
    }
    Ok((0..n)
        .map(|i| if i == n - 1 { 1.0 } else { i as f64 / (n - 1) as f64 })
        .collect())
}

/// A pixel is a detection when its confidence is positive and reaches the threshold.
pub fn binarize(conf: &ImageF, threshold: f64) -> Vec<bool> {
    conf.data().iter().map(|&v| v > 0.0 && v >= threshold).collect()
}

fn check_confidence(conf: &ImageF) -> Result<()> {
    match conf.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::invalid(format!("confidence {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub binarization: f64,
    pub match_threshold: f64,
    pub n_thresholds: usize,
    pub matching: Matching,
    pub auc_domain: AucDomain,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            binarization: DEFAULT_BINARIZATION,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            n_thresholds: DEFAULT_ROC_THRESHOLDS,
            matching: Matching::Greedy,
            auc_domain: AucDomain::MaxObserved,
        }
    }
}

/// Counts at the fixed threshold and at every sweep threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepCounts {
    pub fixed: Counts,
    pub sweep: Vec<Counts>,
}

impl AddAssign<&SweepCounts> for SweepCounts {
    fn add_assign(&mut self, o: &SweepCounts) {
        self.fixed += o.fixed;
        if self.sweep.is_empty() {
            self.sweep = vec![Counts::default(); o.sweep.len()];
        }
        for (a, b) in self.sweep.iter_mut().zip(&o.sweep) {
            *a += *b;
        }
    }
}

/// Scores one confidence frame at the fixed threshold and across the sweep.
///
/// Thresholds that select the same pixel set share one evaluation.
pub fn sweep_frame(conf: &ImageF, gt: &[(f64, f64)], opts: &EvalOptions) -> Result<SweepCounts> {
    check_confidence(conf)?;
    let (h, w) = (conf.height(), conf.width());
    let mut levels: Vec<f64> = conf.data().iter().copied().filter(|v| *v > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // smallest present positive value that passes `t`; thresholds with the same cut select the same pixels
    let cut = |t: f64| levels.iter().position(|v| *v >= t);
    let mut cache: BTreeMap<Option<usize>, Counts> = BTreeMap::new();
    let mut eval = |t: f64| -> Result<Counts> {
        let key = cut(t);
        if let Some(c) = cache.get(&key) {
            return Ok(*c);
        }
        let c = frame_counts(&binarize(conf, t), h, w, gt, opts.match_threshold, opts.matching)?;
        cache.insert(key, c);
        Ok(c)
    };
    let fixed = eval(opts.binarization)?;
    let sweep = sweep_thresholds(opts.n_thresholds)?
        .into_iter()
        .map(&mut eval)
        .collect::<Result<_>>()?;
    Ok(SweepCounts { fixed, sweep })
}

/// Integration domain of the false-alarm axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AucDomain {
    /// `fa` normalized by the largest observed value.
    #[default]
    MaxObserved,
    /// `fa` restricted to `[0, max_fa]` and normalized by it.
    Fixed { max_fa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocSample {
    pub threshold: f64,
    pub fa: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// One sample per threshold, thresholds ascending.
    pub samples: Vec<RocSample>,
    /// `(fa, pd)` sorted by fa, from `(0, 0)` to `(fa_max, pd_max)`, pd made nondecreasing.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    /// Adjacent sweep steps where lowering the threshold decreased TD or FD.
    pub monotonicity_violations: usize,
}

/// ROC curve and AUC from per-threshold counts.
pub fn roc_from_counts(thresholds: &[f64], sweep: &[Counts], domain: AucDomain) -> RocCurve {
    let samples: Vec<RocSample> = thresholds
        .iter()
        .zip(sweep)
        .map(|(t, c)| RocSample {
            threshold: *t,
            fa: c.fa(),
            pd: c.pd().unwrap_or(0.0),
        })
        .collect();
    let monotonicity_violations = sweep
        .windows(2)
        .filter(|w| w[0].td < w[1].td || w[0].fd < w[1].fd)
        .count();

    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.fa, s.pd)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let fa_max = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let pd_max = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut points = vec![(0.0, 0.0)];
    points.extend(pts);
    points.push((fa_max, pd_max));
    let mut best = 0.0f64;
    for p in &mut points {
        best = best.max(p.1);
        p.1 = best;
    }
    points.dedup();

    let auc = match domain {
        AucDomain::MaxObserved => {
            if fa_max == 0.0 {
                pd_max
            } else {
                trapezoid(&points, fa_max)
            }
        }
        AucDomain::Fixed { max_fa } => {
            let mut clipped: Vec<(f64, f64)> = Vec::new();
            for w in points.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a.0 >= max_fa {
                    break;
                }
                clipped.push(a);
                if b.0 > max_fa {
                    let f = (max_fa - a.0) / (b.0 - a.0);
                    clipped.push((max_fa, a.1 + f * (b.1 - a.1)));
                }
            }
            let last = *points.last().expect("non-empty");
            if last.0 <= max_fa {
                clipped.push(last);
                clipped.push((max_fa, last.1));
            }
            trapezoid(&clipped, max_fa)
        }
    };
    RocCurve {
        samples,
        points,
        auc: auc.clamp(0.0, 1.0),
        monotonicity_violations,
    }
}

fn trapezoid(points: &[(f64, f64)], scale: f64) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) / scale * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// ROC and AUC over a set of confidence frames.
pub fn roc_auc(conf: &[ImageF], gt: &[Vec<(f64, f64)>], opts: &EvalOptions) -> Result<RocCurve> {
    if conf.len() != gt.len() {
        return Err(Error::FrameMismatch(format!("{} prediction frames vs {} ground-truth frames", conf.len(), gt.len())));
    }
    let mut total = SweepCounts::default();
    for (c, g) in conf.iter().zip(gt) {
        total += &sweep_frame(c, g, opts)?;
    }
    Ok(roc_from_counts(&sweep_thresholds(opts.n_thresholds)?, &total.sweep, opts.auc_domain))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneLevel {
    Easy,
    Medium,
    Complex,
}

impl SceneLevel {
    /// Easy: SCR > 6 and complexity < 1000; complex: SCR < 6 and complexity > 1000; medium otherwise.
    pub fn classify(scr: f64, complexity: f64) -> Self {
        if scr > 6.0 && complexity < 1000.0 {
            SceneLevel::Easy
        } else if scr < 6.0 && complexity > 1000.0 {
            SceneLevel::Complex
        } else {
            SceneLevel::Medium
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub frames: usize,
    pub counts: Counts,
    #[serde(with = "nan_or_null")]
    pub pd: f64,
    pub fa: f64,
    pub auc: f64,
    pub roc: RocCurve,
}

impl Score {
    pub fn from_sweep(total: &SweepCounts, frames: usize, opts: &EvalOptions) -> Result<Self> {
        let roc = roc_from_counts(&sweep_thresholds(opts.n_thresholds)?, &total.sweep, opts.auc_domain);
        Ok(Self {
            frames,
            counts: total.fixed,
            pd: total.fixed.pd().unwrap_or(f64::NAN),
            fa: total.fixed.fa(),
            auc: roc.auc,
            roc,
        })
    }
}

/// Scores per sequence, aggregated overall and per scene level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub options: EvalOptions,
    pub overall: Score,
    pub per_scene: BTreeMap<SceneLevel, Score>,
    pub sequences: Vec<SequenceScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub name: String,
    pub scene: SceneLevel,
    #[serde(with = "crate::stats::finite_or_null")]
    pub mean_scr: f64,
    pub complexity: f64,
    pub complexity_level: ComplexityLevel,
    pub frames: usize,
    pub counts: Counts,
}

/// One evaluated sequence: scene attributes and its summed counts.
pub struct SequenceEval {
    pub name: String,
    pub mean_scr: f64,
    pub complexity: f64,
    pub frames: usize,
    pub counts: SweepCounts,
}

pub fn score_report(seqs: &[SequenceEval], opts: &EvalOptions) -> Result<ScoreReport> {
    let mut all = SweepCounts::default();
    let mut frames = 0;
    let mut scenes: BTreeMap<SceneLevel, (SweepCounts, usize)> = BTreeMap::new();
    let mut sequences = Vec::with_capacity(seqs.len());
    for s in seqs {
        all += &s.counts;
        frames += s.frames;
        let level = SceneLevel::classify(s.mean_scr, s.complexity);
        let e = scenes.entry(level).or_default();
        e.0 += &s.counts;
        e.1 += s.frames;
        sequences.push(SequenceScore {
            name: s.name.clone(),
            scene: level,
            mean_scr: s.mean_scr,
            complexity: s.complexity,
            complexity_level: ComplexityLevel::from_value(s.complexity),
            frames: s.frames,
            counts: s.counts.fixed,
        });
    }
    if all.sweep.is_empty() {
        all.sweep = vec![Counts::default(); opts.n_thresholds];
    }
    let per_scene = scenes
        .into_iter()
        .map(|(k, (c, f))| Ok((k, Score::from_sweep(&c, f, opts)?)))
        .collect::<Result<_>>()?;
    Ok(ScoreReport {
        options: *opts,
        overall: Score::from_sweep(&all, frames, opts)?,
        per_scene,
        sequences,
    })
}

/// Writes NaN as `null` and reads `null` back as NaN.
mod nan_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

//! On-disk dataset layout: generation, statistics and evaluation.
//!
//! ```text
//! OUT/seq_0000/frames/000001.png   16-bit grayscale, scaled by `intensity_scale`
//! OUT/seq_0000/masks/000001.png    8-bit instance ids, 0 = background
//! OUT/seq_0000/annotations.json
//! OUT/seq_0000/record.json         resolved parameters, seed, RNG and version
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compose::{FrameAnnotation, ResolvedSequence, Scene};
use crate::error::{Error, Result};
use crate::imggeo::ImageF;
use crate::metrics::{score_report, sweep_frame, EvalOptions, ScoreReport, SequenceEval, SweepCounts};
use crate::motion::curve_sample;
use crate::rng::RNG_ALGORITHM;
use crate::spec::{BackgroundSpec, SequenceSpec};
use crate::stats::{
    frame_complexity, mean_speed, BinSummary, ComplexityLevel, ComplexityReport, ScrLevel, ShapeBin, SpeedLevel,
    TargetAttributes,
};

pub const ANNOTATION_SCHEMA: &str = "irsatsim.annotations/1";
pub const RECORD_SCHEMA: &str = "irsatsim.record/1";
pub const STATS_SCHEMA: &str = "irsatsim.stats/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const U16_MAX: f64 = u16::MAX as f64;

/// Maps stored 16-bit codes back to intensities: `value = offset + code * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityScale {
    pub offset: f64,
    pub step: f64,
}

impl IntensityScale {
    pub fn from_range(lo: f64, hi: f64) -> Self {
        let span = if hi > lo { hi - lo } else { 1.0 };
        Self {
            offset: lo,
            step: span / U16_MAX,
        }
    }

    pub fn encode(&self, v: f64) -> u16 {
        ((v - self.offset) / self.step).round().clamp(0.0, U16_MAX) as u16
    }

    pub fn decode(&self, code: u16) -> f64 {
        self.offset + code as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub schema: String,
    pub sequence: String,
    pub frames: usize,
    /// `(H0, W0)`.
    pub fov: (usize, usize),
    pub intensity_scale: IntensityScale,
    pub annotations: Vec<FrameAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub schema: String,
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub index: usize,
    pub spec: SequenceSpec,
    pub resolved: ResolvedSequence,
}

pub fn sequence_name(index: usize) -> String {
    format!("seq_{index:04}")
}

pub fn frame_name(frame: usize) -> String {
    format!("{frame:06}.png")
}

/// Thread pool with `workers` threads; 0 picks the rayon default.
pub fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_frame(path: &Path, img: &ImageF, scale: &IntensityScale) -> Result<()> {
    let data: Vec<u16> = img.data().iter().map(|v| scale.encode(*v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer size");
    buf.save(path).map_err(image_err(path))
}

pub fn write_mask(path: &Path, ids: &[u8], height: usize, width: usize) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, &[u8]> = ImageBuffer::from_raw(width as u32, height as u32, ids).expect("buffer size");
    buf.save(path).map_err(image_err(path))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(image_err(path))
}

/// Grayscale image with its native code values (0..=255 or 0..=65535).
pub fn read_gray(path: &Path) -> Result<ImageF> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(f64::from).collect(),
        other => other.to_luma16().into_raw().into_iter().map(f64::from).collect(),
    };
    ImageF::new(h, w, data)
}

/// Frame intensities decoded with `scale`.
pub fn read_frame(path: &Path, scale: &IntensityScale) -> Result<ImageF> {
    let img = open_image(path)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    ImageF::new(h, w, img.into_raw().into_iter().map(|c| scale.decode(c)).collect())
}

/// Confidence map in `[0, 1]`: 8-bit codes over 255, 16-bit codes over 65535.
pub fn read_confidence(path: &Path) -> Result<ImageF> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|c| c as f64 / U16_MAX).collect(),
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|c| c as f64 / 255.0).collect(),
        other => other.to_luma8().into_raw().into_iter().map(|c| c as f64 / 255.0).collect(),
    };
    ImageF::new(h, w, data)
}

/// Summary of a `generate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub output: PathBuf,
    pub sequences: Vec<GeneratedSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSequence {
    pub name: String,
    pub frames: usize,
    pub targets: usize,
    pub annotations: usize,
}

/// Renders every sequence of `spec` into `out`.
pub fn generate(spec: &SequenceSpec, out: &Path, workers: usize) -> Result<GenerateSummary> {
    let resolved = (0..spec.sequences).map(|i| spec.resolve(i)).collect::<Result<Vec<_>>>()?;
    let background = match &spec.background {
        BackgroundSpec::Image { path } => Some(read_gray(path)?),
        _ => None,
    };
    create_dir(out)?;
    let sequences = pool(workers)?.install(|| {
        resolved
            .par_iter()
            .enumerate()
            .map(|(i, seq)| write_sequence(spec, i, seq, background.clone(), out))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(GenerateSummary {
        output: out.to_path_buf(),
        sequences,
    })
}

fn write_sequence(
    spec: &SequenceSpec,
    index: usize,
    seq: &ResolvedSequence,
    background: Option<ImageF>,
    out: &Path,
) -> Result<GeneratedSequence> {
    let name = sequence_name(index);
    let dir = out.join(&name);
    let (frames_dir, masks_dir) = (dir.join("frames"), dir.join("masks"));
    create_dir(&frames_dir)?;
    create_dir(&masks_dir)?;
    let scene = Scene::new(seq, background)?;
    let (lo, hi) = scene.intensity_range();
    let scale = IntensityScale::from_range(lo, hi);
    let (fh, fw) = seq.fov;
    let annotations = (0..scene.frames())
        .into_par_iter()
        .map(|t| {
            let r = scene.render_frame(t)?;
            write_frame(&frames_dir.join(frame_name(t + 1)), &r.image, &scale)?;
            write_mask(&masks_dir.join(frame_name(t + 1)), &r.id_mask, fh, fw)?;
            Ok(r.annotation)
        })
        .collect::<Result<Vec<_>>>()?;
    let count = annotations.iter().map(|a| a.instances.len()).sum();
    write_json(
        &dir.join("annotations.json"),
        &AnnotationFile {
            schema: ANNOTATION_SCHEMA.into(),
            sequence: name.clone(),
            frames: seq.frames,
            fov: seq.fov,
            intensity_scale: scale,
            annotations,
        },
    )?;
    write_json(
        &dir.join("record.json"),
        &SequenceRecord {
            schema: RECORD_SCHEMA.into(),
            version: VERSION.into(),
            rng: RNG_ALGORITHM.into(),
            seed: spec.seed,
            index,
            spec: spec.clone(),
            resolved: seq.clone(),
        },
    )?;
    log::info!("{name}: {} frames, {} targets, {count} annotations", seq.frames, seq.targets.len());
    Ok(GeneratedSequence {
        name,
        frames: seq.frames,
        targets: seq.targets.len(),
        annotations: count,
    })
}

/// Sorted `seq_*` directories under `root`.
pub fn sequence_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seq_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!("no seq_* directories in {}", root.display())));
    }
    Ok(dirs)
}

pub fn load_annotations(seq_dir: &Path) -> Result<AnnotationFile> {
    let a: AnnotationFile = read_json(&seq_dir.join("annotations.json"))?;
    if a.schema != ANNOTATION_SCHEMA {
        return Err(Error::format("annotations", format!("unsupported schema {:?}", a.schema)));
    }
    if a.annotations.len() != a.frames {
        return Err(Error::format(
            "annotations",
            format!("{} frame entries for {} frames", a.annotations.len(), a.frames),
        ));
    }
    Ok(a)
}

pub fn load_record(seq_dir: &Path) -> Result<SequenceRecord> {
    let r: SequenceRecord = read_json(&seq_dir.join("record.json"))?;
    if r.schema != RECORD_SCHEMA {
        return Err(Error::format("record", format!("unsupported schema {:?}", r.schema)));
    }
    Ok(r)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Per-frame complexity of a sequence's stored frames.
pub fn sequence_complexity(seq_dir: &Path, frames: usize) -> Result<ComplexityReport> {
    let dir = seq_dir.join("frames");
    let per_frame = (1..=frames)
        .into_par_iter()
        .map(|t| read_gray(&dir.join(frame_name(t))).map(|img| frame_complexity(&img)))
        .collect::<Result<Vec<f64>>>()?;
    if per_frame.is_empty() {
        return Err(Error::invalid(format!("{} has no frames", seq_dir.display())));
    }
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(ComplexityReport {
        per_frame,
        mean,
        level: ComplexityLevel::from_value(mean),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub name: String,
    pub frames: usize,
    pub complexity: ComplexityReport,
    pub background_speed: f64,
    pub background_speed_level: SpeedLevel,
    pub targets: Vec<TargetAttributes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub schema: String,
    pub sequences: Vec<SequenceStats>,
    pub summary: BinSummary,
}

/// Attributes of every annotated target: SCR measured at its first annotated frame,
/// speed and shape from its annotations in frame coordinates, swerves from the record.
pub fn target_attributes(ann: &AnnotationFile, record: &SequenceRecord) -> Vec<TargetAttributes> {
    struct Acc {
        scr: Option<f64>,
        path: Vec<(f64, f64)>,
        area: f64,
        ecc: f64,
        n: usize,
    }
    let mut by_id: BTreeMap<u32, Acc> = BTreeMap::new();
    for fa in &ann.annotations {
        for inst in fa.instances.iter().filter(|i| i.visible) {
            let a = by_id.entry(inst.id).or_insert(Acc {
                scr: None,
                path: Vec::new(),
                area: 0.0,
                ecc: 0.0,
                n: 0,
            });
            if a.scr.is_none() && !inst.scr.is_nan() {
                a.scr = Some(inst.scr);
            }
            a.path.push(inst.centroid);
            a.area += inst.area as f64;
            a.ecc += inst.eccentricity;
            a.n += 1;
        }
    }
    by_id
        .into_iter()
        .map(|(id, a)| {
            let scr = a.scr.unwrap_or(f64::INFINITY);
            let speed = mean_speed(&a.path).unwrap_or(0.0);
            let ecc = a.ecc / a.n as f64;
            let swerves = record
                .resolved
                .targets
                .iter()
                .find(|t| t.id == id)
                .map_or(0, |t| t.trajectory.swerves());
            TargetAttributes {
                id,
                scr,
                scr_level: ScrLevel::from_scr(scr),
                speed,
                speed_level: SpeedLevel::from_speed(speed),
                swerves,
                mean_area: a.area / a.n as f64,
                eccentricity: ecc,
                shape_bin: ShapeBin::from_eccentricity(ecc),
            }
        })
        .collect()
}

/// Statistics of a generated dataset; a pure function of its files.
pub fn dataset_stats(root: &Path, workers: usize) -> Result<DatasetStats> {
    let dirs = sequence_dirs(root)?;
    let sequences = pool(workers)?.install(|| {
        dirs.iter()
            .map(|d| {
                let ann = load_annotations(d)?;
                let record = load_record(d)?;
                let complexity = sequence_complexity(d, ann.frames)?;
                let path = curve_sample(&record.resolved.motion.translation, record.resolved.frames)?;
                let background_speed = mean_speed(&path)?;
                Ok((
                    SequenceStats {
                        name: dir_name(d),
                        frames: ann.frames,
                        complexity,
                        background_speed,
                        background_speed_level: SpeedLevel::from_speed(background_speed),
                        targets: target_attributes(&ann, &record),
                    },
                    ann,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut summary = BinSummary::default();
    for (s, ann) in &sequences {
        summary.add_sequence(s.complexity.level, s.background_speed_level);
        for t in &s.targets {
            summary.add_target(t);
        }
        for inst in ann.annotations.iter().flat_map(|a| &a.instances) {
            summary.add_annotation(inst.area, inst.eccentricity);
        }
    }
    summary.finish();
    Ok(DatasetStats {
        schema: STATS_SCHEMA.into(),
        sequences: sequences.into_iter().map(|(s, _)| s).collect(),
        summary,
    })
}

/// Ground-truth points per frame: centroids of the annotated masks.
pub fn gt_centroids(ann: &AnnotationFile) -> Vec<Vec<(f64, f64)>> {
    ann.annotations
        .iter()
        .map(|fa| {
            fa.instances
                .iter()
                .filter(|i| i.visible)
                .filter_map(|i| {
                    let n = i.mask.area();
                    (n > 0).then(|| {
                        let (sx, sy) = i.mask.points().fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x as f64, sy + y as f64));
                        (sx / n as f64, sy / n as f64)
                    })
                })
                .collect()
        })
        .collect()
}

/// Where the prediction maps of one sequence live.
enum PredSource {
    /// A generated dataset: instance masks binarized to 0/1.
    Masks(PathBuf),
    Confidence(PathBuf),
}

fn pred_source(pred_root: &Path, name: &str) -> Result<PredSource> {
    let dir = pred_root.join(name);
    if !dir.is_dir() {
        return Err(Error::FrameMismatch(format!("prediction directory {} is missing", dir.display())));
    }
    let masks = dir.join("masks");
    if masks.is_dir() && dir.join("annotations.json").is_file() {
        Ok(PredSource::Masks(masks))
    } else {
        Ok(PredSource::Confidence(dir))
    }
}

fn list_png(dir: &Path) -> Result<BTreeSet<String>> {
    Ok(fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect())
}

fn check_frame_set(dir: &Path, frames: usize) -> Result<()> {
    let present = list_png(dir)?;
    let expected: BTreeSet<String> = (1..=frames).map(frame_name).collect();
    let missing: Vec<&String> = expected.difference(&present).collect();
    let extra: Vec<&String> = present.difference(&expected).collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let show = |v: &[&String]| {
        let mut s = v.iter().take(10).map(|n| n.as_str()).collect::<Vec<_>>().join(", ");
        if v.len() > 10 {
            s.push_str(&format!(" and {} more", v.len() - 10));
        }
        s
    };
    let mut msg = format!("{}: expected {frames} frames", dir.display());
    if !missing.is_empty() {
        msg.push_str(&format!("; missing {}", show(&missing)));
    }
    if !extra.is_empty() {
        msg.push_str(&format!("; unexpected {}", show(&extra)));
    }
    Err(Error::FrameMismatch(msg))
}

fn load_prediction(src: &PredSource, frame: usize, fov: (usize, usize)) -> Result<ImageF> {
    let (path, img) = match src {
        PredSource::Masks(d) => {
            let p = d.join(frame_name(frame));
            let m = read_gray(&p)?;
            let bin = m.data().iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
            (p, ImageF::new(m.height(), m.width(), bin)?)
        }
        PredSource::Confidence(d) => {
            let p = d.join(frame_name(frame));
            let c = read_confidence(&p)?;
            (p, c)
        }
    };
    if (img.height(), img.width()) != fov {
        return Err(Error::FrameMismatch(format!(
            "{} is {}x{}, ground truth is {}x{}",
            path.display(),
            img.height(),
            img.width(),
            fov.0,
            fov.1
        )));
    }
    Ok(img)
}

/// Scores the predictions under `pred` against the dataset under `gt`.
///
/// `pred/seq_XXXX/` holds either `NNNNNN.png` confidence maps or a generated
/// sequence, whose instance masks are then used as binary predictions.
pub fn evaluate(pred: &Path, gt: &Path, opts: &EvalOptions, workers: usize) -> Result<ScoreReport> {
    let dirs = sequence_dirs(gt)?;
    let seqs = pool(workers)?.install(|| {
        dirs.iter()
            .map(|d| {
                let name = dir_name(d);
                let ann = load_annotations(d)?;
                let src = pred_source(pred, &name)?;
                let pdir = match &src {
                    PredSource::Masks(p) | PredSource::Confidence(p) => p,
                };
                check_frame_set(pdir, ann.frames)?;
                let points = gt_centroids(&ann);
                let per_frame = (0..ann.frames)
                    .into_par_iter()
                    .map(|t| sweep_frame(&load_prediction(&src, t + 1, ann.fov)?, &points[t], opts))
                    .collect::<Result<Vec<_>>>()?;
                let mut counts = SweepCounts::default();
                for c in &per_frame {
                    counts += c;
                }
                let scrs: Vec<f64> = ann
                    .annotations
                    .iter()
                    .flat_map(|a| &a.instances)
                    .map(|i| i.scr)
                    .filter(|v| v.is_finite())
                    .collect();
                let mean_scr = if scrs.is_empty() {
                    0.0
                } else {
                    scrs.iter().sum::<f64>() / scrs.len() as f64
                };
                let complexity = sequence_complexity(d, ann.frames)?.mean;
                Ok(SequenceEval {
                    name,
                    mean_scr,
                    complexity,
                    frames: ann.frames,
                    counts,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    score_report(&seqs, opts)
}

pub fn write_report<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(path, v)
}

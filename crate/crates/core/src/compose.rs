//! Target/background superposition and per-frame annotation.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imggeo::{warp, Homography, ImageF};
use crate::motion::{pose_sequence, MotionSpec, PoseChain};
use crate::rng::{stream_rng, uniform};
use crate::stats::{self, local_background, mean_std, MaskPatch, PixelBox};
use crate::target::{
    render_gaussian, AppearanceRanges, GaussianSpec, TargetSpec, TargetTrack, Template, DEFAULT_MASK_THRESHOLD,
    DEFAULT_SUPPORT_THRESHOLD,
};

/// Frame-1 local background statistics and requested SCR of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub scr: f64,
    pub mu_lb1: f64,
    pub sigma_lb1: f64,
}

/// `E = (scr * sigma + mu) * (1 + a)`.
pub fn target_intensity(model: &IntensityModel, accel: f64) -> f64 {
    let e = (model.scr * model.sigma_lb1 + model.mu_lb1) * (1.0 + accel);
    if e <= 0.0 {
        log::warn!("target intensity {e} is not positive (accel {accel})");
    }
    e
}

/// Target image `I^T` placed at a fractional position by a bilinear splat.
#[derive(Debug, Clone)]
pub struct TargetPatch {
    /// Patch extent in frame coordinates (may leave the frame).
    pub bbox: PixelBox,
    pub data: Vec<f64>,
}

impl TargetPatch {
    pub fn get(&self, x: i64, y: i64) -> f64 {
        if !self.bbox.contains(x, y) {
            return 0.0;
        }
        self.data[(y - self.bbox.y) as usize * self.bbox.w + (x - self.bbox.x) as usize]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Spreads `template * intensity` over the four integer anchors around `position`.
pub fn splat(template: &Template, intensity: f64, position: (f64, f64)) -> Result<TargetPatch> {
    if !(position.0.is_finite() && position.1.is_finite() && intensity.is_finite()) {
        return Err(Error::invalid("target position and intensity must be finite"));
    }
    let (x0, y0) = (position.0.floor(), position.1.floor());
    let (fx, fy) = (position.0 - x0, position.1 - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let anchors: Vec<((i64, i64), f64)> = [
        ((x0, y0), (1.0 - fx) * (1.0 - fy)),
        ((x0 + 1, y0), fx * (1.0 - fy)),
        ((x0, y0 + 1), (1.0 - fx) * fy),
        ((x0 + 1, y0 + 1), fx * fy),
    ]
    .into_iter()
    .filter(|(_, w)| *w > 0.0)
    .collect();
    let (rx, ry) = (template.radius.0 as i64, template.radius.1 as i64);
    let ax = anchors.iter().map(|a| a.0 .0);
    let ay = anchors.iter().map(|a| a.0 .1);
    let bx = ax.clone().min().unwrap() - rx;
    let by = ay.clone().min().unwrap() - ry;
    let bbox = PixelBox {
        x: bx,
        y: by,
        w: (ax.max().unwrap() + rx - bx + 1) as usize,
        h: (ay.max().unwrap() + ry - by + 1) as usize,
    };
    let mut data = vec![0.0; bbox.w * bbox.h];
    for &((cx, cy), wgt) in &anchors {
        for dy in -ry..=ry {
            for dx in -rx..=rx {
                let v = template.value(dx, dy);
                if v > 0.0 {
                    let i = (cy + dy - by) as usize * bbox.w + (cx + dx - bx) as usize;
                    data[i] += wgt * v;
                }
            }
        }
    }
    for v in &mut data {
        *v *= intensity;
    }
    Ok(TargetPatch { bbox, data })
}

/// Adaptive weighted sum `Norm(I^T) I^T + (1 - Norm(I^T)) I^LB` in place.
///
/// Returns the frame region that was written, or `None` when the patch lies
/// entirely outside the frame.
pub fn blend_into(frame: &mut ImageF, patch: &TargetPatch) -> Result<Option<PixelBox>> {
    let peak = patch.max();
    if !(peak > 0.0) {
        return Err(Error::DegenerateTemplate(peak));
    }
    let Some(region) = patch.bbox.clip(frame.height(), frame.width()) else {
        return Ok(None);
    };
    for y in region.y..region.y + region.h as i64 {
        for x in region.x..region.x + region.w as i64 {
            let it = patch.get(x, y);
            if it == 0.0 {
                continue;
            }
            let n = it / peak;
            let bg = frame.get(x as usize, y as usize);
            frame.set(x as usize, y as usize, n * it + (1.0 - n) * bg);
        }
    }
    Ok(Some(region))
}

/// Blends one target into a copy of `background`.
pub fn blend_patch(background: &ImageF, template: &Template, intensity: f64, position: (f64, f64)) -> Result<ImageF> {
    let patch = splat(template, intensity, position)?;
    let mut out = background.clone();
    blend_into(&mut out, &patch)?;
    Ok(out)
}

/// Normalized 1D Gaussian taps for an odd kernel size.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Result<Vec<f64>> {
    if k.is_multiple_of(2) || k == 0 {
        return Err(Error::invalid(format!("blur kernel size must be odd, got {k}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let r = (k / 2) as f64;
    let taps: Vec<f64> = (0..k)
        .map(|i| (-0.5 * ((i as f64 - r) / sigma).powi(2)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / s).collect())
}

/// Reflect-101 index (`... 2 1 | 0 1 2 ... n-1 | n-2 ...`).
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as i64;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// 2D Gaussian convolution of a patch with reflect-101 borders.
pub fn gaussian_blur_patch(patch: &ImageF, k: usize, sigma: f64) -> Result<ImageF> {
    let g = gaussian_kernel(k, sigma)?;
    let r = (k / 2) as i64;
    let (h, w) = (patch.height(), patch.width());
    let mut out = patch.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, gy) in g.iter().enumerate() {
                let sy = reflect(y as i64 + i as i64 - r, h);
                for (j, gx) in g.iter().enumerate() {
                    let sx = reflect(x as i64 + j as i64 - r, w);
                    acc += gy * gx * patch.get(sx, sy);
                }
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Blurs `region` of `frame` in place, reading up to `k/2` pixels of real context around it.
fn blur_region(frame: &mut ImageF, region: PixelBox, k: usize, sigma: f64) -> Result<()> {
    let r = k / 2;
    let (fh, fw) = (frame.height(), frame.width());
    let ctx = region.expand(r).clip(fh, fw).expect("region inside frame");
    let sub = ImageF::from_fn(ctx.h, ctx.w, |x, y| {
        frame.get(ctx.x as usize + x, ctx.y as usize + y)
    });
    let blurred = gaussian_blur_patch(&sub, k, sigma)?;
    for y in region.y..region.y + region.h as i64 {
        for x in region.x..region.x + region.w as i64 {
            let v = blurred.get((x - ctx.x) as usize, (y - ctx.y) as usize);
            frame.set(x as usize, y as usize, v);
        }
    }
    Ok(())
}

/// Seeded smoothed-noise background with optional cloud blobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticBackground {
    pub seed: u64,
    pub mean: f64,
    /// Standard deviation of the smoothed texture.
    pub texture_std: f64,
    /// Smoothing scale of the texture, in pixels.
    pub texture_scale: f64,
    /// Standard deviation of per-pixel white noise.
    pub noise_std: f64,
    pub clouds: u32,
    pub cloud_amplitude: f64,
    /// Range of cloud radii, in pixels.
    pub cloud_scale: (f64, f64),
}

impl Default for SyntheticBackground {
    fn default() -> Self {
        Self {
            seed: 0,
            mean: 120.0,
            texture_std: 12.0,
            texture_scale: 6.0,
            noise_std: 2.0,
            clouds: 3,
            cloud_amplitude: 40.0,
            cloud_scale: (40.0, 160.0),
        }
    }
}

impl SyntheticBackground {
    /// Independent Gaussian noise around `mean`.
    pub fn flat_noise(seed: u64, mean: f64, std: f64) -> Self {
        Self {
            seed,
            mean,
            texture_std: 0.0,
            texture_scale: 0.0,
            noise_std: std,
            clouds: 0,
            cloud_amplitude: 0.0,
            cloud_scale: (1.0, 1.0),
        }
    }

    pub fn render(&self, height: usize, width: usize) -> Result<ImageF> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("background size must be positive"));
        }
        let fields = [self.mean, self.texture_std, self.texture_scale, self.noise_std, self.cloud_amplitude];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("synthetic background parameters must be finite and non-negative"));
        }
        let mut rng = stream_rng(self.seed, 0);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut data = vec![self.mean; height * width];

        if self.texture_std > 0.0 {
            let noise: Vec<f64> = (0..height * width).map(|_| unit.sample(&mut rng)).collect();
            let tex = if self.texture_scale > 0.0 {
                let r = (3.0 * self.texture_scale).ceil() as usize;
                smooth_separable(&noise, height, width, &gaussian_kernel(2 * r + 1, self.texture_scale)?)
            } else {
                noise
            };
            let (m, s) = mean_std(&tex);
            let s = if s > 0.0 { s } else { 1.0 };
            for (d, t) in data.iter_mut().zip(&tex) {
                *d += self.texture_std * (t - m) / s;
            }
        }

        for _ in 0..self.clouds {
            let cx = uniform(&mut rng, 0.0, width as f64);
            let cy = uniform(&mut rng, 0.0, height as f64);
            let rad = uniform(&mut rng, self.cloud_scale.0, self.cloud_scale.1).max(1e-3);
            let amp = self.cloud_amplitude * uniform(&mut rng, 0.5, 1.0);
            let reach = 4.0 * rad;
            let xs = ((cx - reach).floor().max(0.0) as usize, ((cx + reach).ceil() as usize).min(width));
            let ys = ((cy - reach).floor().max(0.0) as usize, ((cy + reach).ceil() as usize).min(height));
            for y in ys.0..ys.1 {
                for x in xs.0..xs.1 {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    data[y * width + x] += amp * (-0.5 * d2 / (rad * rad)).exp();
                }
            }
        }

        if self.noise_std > 0.0 {
            for d in &mut data {
                *d += self.noise_std * unit.sample(&mut rng);
            }
        }
        for d in &mut data {
            *d = d.max(0.0);
        }
        ImageF::new(height, width, data)
    }
}

fn smooth_separable(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0; h * w];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * src[y * w + reflect(x as i64 + i as i64 - r, w)])
                .sum();
        }
    });
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * tmp[reflect(y as i64 + i as i64 - r, h) * w + x])
                .sum();
        }
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundSource {
    Synthetic(SyntheticBackground),
    /// Grayscale PNG, 8 or 16 bit.
    Image { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub support_threshold: f64,
    pub mask_threshold: f64,
    /// Local background margin `d` for SCR, in pixels.
    pub neighborhood: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            blur_kernel: 3,
            blur_sigma: 0.4,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            neighborhood: stats::DEFAULT_NEIGHBORHOOD,
        }
    }
}

/// Everything needed to render a sequence, with every random choice made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSequence {
    pub frames: usize,
    /// `(H0, W0)`.
    pub fov: (usize, usize),
    pub motion: MotionSpec,
    pub background: BackgroundSource,
    pub render: RenderConfig,
    pub appearance_ranges: AppearanceRanges,
    pub targets: Vec<TargetSpec>,
}

/// One annotated target instance in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub id: u32,
    pub bbox: PixelBox,
    pub centroid: (f64, f64),
    pub visible: bool,
    #[serde(with = "crate::stats::finite_or_null")]
    pub scr: f64,
    pub area: usize,
    pub eccentricity: f64,
    pub mask: MaskPatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    /// 1-based frame index.
    pub frame: usize,
    pub instances: Vec<InstanceAnnotation>,
}

/// Annotation mask of `spec` centred at the rounded `position`, clipped to the frame.
pub fn annotation_mask(
    spec: &GaussianSpec,
    position: (f64, f64),
    threshold: f64,
    fov: (usize, usize),
) -> Result<Option<MaskPatch>> {
    let t = render_gaussian(spec, threshold)?;
    let (cx, cy) = (position.0.round() as i64, position.1.round() as i64);
    let pts: Vec<(i64, i64)> = t.support().map(|(dx, dy)| (cx + dx, cy + dy)).collect();
    Ok(MaskPatch::from_points(&pts).and_then(|m| m.clip(fov.0, fov.1)))
}

/// Corners of the field of view mapped back into scene coordinates over all frames.
pub fn scene_extent(chain: &PoseChain, fov: (usize, usize)) -> Result<(f64, f64, f64, f64)> {
    let (h, w) = ((fov.0 - 1) as f64, (fov.1 - 1) as f64);
    let mut ext = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for m in &chain.scene_to_frame {
        let inv = m.inverse()?;
        for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let p = inv.apply(x, y);
            ext = (ext.0.min(p.0), ext.1.min(p.1), ext.2.max(p.0), ext.3.max(p.1));
        }
    }
    Ok(ext)
}

/// Margin around the visited scene extent for synthetic global backgrounds.
const GLOBAL_MARGIN: f64 = 8.0;

/// Renderer state: global background, per-frame maps, and resolved targets.
pub struct Scene {
    pub fov: (usize, usize),
    pub render: RenderConfig,
    pub global: ImageF,
    global_mean: f64,
    /// Global background pixel -> frame pixel, per frame.
    pub frame_maps: Vec<Homography>,
    pub chain: PoseChain,
    pub tracks: Vec<TargetTrack>,
    pub models: Vec<IntensityModel>,
}

/// Rendered frame with its annotation and 8-bit instance-id mask.
pub struct RenderedFrame {
    pub image: ImageF,
    pub annotation: FrameAnnotation,
    pub id_mask: Vec<u8>,
}

impl Scene {
    /// Builds the scene, rendering a synthetic global background or taking `image` as it.
    pub fn new(seq: &ResolvedSequence, image: Option<ImageF>) -> Result<Scene> {
        if seq.frames < 2 {
            return Err(Error::invalid(format!("a sequence needs at least 2 frames, got {}", seq.frames)));
        }
        if seq.motion.frames != seq.frames {
            return Err(Error::invalid("motion frame count differs from the sequence"));
        }
        if seq.fov.0 == 0 || seq.fov.1 == 0 {
            return Err(Error::invalid("field of view must be positive"));
        }
        if seq.targets.len() > u8::MAX as usize {
            return Err(Error::invalid("at most 255 targets fit in an 8-bit instance mask"));
        }
        let chain = pose_sequence(&seq.motion)?;
        let ext = scene_extent(&chain, seq.fov)?;
        let (global, offset) = match (&seq.background, image) {
            (_, Some(img)) => {
                let gw = (img.width() - 1) as f64;
                let gh = (img.height() - 1) as f64;
                let off = ((gw / 2.0 - (ext.0 + ext.2) / 2.0).round(), (gh / 2.0 - (ext.1 + ext.3) / 2.0).round());
                if ext.0 + off.0 < 0.0 || ext.1 + off.1 < 0.0 || ext.2 + off.0 > gw || ext.3 + off.1 > gh {
                    log::warn!(
                        "background image {}x{} does not cover the visited scene; uncovered pixels use the image mean",
                        img.width(),
                        img.height()
                    );
                }
                (img, off)
            }
            (BackgroundSource::Synthetic(params), None) => {
                let off = (GLOBAL_MARGIN - ext.0.floor(), GLOBAL_MARGIN - ext.1.floor());
                let w = (ext.2 + off.0 + GLOBAL_MARGIN).ceil() as usize + 1;
                let h = (ext.3 + off.1 + GLOBAL_MARGIN).ceil() as usize + 1;
                (params.render(h, w)?, off)
            }
            (BackgroundSource::Image { path }, None) => {
                return Err(Error::invalid(format!("background image {} was not loaded", path.display())));
            }
        };
        let shift = Homography::translation(-offset.0, -offset.1);
        let frame_maps: Vec<Homography> = chain.scene_to_frame.iter().map(|m| *m * shift).collect();
        let global_mean = global.mean();
        let mut scene = Scene {
            fov: seq.fov,
            render: seq.render,
            global,
            global_mean,
            frame_maps,
            chain,
            tracks: Vec::with_capacity(seq.targets.len()),
            models: Vec::with_capacity(seq.targets.len()),
        };
        let mut targets: Vec<&TargetSpec> = seq.targets.iter().collect();
        targets.sort_by_key(|t| t.id);
        if targets.windows(2).any(|w| w[0].id == w[1].id) || targets.first().is_some_and(|t| t.id == 0) {
            return Err(Error::invalid("target ids must be unique and non-zero"));
        }
        let first = if targets.is_empty() { None } else { Some(scene.background_frame(0)?) };
        for spec in targets {
            let track = TargetTrack::build(spec, seq.frames, &scene.chain.ref_to_frame, &seq.appearance_ranges)?;
            let bg = first.as_ref().expect("first frame rendered");
            let mask = annotation_mask(&track.appearance[0], track.traj_cur[0], seq.render.mask_threshold, seq.fov)?
                .ok_or_else(|| Error::invalid(format!("target {} starts outside the field of view", spec.id)))?;
            let (mu, sigma) = mean_std(&local_background(bg, &mask, seq.render.neighborhood)?);
            scene.models.push(IntensityModel {
                scr: spec.scr,
                mu_lb1: mu,
                sigma_lb1: sigma,
            });
            scene.tracks.push(track);
        }
        Ok(scene)
    }

    pub fn frames(&self) -> usize {
        self.frame_maps.len()
    }

    /// Local background `I_t^LB` of frame `t` (0-based).
    pub fn background_frame(&self, t: usize) -> Result<ImageF> {
        warp(&self.global, &self.frame_maps[t], self.fov, self.global_mean)
    }

    /// Target intensity at frame `t` (0-based).
    pub fn intensity(&self, target: usize, t: usize) -> f64 {
        target_intensity(&self.models[target], self.tracks[target].accel[t])
    }

    /// Range that bounds every rendered pixel: blending and blurring are convex combinations.
    pub fn intensity_range(&self) -> (f64, f64) {
        let (_, gmax) = self.global.min_max();
        let emax = (0..self.tracks.len())
            .flat_map(|k| (0..self.frames()).map(move |t| (k, t)))
            .map(|(k, t)| self.intensity(k, t))
            .fold(gmax, f64::max);
        (0.0, emax)
    }

    pub fn render_frame(&self, t: usize) -> Result<RenderedFrame> {
        let mut image = self.background_frame(t)?;
        let (fh, fw) = self.fov;
        let cfg = &self.render;
        for (k, track) in self.tracks.iter().enumerate() {
            let e = self.intensity(k, t);
            if e <= 0.0 {
                continue;
            }
            let template = render_gaussian(&track.appearance[t], cfg.support_threshold)?;
            let patch = splat(&template, e, track.traj_cur[t])?;
            if let Some(region) = blend_into(&mut image, &patch)? {
                let blur_area = region.expand(cfg.blur_kernel / 2).clip(fh, fw).expect("inside frame");
                blur_region(&mut image, blur_area, cfg.blur_kernel, cfg.blur_sigma)?;
            }
        }
        if image.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("frame {}", t + 1)));
        }

        let mut instances = Vec::new();
        let mut id_mask = vec![0u8; fh * fw];
        for track in &self.tracks {
            let spec = &track.appearance[t];
            let pos = track.traj_cur[t];
            let Some(mask) = annotation_mask(spec, pos, cfg.mask_threshold, self.fov)? else {
                continue;
            };
            for (x, y) in mask.points() {
                id_mask[y as usize * fw + x as usize] = track.id as u8;
            }
            let scr = stats::scr(&image, &mask, cfg.neighborhood).unwrap_or(f64::NAN);
            instances.push(InstanceAnnotation {
                id: track.id,
                bbox: mask.bbox().expect("non-empty mask"),
                centroid: pos,
                visible: true,
                scr,
                area: mask.area(),
                eccentricity: spec.eccentricity(),
                mask,
            });
        }
        Ok(RenderedFrame {
            image,
            annotation: FrameAnnotation { frame: t + 1, instances },
            id_mask,
        })
    }
}

/// Renders a whole sequence in memory.
pub fn render_sequence(seq: &ResolvedSequence, image: Option<ImageF>) -> Result<(Vec<ImageF>, Vec<FrameAnnotation>)> {
    let scene = Scene::new(seq, image)?;
    let frames: Vec<RenderedFrame> = (0..scene.frames())
        .into_par_iter()
        .map(|t| scene.render_frame(t))
        .collect::<Result<_>>()?;
    Ok(frames.into_iter().map(|f| (f.image, f.annotation)).unzip())
}

/// Draws a random pixel inside the frame, for tests and examples.
pub fn random_position(rng: &mut impl Rng, fov: (usize, usize), margin: f64) -> (f64, f64) {
    (
        uniform(rng, margin, fov.1 as f64 - 1.0 - margin),
        uniform(rng, margin, fov.0 as f64 - 1.0 - margin),
    )
}

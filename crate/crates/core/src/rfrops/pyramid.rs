//! Coarse-to-fine deformable alignment over a feature pyramid.

use super::deform::deform_conv;
use super::scalar::Scalar;
use super::tensor::{concat, upsample2, Conv, FeatureMap};
use crate::error::{Error, Result};

/// Weights for `levels` pyramid levels; index 0 is the finest level.
///
/// - `down[l - 1]`: stride-2 `C→C` conv producing level `l` from level `l - 1`, shared by both inputs
/// - `offset[l]`: `2C→3N` conv predicting offsets (first `2N` channels) and modulation logits
/// - `dcn[l]`: `C→C` deformable conv
/// - `fuse[l]`: `C→C` at the coarsest level, `2C→C` elsewhere (aligned ‖ upsampled coarser aligned)
#[derive(Debug, Clone, PartialEq)]
pub struct PdaWeights<S = f64> {
    pub down: Vec<Conv<S>>,
    pub offset: Vec<Conv<S>>,
    pub dcn: Vec<Conv<S>>,
    pub fuse: Vec<Conv<S>>,
}

impl<S: Scalar> PdaWeights<S> {
    pub fn levels(&self) -> usize {
        self.dcn.len()
    }

    pub fn channels(&self) -> usize {
        self.dcn.first().map_or(0, |c| c.in_c)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels();
        let c = self.channels();
        if l == 0 || c == 0 {
            return Err(Error::invalid("pyramid needs at least one level"));
        }
        if self.down.len() != l - 1 || self.offset.len() != l || self.fuse.len() != l {
            return Err(Error::invalid(format!(
                "pyramid weights: {} down, {} offset, {} dcn, {} fuse layers for {l} levels",
                self.down.len(),
                self.offset.len(),
                l,
                self.fuse.len()
            )));
        }
        let shape = |cv: &Conv<S>| (cv.out_c, cv.in_c);
        for (i, d) in self.down.iter().enumerate() {
            if shape(d) != (c, c) {
                return Err(Error::invalid(format!("down.{i} must map {c}->{c} channels")));
            }
        }
        for lv in 0..l {
            let n = self.dcn[lv].taps();
            if shape(&self.dcn[lv]) != (c, c) {
                return Err(Error::invalid(format!("dcn.{lv} must map {c}->{c} channels")));
            }
            if shape(&self.offset[lv]) != (3 * n, 2 * c) {
                return Err(Error::invalid(format!("offset.{lv} must map {}->{} channels", 2 * c, 3 * n)));
            }
            let fin = if lv + 1 == l { c } else { 2 * c };
            if shape(&self.fuse[lv]) != (c, fin) {
                return Err(Error::invalid(format!("fuse.{lv} must map {fin}->{c} channels")));
            }
        }
        Ok(())
    }

    pub fn lift<T: Scalar>(&self, f: impl Fn(S) -> T + Copy) -> PdaWeights<T> {
        let l = |v: &Vec<Conv<S>>| v.iter().map(|c| c.lift(f)).collect();
        PdaWeights {
            down: l(&self.down),
            offset: l(&self.offset),
            dcn: l(&self.dcn),
            fuse: l(&self.fuse),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdaOptions {
    /// Factor applied to offsets carried to the next finer level.
    pub offset_upsample_scale: f64,
}

impl Default for PdaOptions {
    fn default() -> Self {
        Self { offset_upsample_scale: 2.0 }
    }
}

/// Finest-level results of an alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned<S = f64> {
    pub feature: FeatureMap<S>,
    pub offsets: FeatureMap<S>,
    pub modulation: FeatureMap<S>,
}

/// Builds the pyramid of `f` with the shared stride-2 convs.
pub fn feature_pyramid<S: Scalar>(f: &FeatureMap<S>, down: &[Conv<S>]) -> Result<Vec<FeatureMap<S>>> {
    let mut out = vec![f.clone()];
    for d in down {
        let next = d.apply(out.last().expect("non-empty"), 2)?;
        out.push(next);
    }
    Ok(out)
}

/// Aligns `f_prev` to `g_cur`, coarsest level first.
pub fn pyramid_align<S: Scalar>(
    f_prev: &FeatureMap<S>,
    g_cur: &FeatureMap<S>,
    weights: &PdaWeights<S>,
    opts: &PdaOptions,
) -> Result<Aligned<S>> {
    weights.validate()?;
    f_prev.same_shape(g_cur)?;
    let levels = weights.levels();
    let (c, h, w) = f_prev.shape();
    if c != weights.channels() {
        return Err(Error::invalid(format!("pyramid weights expect {} channels, got {c}", weights.channels())));
    }
    let div = 1usize << (levels - 1);
    if h % div != 0 || w % div != 0 {
        return Err(Error::invalid(format!("{h}x{w} is not divisible by {div} for {levels} pyramid levels")));
    }
    let fp = feature_pyramid(f_prev, &weights.down)?;
    let gp = feature_pyramid(g_cur, &weights.down)?;
    let mut coarse: Option<Aligned<S>> = None;
    for l in (0..levels).rev() {
        let n = weights.dcn[l].taps();
        let pred = weights.offset[l].apply(&concat(&[&fp[l], &gp[l]])?, 1)?;
        let mut offsets = pred.slice_channels(0..2 * n);
        let modulation = pred.slice_channels(2 * n..3 * n).map(S::sigmoid);
        if let Some(up) = &coarse {
            let carried = upsample2(&up.offsets).map(|v| v * opts.offset_upsample_scale);
            offsets = offsets.add(&carried)?;
        }
        let a = deform_conv(&fp[l], &offsets, &modulation, &weights.dcn[l])?;
        let feature = match &coarse {
            Some(up) => weights.fuse[l].apply(&concat(&[&a, &upsample2(&up.feature)])?, 1)?,
            None => weights.fuse[l].apply(&a, 1)?,
        };
        coarse = Some(Aligned {
            feature,
            offsets,
            modulation,
        });
    }
    Ok(coarse.expect("at least one level"))
}

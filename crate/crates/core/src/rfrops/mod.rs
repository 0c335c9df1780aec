//! Reference kernels for recurrent feature refinement: modulated deformable
//! convolution, pyramid alignment and temporal/spatial/frequency modulation.
//!
//! Every kernel is generic over [`Scalar`], so the same code yields values (`f64`)
//! and exact directional derivatives ([`Dual`]).

pub mod deform;
pub mod gradcheck;
pub mod modulation;
pub mod pyramid;
pub mod scalar;
pub mod suite;
pub mod tensor;
pub mod weights;

pub use deform::{deform_conv, DeformParams};
pub use gradcheck::{finite_diff_check, DiffOp, GradCheck};
pub use modulation::{frequency_modulation, spatial_modulation, temporal_modulation, tsfm, DctBasis, Modulated};
pub use pyramid::{pyramid_align, Aligned, PdaOptions, PdaWeights};
pub use scalar::{Dual, Scalar};
pub use suite::{run_suite, run_suite_with, CheckOptions, CheckReport, CheckResult};
pub use tensor::{Conv, FeatureMap, Linear};
pub use weights::{RfrConfig, RfrWeights, WeightBundle};

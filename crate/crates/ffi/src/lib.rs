//! C interface to irsatsim.
//!
//! Every fallible call returns an `IrsStatus`; on failure the message is
//! available from `irs_last_error` on the same thread. Objects are opaque
//! handles released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use irsatsim::dataset::{dataset_stats, evaluate, generate, pool};
use irsatsim::error::Error;
use irsatsim::metrics::{AucDomain, EvalOptions, Matching, DEFAULT_BINARIZATION, DEFAULT_MATCH_THRESHOLD, DEFAULT_ROC_THRESHOLDS};
use irsatsim::rfrops::{run_suite_with, CheckOptions, RfrWeights, WeightBundle};
use irsatsim::spec::SequenceSpec;

/// Result of a call. Values 2 to 9 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsStatus {
    Ok = 0,
    InvalidArgument = 2,
    DegenerateHomography = 3,
    DegenerateTemplate = 4,
    NonFinite = 5,
    Format = 6,
    FrameMismatch = 7,
    Io = 8,
    Image = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

impl IrsStatus {
    fn of(e: &Error) -> Self {
        match e.code() {
            2 => IrsStatus::InvalidArgument,
            3 => IrsStatus::DegenerateHomography,
            4 => IrsStatus::DegenerateTemplate,
            5 => IrsStatus::NonFinite,
            6 => IrsStatus::Format,
            7 => IrsStatus::FrameMismatch,
            8 => IrsStatus::Io,
            9 => IrsStatus::Image,
            _ => IrsStatus::Internal,
        }
    }
}

/// A sequence spec.
pub struct IrsSpec(SequenceSpec);

/// A JSON report produced by a call.
pub struct IrsReport(CString);

/// Matching strategies for `IrsEvalOptions`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsMatching {
    Greedy = 0,
    Optimal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IrsEvalOptions {
    pub binarization: f64,
    pub match_threshold: f64,
    pub n_thresholds: usize,
    pub matching: IrsMatching,
    /// Integrate the ROC over `[0, fa_max]`; zero means up to the largest observed Fa.
    pub fa_max: f64,
}

/// Headline numbers of an evaluation. `pd` is NaN when there are no targets.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IrsScore {
    pub td: u64,
    pub at: u64,
    pub fd: u64,
    pub np: u64,
    pub pd: f64,
    pub fa: f64,
    pub auc: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IrsCheckOptions {
    pub seed: u64,
    pub eps: f64,
    pub directions: usize,
    pub offset_upsample_scale: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> IrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            IrsStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            IrsStatus::of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            IrsStatus::Internal
        }
    }
}

fn null(what: &str) -> Error {
    Error::InvalidArgument(format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, Error> {
    text(p, what).map(PathBuf::from)
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

fn report<T: serde::Serialize>(v: &T) -> IrsReport {
    let s = serde_json::to_string_pretty(v).expect("serializable");
    IrsReport(CString::new(s).expect("json has no NUL"))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn irs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn irs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML spec. Relative background image paths resolve against the working directory.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irs_spec_from_toml(toml: *const c_char, out: *mut *mut IrsSpec) -> IrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = SequenceSpec::from_toml(text(toml, "toml")?)?;
        put(out, IrsSpec(spec));
        Ok(())
    })
}

/// Loads a TOML spec file.
///
/// # Safety
/// `file` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irs_spec_load(file: *const c_char, out: *mut *mut IrsSpec) -> IrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = SequenceSpec::load(&path(file, "path")?)?;
        put(out, IrsSpec(spec));
        Ok(())
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `spec` must come from `irs_spec_from_toml` or `irs_spec_load`.
#[no_mangle]
pub unsafe extern "C" fn irs_spec_set_seed(spec: *mut IrsSpec, seed: u64) -> IrsStatus {
    guard(|| {
        spec.as_mut().ok_or_else(|| null("spec"))?.0.seed = seed;
        Ok(())
    })
}

/// Overrides the number of sequences.
///
/// # Safety
/// `spec` must come from `irs_spec_from_toml` or `irs_spec_load`.
#[no_mangle]
pub unsafe extern "C" fn irs_spec_set_sequences(spec: *mut IrsSpec, sequences: usize) -> IrsStatus {
    guard(|| {
        spec.as_mut().ok_or_else(|| null("spec"))?.0.sequences = sequences;
        Ok(())
    })
}

/// Accepts (non-zero) or rejects (zero) parameters outside the default generation ranges.
///
/// # Safety
/// `spec` must come from `irs_spec_from_toml` or `irs_spec_load`.
#[no_mangle]
pub unsafe extern "C" fn irs_spec_allow_out_of_range(spec: *mut IrsSpec, allow: c_int) -> IrsStatus {
    guard(|| {
        spec.as_mut().ok_or_else(|| null("spec"))?.0.allow_out_of_range = allow != 0;
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irs_spec_free(spec: *mut IrsSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// The report as a NUL-terminated JSON string, owned by the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irs_report_json(report: *const IrsReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.0.as_ptr())
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irs_report_free(report: *mut IrsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Renders the dataset described by `spec` into `out_dir`. `workers` 0 uses all cores.
/// `summary` may be null.
///
/// # Safety
/// Pointers must be valid; `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn irs_generate(
    spec: *const IrsSpec,
    out_dir: *const c_char,
    workers: usize,
    summary: *mut *mut IrsReport,
) -> IrsStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        let s = generate(&spec.0, &path(out_dir, "out_dir")?, workers)?;
        if !summary.is_null() {
            put(summary, report(&s));
        }
        Ok(())
    })
}

/// Dataset statistics as a JSON report.
///
/// # Safety
/// `dataset` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn irs_stats(dataset: *const c_char, workers: usize, out: *mut *mut IrsReport) -> IrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let st = dataset_stats(&path(dataset, "dataset")?, workers)?;
        put(out, report(&st));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn irs_eval_options_default() -> IrsEvalOptions {
    IrsEvalOptions {
        binarization: DEFAULT_BINARIZATION,
        match_threshold: DEFAULT_MATCH_THRESHOLD,
        n_thresholds: DEFAULT_ROC_THRESHOLDS,
        matching: IrsMatching::Greedy,
        fa_max: 0.0,
    }
}

/// Scores predictions against ground truth. `opts` null means defaults;
/// `score` and `out` may each be null.
///
/// # Safety
/// Paths must be NUL-terminated; non-null pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn irs_eval(
    pred: *const c_char,
    gt: *const c_char,
    opts: *const IrsEvalOptions,
    workers: usize,
    score: *mut IrsScore,
    out: *mut *mut IrsReport,
) -> IrsStatus {
    guard(|| {
        let o = opts.as_ref().copied().unwrap_or_else(|| irs_eval_options_default());
        if !(0.0..=1.0).contains(&o.binarization) {
            return Err(Error::InvalidArgument(format!("binarization {} outside [0, 1]", o.binarization)));
        }
        if !(o.match_threshold > 0.0) || o.fa_max.is_nan() || o.fa_max < 0.0 {
            return Err(Error::InvalidArgument("match threshold must be positive and fa_max non-negative".into()));
        }
        let opts = EvalOptions {
            binarization: o.binarization,
            match_threshold: o.match_threshold,
            n_thresholds: o.n_thresholds,
            matching: match o.matching {
                IrsMatching::Greedy => Matching::Greedy,
                IrsMatching::Optimal => Matching::Optimal,
            },
            auc_domain: if o.fa_max > 0.0 {
                AucDomain::Fixed { max_fa: o.fa_max }
            } else {
                AucDomain::MaxObserved
            },
        };
        let r = evaluate(&path(pred, "pred")?, &path(gt, "gt")?, &opts, workers)?;
        if let Some(s) = score.as_mut() {
            let c = r.overall.counts;
            *s = IrsScore {
                td: c.td,
                at: c.at,
                fd: c.fd,
                np: c.np,
                pd: r.overall.pd,
                fa: r.overall.fa,
                auc: r.overall.auc,
            };
        }
        if !out.is_null() {
            put(out, report(&r));
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn irs_check_options_default() -> IrsCheckOptions {
    let d = CheckOptions::default();
    IrsCheckOptions {
        seed: d.seed,
        eps: d.eps,
        directions: d.directions,
        offset_upsample_scale: d.offset_upsample_scale,
    }
}

/// Runs the kernel check suite. `weights` is an optional bundle path. `passed`
/// receives 1 if every check passed; a failing check is not an error status.
///
/// # Safety
/// Non-null pointers must be valid; `weights` NUL-terminated if given.
#[no_mangle]
pub unsafe extern "C" fn irs_check(
    opts: *const IrsCheckOptions,
    weights: *const c_char,
    workers: usize,
    passed: *mut c_int,
    out: *mut *mut IrsReport,
) -> IrsStatus {
    guard(|| {
        let o = opts.as_ref().copied().unwrap_or_else(|| irs_check_options_default());
        let (lo, hi) = irsatsim::rfrops::gradcheck::EPS_RANGE;
        if !(lo..=hi).contains(&o.eps) || o.directions == 0 {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in [{lo}, {hi}] and directions be positive"
            )));
        }
        let w = if weights.is_null() {
            None
        } else {
            Some(RfrWeights::from_bundle(&WeightBundle::load(&path(weights, "weights")?)?)?)
        };
        let opts = CheckOptions {
            seed: o.seed,
            eps: o.eps,
            directions: o.directions,
            offset_upsample_scale: o.offset_upsample_scale,
        };
        let r = pool(workers)?.install(|| run_suite_with(&opts, w.as_ref()));
        if let Some(p) = passed.as_mut() {
            *p = r.passed as c_int;
        }
        if !out.is_null() {
            put(out, report(&r));
        }
        Ok(())
    })
}

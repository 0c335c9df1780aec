//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{dataset_stats, evaluate, generate, write_report};
use crate::error::{Error, Result};
use crate::metrics::{AucDomain, EvalOptions, Matching, DEFAULT_BINARIZATION, DEFAULT_MATCH_THRESHOLD, DEFAULT_ROC_THRESHOLDS};
use crate::rfrops::gradcheck::EPS_RANGE;
use crate::rfrops::{run_suite_with, CheckOptions, RfrConfig, RfrWeights, WeightBundle};
use crate::rng::stream_rng;
use crate::spec::SequenceSpec;

#[derive(Debug, Parser)]
#[command(name = "irsatsim", version, about = "Infrared small-target satellite video synthesis and evaluation")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "IRSATSIM_WORKERS", default_value_t = 0, global = true)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the sequences described by a spec file.
    Generate {
        /// TOML sequence spec.
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the spec's sequence count.
        #[arg(long)]
        sequences: Option<usize>,
        /// Accept parameters outside the default generation ranges.
        #[arg(long)]
        allow_out_of_range: bool,
    },
    /// Background complexity, target attributes and bin counts of a dataset.
    Stats {
        dataset: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score prediction maps against a dataset.
    Eval {
        /// Directory of `seq_XXXX/NNNNNN.png` confidence maps, or a generated dataset.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth dataset.
        #[arg(long)]
        gt: PathBuf,
        /// Binarization threshold for Pd and Fa.
        #[arg(long, default_value_t = DEFAULT_BINARIZATION)]
        threshold: f64,
        /// Centroid distance in pixels below which a detection matches.
        #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
        match_threshold: f64,
        #[arg(long, value_enum, default_value_t = MatchingArg::Greedy)]
        matching: MatchingArg,
        /// Number of ROC sweep thresholds.
        #[arg(long, default_value_t = DEFAULT_ROC_THRESHOLDS)]
        thresholds: usize,
        /// Integrate the ROC over `fa` in `[0, fa_max]` instead of the observed range.
        #[arg(long)]
        fa_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the kernel property and gradient suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Random directions per gradient check.
        #[arg(long, default_value_t = 3)]
        directions: usize,
        /// Offset factor between pyramid levels.
        #[arg(long, default_value_t = 2.0)]
        offset_upsample_scale: f64,
        /// Also check this weight bundle.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Write a random weight bundle drawn from `--seed` and exit.
        #[arg(long)]
        save_weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchingArg {
    Greedy,
    Optimal,
}

impl From<MatchingArg> for Matching {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::Greedy => Matching::Greedy,
            MatchingArg::Optimal => Matching::Optimal,
        }
    }
}

fn emit<T: Serialize>(v: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_report(p, v),
        None => {
            let s = serde_json::to_string_pretty(v).expect("serializable");
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{s}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Runs a parsed command; `Ok(false)` means the check suite reported failures.
pub fn execute(cli: &Cli) -> Result<bool> {
    let workers = cli.workers;
    match &cli.command {
        Command::Generate {
            spec,
            out,
            seed,
            sequences,
            allow_out_of_range,
        } => {
            let mut s = SequenceSpec::load(spec)?;
            if let Some(seed) = seed {
                s.seed = *seed;
            }
            if let Some(n) = sequences {
                s.sequences = *n;
            }
            s.allow_out_of_range |= allow_out_of_range;
            emit(&generate(&s, out, workers)?, None)?;
            Ok(true)
        }
        Command::Stats { dataset, out } => {
            emit(&dataset_stats(dataset, workers)?, out.as_deref())?;
            Ok(true)
        }
        Command::Eval {
            pred,
            gt,
            threshold,
            match_threshold,
            matching,
            thresholds,
            fa_max,
            out,
        } => {
            if !(0.0..=1.0).contains(threshold) {
                return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
            }
            if !(*match_threshold > 0.0) {
                return Err(Error::invalid(format!("match threshold must be positive, got {match_threshold}")));
            }
            let auc_domain = match fa_max {
                Some(m) if *m > 0.0 => AucDomain::Fixed { max_fa: *m },
                Some(m) => return Err(Error::invalid(format!("fa-max must be positive, got {m}"))),
                None => AucDomain::MaxObserved,
            };
            let opts = EvalOptions {
                binarization: *threshold,
                match_threshold: *match_threshold,
                n_thresholds: *thresholds,
                matching: (*matching).into(),
                auc_domain,
            };
            emit(&evaluate(pred, gt, &opts, workers)?, out.as_deref())?;
            Ok(true)
        }
        Command::Check {
            seed,
            eps,
            directions,
            offset_upsample_scale,
            weights,
            save_weights,
            out,
        } => {
            if let Some(p) = save_weights {
                let w = RfrWeights::random(&mut stream_rng(*seed, 2), &RfrConfig::default())?;
                w.to_bundle().save(p)?;
                return Ok(true);
            }
            if !(EPS_RANGE.0..=EPS_RANGE.1).contains(eps) {
                return Err(Error::invalid(format!("eps {eps} outside [{}, {}]", EPS_RANGE.0, EPS_RANGE.1)));
            }
            if *directions == 0 {
                return Err(Error::invalid("at least one direction is required"));
            }
            let loaded = match weights {
                Some(p) => Some(RfrWeights::from_bundle(&WeightBundle::load(p)?)?),
                None => None,
            };
            let opts = CheckOptions {
                seed: *seed,
                eps: *eps,
                directions: *directions,
                offset_upsample_scale: *offset_upsample_scale,
            };
            let report = pool_install(workers, || run_suite_with(&opts, loaded.as_ref()))?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                log::error!("{} failed: {:e} > {:e}", c.name, c.value, c.tolerance);
            }
            emit(&report, out.as_deref())?;
            Ok(report.passed)
        }
    }
}

fn pool_install<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(crate::dataset::pool(workers)?.install(f))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("IRSATSIM_LOG").try_init();
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

//! Config-driven experiment runners. Every runner returns its rows in grid
//! order regardless of how the work was scheduled.

mod config;
mod mixed;
mod mle;
mod mom;
mod output;

use rayon::prelude::*;

pub use config::{
    apply_override, ExperimentConfig, ExperimentKind, Grid, OneOrMany, OutputFormat, RangeSpec,
};
pub use output::{envelope, write_outputs, Cell, RunOutput, Table};

use crate::error::{Error, Result};
use crate::estimation::{empirical_stats, sample_outcomes, EmpiricalStats};
use crate::metrics::mom_estimate_clamped;
use crate::schemes::{PrepConfig, Preparer, SchemeKind};
use crate::spin_core::ProbDist;

/// Environment variable holding the worker count; unset or `0` means automatic.
pub const WORKERS_ENV: &str = "PREPBIAS_WORKERS";

/// Runs `cfg` on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.experiment {
        ExperimentKind::SqueezeSweep => mom::squeeze_sweep(cfg),
        ExperimentKind::MomErrorGrid => mom::mom_error_grid(cfg),
        ExperimentKind::BiasVarianceTradeoff => mom::bias_variance_tradeoff(cfg),
        ExperimentKind::DeltaCrit => mom::delta_crit(cfg),
        ExperimentKind::MomVsMle => mom::mom_vs_mle(cfg),
        ExperimentKind::NonGaussMC => mle::non_gauss_mc(cfg),
        ExperimentKind::TwoParamRescue => mle::two_param_rescue(cfg),
        ExperimentKind::MixedState => mixed::mixed_state(cfg),
    }
}

/// Worker count from [`WORKERS_ENV`]; `None` lets rayon decide.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a non-negative integer, got '{s}'"
            ))),
        },
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (automatic when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    let pool = b
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// A computed row with the warnings raised for it.
pub(crate) type RowResult = Result<(Vec<Cell>, Vec<String>)>;

/// Collects rows in order; warnings keep the order of their rows.
pub(crate) fn assemble(columns: &[&'static str], rows: Vec<RowResult>) -> Result<RunOutput> {
    let mut table = Table::new(columns);
    let mut warnings = Vec::new();
    for r in rows {
        let (row, w) = r?;
        warnings.extend(w);
        table.push(row);
    }
    Ok(RunOutput { table, warnings })
}

/// `<J_x>` the experimenter expects at strength `lambda`. `λ = 0` is the
/// untwisted coherent state for every scheme.
pub(crate) fn assumed_jx0(prep: &Preparer, scheme: SchemeKind, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(prep.n_atoms() as f64 / 2.0);
    }
    let s = prep.prepare(&PrepConfig::unbiased(prep.n_atoms(), scheme, lambda))?;
    prep.ops().expectation(&s, prep.ops().jx())
}

/// Sample means of the outcome value for trials `first..first + repeats`.
pub(crate) fn sample_means(
    dist: &ProbDist,
    shots: u64,
    seed: u64,
    first: u64,
    repeats: usize,
) -> Result<Vec<f64>> {
    (0..repeats as u64)
        .into_par_iter()
        .map(|r| sample_outcomes(dist, shots, seed, first + r)?.mean(dist.outcomes()))
        .collect()
}

/// Method-of-moments estimates from sample means; saturated ratios are
/// clamped to `±π/2` and counted in the returned warning.
pub(crate) fn mom_from_means(
    means: &[f64],
    jx0_assumed: f64,
    label: &str,
) -> Result<(Vec<f64>, Option<String>)> {
    let mut clamped = 0usize;
    let mut out = Vec::with_capacity(means.len());
    for &m in means {
        let (phi, sat) = mom_estimate_clamped(m, jx0_assumed)?;
        clamped += sat as usize;
        out.push(phi);
    }
    let warn = (clamped > 0).then(|| {
        format!(
            "{label}: {clamped}/{} MOM estimates saturated and were clamped",
            means.len()
        )
    });
    Ok((out, warn))
}

pub(crate) fn stats(phis: &[f64], truth: f64) -> Result<Option<EmpiricalStats>> {
    if phis.len() < 2 {
        return Ok(None);
    }
    empirical_stats(phis, truth).map(Some)
}

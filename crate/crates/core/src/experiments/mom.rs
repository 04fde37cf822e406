//! Squeezing sweep, method-of-moments error grids, the bias-variance tradeoff,
//! MOM against MLE bias, and the analytic critical-error scan.

use rayon::prelude::*;

use super::{
    assemble, assumed_jx0, mom_from_means, sample_means, stats, ExperimentConfig, RowResult,
    RunOutput,
};
use crate::error::{Error, Result};
use crate::estimation::phase_domain;
use crate::fisher::{fisher_matrix, misspec_bias, pseudo_true_phi, qfi_pure};
use crate::largescale::{delta_lambda_crit, lambda_opt, CritResult};
use crate::metrics::{
    bias_coefficient, error_metric, mse, sigma_q_linearized, wineland_xi, MomentSet,
};
use crate::model::{PhaseFamily, SchemeModel};
use crate::schemes::{PrepConfig, Preparer};
use crate::spin_core::Basis;

pub(super) fn squeeze_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n_atoms();
    let prep = Preparer::new(n)?;
    let ops = prep.ops();
    let rows: Vec<RowResult> = ExperimentConfig::grid(&cfg.lambda)?
        .into_par_iter()
        .map(|l| {
            let pc = PrepConfig::unbiased(n, cfg.scheme, l);
            let theta = if l == 0.0 {
                0.0
            } else {
                prep.applied_rotation(&pc)?
            };
            let state = prep.prepare_with_rotation(cfg.scheme, l, theta)?;
            let mut warnings = Vec::new();
            let xi = wineland_xi(ops, &state).unwrap_or_else(|e| {
                warnings.push(format!("lambda={l}: {e}"));
                f64::NAN
            });
            let row = vec![
                l.into(),
                xi.into(),
                ops.expectation(&state, ops.jx())?.into(),
                ops.variance(&state, ops.jz())?.into(),
                qfi_pure(ops, &state, ops.jy())?.into(),
                theta.into(),
                cfg.scheme.regime_label(l).into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &["lambda", "xi", "jx0", "var_jz", "f_q", "theta", "regime"],
        rows,
    )
}

/// `(B, Q, <J_x0>)` of the MOM estimator calibrated at `lambda_assumed` on the
/// state actually prepared with `lambda`.
fn mom_theory(
    prep: &Preparer,
    cfg: &ExperimentConfig,
    lambda: f64,
    lambda_assumed: f64,
) -> Result<(f64, f64, MomentSet)> {
    let pc = PrepConfig::new(prep.n_atoms(), cfg.scheme, lambda, lambda_assumed);
    let state = prep.prepare(&pc)?;
    let moments = MomentSet::of(prep.ops(), &state)?;
    let jx0p = assumed_jx0(prep, cfg.scheme, lambda_assumed)?;
    let b = bias_coefficient(moments.jx0, jx0p)?;
    // the state is already rotated, so the measured axis is z itself
    let q = sigma_q_linearized(&moments, 0.0, jx0p, 1)?.sqrt();
    Ok((b, q, moments))
}

pub(super) fn mom_error_grid(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n_atoms();
    let prep = Preparer::new(n)?;
    let m = cfg.shots()[0];
    let r = cfg.repeats();
    let lambdas = ExperimentConfig::grid(&cfg.lambda)?;
    let assumed = ExperimentConfig::grid(&cfg.lambda_assumed)?;
    let cells: Vec<(usize, f64, f64)> = lambdas
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| assumed.iter().map(move |&lp| (i, l, lp)))
        .collect();
    let rows: Vec<RowResult> = cells
        .into_par_iter()
        .map(|(i, l, lp)| {
            let (b, q, moments) = mom_theory(&prep, cfg, l, lp)?;
            let e = error_metric(n, q, b);
            let jx0p = assumed_jx0(&prep, cfg.scheme, lp)?;
            let b_exact = moments.jx0 / jx0p - 1.0;
            let phi = match cfg.phi {
                Some(p) => p,
                None => mom_theory(&prep, cfg, l, l)?.1 / (m as f64).sqrt(),
            };
            let mut warnings = Vec::new();
            let (mut b_mc, mut b_se, mut q_mc) = (f64::NAN, f64::NAN, f64::NAN);
            if r >= 2 {
                let state = prep.prepare(&PrepConfig::new(n, cfg.scheme, l, lp))?;
                let dist = PhaseFamily::new(prep.ops(), &state, Basis::Z).dist(phi);
                // streams depend on λ only, so assumed values sharing a state share data
                let means = sample_means(&dist, m, cfg.master_seed, (i * r) as u64, r)?;
                let (phis, w) =
                    mom_from_means(&means, jx0p, &format!("lambda={l} lambda_assumed={lp}"))?;
                warnings.extend(w);
                if let Some(s) = stats(&phis, phi)? {
                    b_mc = s.bias / phi;
                    b_se = s.se_bias / phi.abs();
                    q_mc = (s.variance * m as f64).sqrt();
                }
            }
            let row = vec![
                l.into(),
                lp.into(),
                b.into(),
                q.into(),
                e.into(),
                phi.into(),
                b_mc.into(),
                b_se.into(),
                q_mc.into(),
                b_exact.into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "lambda",
            "lambda_assumed",
            "B",
            "Q",
            "E",
            "phi",
            "B_mc",
            "B_mc_se",
            "Q_mc",
            "B_exact",
        ],
        rows,
    )
}

pub(super) fn bias_variance_tradeoff(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n_atoms();
    let prep = Preparer::new(n)?;
    let phi = cfg.phi.unwrap_or(0.0);
    let r = cfg.repeats();
    let points = cfg.lambda_p_points.unwrap_or(2);
    let shots = cfg.shots();
    let lambdas = ExperimentConfig::grid(&cfg.lambda)?;
    let cells: Vec<(usize, f64, usize, u64)> = lambdas
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| shots.iter().enumerate().map(move |(k, &m)| (i, l, k, m)))
        .collect();
    let rows: Vec<RowResult> = cells
        .into_par_iter()
        .map(|(i, l, k, m)| {
            let state = prep.prepare(&PrepConfig::unbiased(n, cfg.scheme, l))?;
            let moments = MomentSet::of(prep.ops(), &state)?;
            let dist = PhaseFamily::new(prep.ops(), &state, Basis::Z).dist(phi);
            let first = ((i * shots.len() + k) * r) as u64;
            let means = sample_means(&dist, m, cfg.master_seed, first, r)?;
            let lps = crate::optimize::linspace(0.0, l, points);
            let mut warnings = Vec::new();
            let mut emp = Vec::with_capacity(points);
            let mut theory = Vec::with_capacity(points);
            for &lp in &lps {
                let jx0p = assumed_jx0(&prep, cfg.scheme, lp)?;
                let (phis, w) =
                    mom_from_means(&means, jx0p, &format!("lambda={l} shots={m} lambda_p={lp}"))?;
                warnings.extend(w);
                emp.push(phis.iter().map(|p| (p - phi).powi(2)).sum::<f64>() / phis.len() as f64);
                let b = bias_coefficient(moments.jx0, jx0p)?;
                let q = sigma_q_linearized(&moments, 0.0, jx0p, 1)?.sqrt();
                theory.push(mse(b, phi, q, m));
            }
            let best = argmin(&emp);
            let best_th = argmin(&theory);
            let last = points - 1;
            let row = vec![
                l.into(),
                m.into(),
                lps[best].into(),
                emp[best].into(),
                emp[last].into(),
                (emp[best] / emp[last]).into(),
                lps[best_th].into(),
                (theory[best_th] / theory[last]).into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "lambda",
            "shots",
            "lambda_p_opt",
            "mse_opt",
            "mse_unbiased",
            "ratio",
            "lambda_p_opt_theory",
            "ratio_theory",
        ],
        rows,
    )
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

pub(super) fn mom_vs_mle(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n_atoms();
    let prep = Preparer::new(n)?;
    let phi = cfg.phi.unwrap_or(0.0);
    let basis = cfg.basis();
    let dls = ExperimentConfig::grid(&cfg.dlambda)?;
    let cells: Vec<(f64, f64)> = ExperimentConfig::grid(&cfg.lambda)?
        .into_iter()
        .flat_map(|l| dls.iter().map(move |&d| (l, d)))
        .collect();
    let rows: Vec<RowResult> = cells
        .into_par_iter()
        .map(|(l, d)| {
            let lp = l + d;
            if lp < 0.0 {
                return Err(Error::Config(format!(
                    "lambda + dlambda = {lp} is negative"
                )));
            }
            let (b, _, _) = mom_theory(&prep, cfg, l, lp)?;
            // the MLE reads out the twisted state directly, without the squeezing rotation
            let joint = SchemeModel::new(&prep, cfg.scheme, basis, 0.0);
            let fm = fisher_matrix(&joint, phi, l)?;
            let bias_mle = misspec_bias(&fm.value, d)?;
            let actual = joint.family(l)?.dist(phi);
            let star = pseudo_true_phi(&actual, &joint.family(lp)?, phase_domain(basis))?;
            let warnings = fm
                .warnings
                .iter()
                .map(|w| format!("lambda={l} dlambda={d}: {w}"))
                .collect();
            let row = vec![
                l.into(),
                d.into(),
                (b * phi).into(),
                bias_mle.into(),
                (star - phi).into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "lambda",
            "dlambda",
            "bias_mom",
            "bias_mle",
            "bias_mle_pseudo_true",
        ],
        rows,
    )
}

pub(super) fn delta_crit(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let thresholds = cfg.thresholds();
    let cells: Vec<_> = cfg
        .n_atoms_list()
        .into_iter()
        .flat_map(|n| thresholds.iter().map(move |t| (n, *t)))
        .collect();
    let rows: Vec<RowResult> = cells
        .into_par_iter()
        .map(|(n, t)| {
            let mut warnings = Vec::new();
            let (ratio, lp) = match delta_lambda_crit(n, t)? {
                CritResult::Crossing {
                    ratio,
                    lambda_assumed,
                } => (ratio, lambda_assumed),
                CritResult::NoCrossing => {
                    warnings.push(format!(
                        "N={n} {:?} x{}: no threshold crossing",
                        t.mode, t.factor
                    ));
                    (f64::NAN, f64::NAN)
                }
            };
            let row = vec![
                n.into(),
                lambda_opt(n).into(),
                format!("{:?}", t.mode).into(),
                t.factor.into(),
                ratio.into(),
                lp.into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "n_atoms",
            "lambda_opt",
            "mode",
            "factor",
            "dlambda_crit_over_lambda",
            "lambda_assumed_crit",
        ],
        rows,
    )
}

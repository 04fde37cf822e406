//! Misspecified maximum-likelihood experiments: the non-Gaussian Monte Carlo
//! and the two-parameter rescue.

use rayon::prelude::*;

use super::{assemble, stats, ExperimentConfig, RowResult, RunOutput};
use crate::error::{Error, Result};
use crate::estimation::{
    mle_single_on_grid, mle_two_param_on_grid, phase_domain, sample_outcomes, EstimateResult,
    JointGrid, LikelihoodGrid, MLE_GRID_POINTS, TWO_PARAM_GRID_POINTS,
};
use crate::fisher::{fisher_matrix, misspec_bias, qfi_pure, sandwich_for_models, two_param_q};
use crate::model::SchemeModel;
use crate::schemes::{PrepConfig, Preparer};
use crate::spin_core::ProbDist;

/// Joint model with the rotation the experimenter applies for `(λ, λ')`.
fn joint_for<'a>(
    prep: &'a Preparer,
    cfg: &ExperimentConfig,
    lambda: f64,
    lambda_assumed: f64,
) -> Result<SchemeModel<'a>> {
    if lambda_assumed < 0.0 {
        return Err(Error::Config(format!(
            "assumed lambda {lambda_assumed} is negative"
        )));
    }
    let theta = prep.applied_rotation(&PrepConfig::new(
        prep.n_atoms(),
        cfg.scheme,
        lambda,
        lambda_assumed,
    ))?;
    Ok(SchemeModel::new(prep, cfg.scheme, cfg.basis(), theta))
}

fn boundary_warning(label: &str, results: &[EstimateResult]) -> Option<String> {
    let hits = results.iter().filter(|e| e.grid_bounds_hit).count();
    let bad = results.iter().filter(|e| !e.converged).count();
    (hits + bad > 0).then(|| {
        format!(
            "{label}: {hits}/{} estimates on the search boundary, {bad} not converged",
            results.len()
        )
    })
}

fn trials<F>(
    dist: &ProbDist,
    cfg: &ExperimentConfig,
    first: u64,
    estimate: F,
) -> Result<Vec<EstimateResult>>
where
    F: Fn(&crate::estimation::SampleSet) -> Result<EstimateResult> + Sync,
{
    let m = cfg.shots()[0];
    (0..cfg.repeats() as u64)
        .into_par_iter()
        .map(|r| estimate(&sample_outcomes(dist, m, cfg.master_seed, first + r)?))
        .collect()
}

pub(super) fn non_gauss_mc(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let prep = Preparer::new(cfg.n_atoms())?;
    let phi = cfg.phi.unwrap_or(0.0);
    let m = cfg.shots()[0] as f64;
    let r = cfg.repeats();
    let domain = phase_domain(cfg.basis());
    let dls = ExperimentConfig::grid(&cfg.dlambda)?;
    let lambdas = ExperimentConfig::grid(&cfg.lambda)?;
    let cells: Vec<(usize, f64, f64)> = lambdas
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| dls.iter().map(move |&d| (i, l, d)))
        .collect();
    let rows: Vec<RowResult> = cells
        .into_iter()
        .map(|(i, l, d)| {
            let lp = l + d;
            let label = format!("lambda={l} dlambda={d}");
            let joint = joint_for(&prep, cfg, l, lp)?;
            let actual = joint.family(l)?.dist(phi);
            let assumed = joint.family(lp)?;
            let fq = qfi_pure(prep.ops(), &joint.state(l)?, prep.ops().jy())?;
            let fm = fisher_matrix(&joint, phi, l)?;
            let mut warnings: Vec<String> = fm
                .warnings
                .iter()
                .map(|w| format!("{label}: {w}"))
                .collect();
            let bias_linear = misspec_bias(&fm.value, d)?;
            let sw = sandwich_for_models(&actual, &assumed, domain)?;
            let grid = LikelihoodGrid::new(&assumed, domain, MLE_GRID_POINTS)?;
            // the data depend on λ only, so every offset sees the same records
            let est = trials(&actual, cfg, (i * r) as u64, |s| {
                mle_single_on_grid(s, &assumed, &grid)
            })?;
            warnings.extend(boundary_warning(&label, &est));
            let phis: Vec<f64> = est.iter().map(|e| e.phi_star).collect();
            let st = stats(&phis, phi)?
                .ok_or_else(|| Error::Config("NonGaussMC needs repeats >= 2".into()))?;
            let qcrb = 1.0 / fq.sqrt();
            let row = vec![
                l.into(),
                d.into(),
                st.bias.into(),
                bias_linear.into(),
                (sw.q2.sqrt() / qcrb).into(),
                st.se_bias.into(),
                (sw.phi_star - phi).into(),
                ((st.variance * m).sqrt() / qcrb).into(),
                cfg.scheme.regime_label(l).into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "lambda",
            "dlambda",
            "bias_mc",
            "bias_linear",
            "q_over_qcrb",
            "se",
            "bias_sandwich",
            "q_mc_over_qcrb",
            "regime",
        ],
        rows,
    )
}

pub(super) fn two_param_rescue(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n_atoms() as f64;
    let prep = Preparer::new(cfg.n_atoms())?;
    let phi = cfg.phi.unwrap_or(0.0);
    let m = cfg.shots()[0] as f64;
    let r = cfg.repeats();
    let window = cfg.lambda_window.unwrap_or(0.02);
    let domain = phase_domain(cfg.basis());
    let dls = ExperimentConfig::grid(&cfg.dlambda)?;
    let lambdas = ExperimentConfig::grid(&cfg.lambda)?;
    let cells: Vec<(usize, f64, f64)> = lambdas
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| dls.iter().map(move |&d| (i, l, d)))
        .collect();
    let rows: Vec<RowResult> = cells
        .into_iter()
        .map(|(i, l, d)| {
            let lp = l + d;
            let label = format!("lambda={l} dlambda={d}");
            let joint = joint_for(&prep, cfg, l, lp)?;
            let actual = joint.family(l)?.dist(phi);
            let assumed = joint.family(lp)?;
            let lam_dom = ((lp - window).max(0.0), lp + window);
            if !(lam_dom.0 <= l && l <= lam_dom.1) {
                return Err(Error::Config(format!(
                    "{label}: actual lambda lies outside the two-parameter window {lam_dom:?}"
                )));
            }
            let grid1 = LikelihoodGrid::new(&assumed, domain, MLE_GRID_POINTS)?;
            let grid2 = JointGrid::new(&joint, domain, lam_dom, TWO_PARAM_GRID_POINTS)?;
            let first = (i * r) as u64;
            let single = trials(&actual, cfg, first, |s| {
                mle_single_on_grid(s, &assumed, &grid1)
            })?;
            let two = trials(&actual, cfg, first, |s| {
                mle_two_param_on_grid(s, &joint, &grid2)
            })?;
            let mut warnings = Vec::new();
            warnings.extend(boundary_warning(&format!("{label} single"), &single));
            warnings.extend(boundary_warning(&format!("{label} two-parameter"), &two));
            let phis1: Vec<f64> = single.iter().map(|e| e.phi_star).collect();
            let phis2: Vec<f64> = two.iter().map(|e| e.phi_star).collect();
            let s1 = stats(&phis1, phi)?
                .ok_or_else(|| Error::Config("TwoParamRescue needs repeats >= 2".into()))?;
            let s2 = stats(&phis2, phi)?
                .ok_or_else(|| Error::Config("TwoParamRescue needs repeats >= 2".into()))?;
            let fm = fisher_matrix(&joint, phi, l)?;
            warnings.extend(fm.warnings.iter().map(|w| format!("{label}: {w}")));
            let q_two = two_param_q(&fm.value)?;
            let row = vec![
                l.into(),
                (n * s1.mse).sqrt().into(),
                (n * s2.mse).sqrt().into(),
                ((n / m).sqrt() * q_two).into(),
                d.into(),
                s1.bias.into(),
                s2.bias.into(),
                (n / (m * fm.value.f_phiphi)).sqrt().into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "lambda",
            "sqrtN_mse_single",
            "sqrtN_mse_two",
            "crb_two",
            "dlambda",
            "bias_single",
            "bias_two",
            "crb_single",
        ],
        rows,
    )
}

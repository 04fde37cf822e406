//! Random preparation error: MOM and Cramér–Rao sensitivities of Gaussian
//! mixtures over λ.

use rayon::prelude::*;

use super::{assemble, ExperimentConfig, RowResult, RunOutput};
use crate::error::Result;
use crate::mixedstate::{
    build_mixture, crb_mixed, mixed_moments, mom_sensitivity_mixed, MixtureSpec,
};
use crate::schemes::Preparer;

/// Both sensitivities are single-shot and scaled by `√N`, so shot noise is 1.
pub(super) fn mixed_state(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = cfg.n_atoms();
    let prep = Preparer::new(n)?;
    let phi = cfg.phi.unwrap_or(0.0);
    let nodes = cfg.nodes.unwrap_or(crate::mixedstate::DEFAULT_NODES);
    let spreads = ExperimentConfig::grid(&cfg.delta_lambda)?;
    let cells: Vec<(f64, f64)> = ExperimentConfig::grid(&cfg.lambda)?
        .into_iter()
        .flat_map(|l| spreads.iter().map(move |&s| (l, s)))
        .collect();
    let sqrt_n = (n as f64).sqrt();
    let rows: Vec<RowResult> = cells
        .into_par_iter()
        .map(|(l0, dl)| {
            let mix = build_mixture(
                &prep,
                MixtureSpec::new(l0, dl).with_nodes(nodes),
                cfg.scheme,
            )?;
            let mom = mom_sensitivity_mixed(&prep, &mix, phi, 1)?;
            let crb = crb_mixed(&prep, &mix, cfg.basis(), phi)?;
            let (_, var_jx) = mixed_moments(&prep, &mix, prep.ops().jx())?;
            let warnings = crb
                .warnings
                .iter()
                .map(|w| format!("lambda0={l0} delta_lambda={dl}: {w}"))
                .collect();
            let row = vec![
                cfg.scheme.name().into(),
                l0.into(),
                dl.into(),
                (sqrt_n * mom).into(),
                (sqrt_n * crb.value).into(),
                var_jx.into(),
                mix.nodes.len().into(),
            ];
            Ok((row, warnings))
        })
        .collect();
    assemble(
        &[
            "scheme",
            "lambda0",
            "delta_lambda",
            "sqrtN_dphi_mom",
            "sqrtN_crb",
            "var_jx",
            "n_nodes",
        ],
        rows,
    )
}

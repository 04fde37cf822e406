//! Monte-Carlo measurement records and the three phase estimators.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::mom_estimate;
use crate::model::{JointModel, PhaseModel};
use crate::optimize::{argmax, golden_max, linspace, refine_from_grid};
use crate::spin_core::{Basis, ProbDist, PROB_FLOOR};

pub const MLE_GRID_POINTS: usize = 2001;
pub const TWO_PARAM_GRID_POINTS: usize = 201;
pub const MLE_TOL: f64 = 1e-9;
const TWO_PARAM_MOVE_TOL: f64 = 1e-7;
const TWO_PARAM_MAX_PASSES: usize = 500;

/// φ search interval for `basis`. The x readout cannot tell `φ` from `-φ`
/// for the states used here, so its domain is the non-negative half.
pub fn phase_domain(basis: Basis) -> (f64, f64) {
    match basis {
        Basis::Z => (-FRAC_PI_2, FRAC_PI_2),
        Basis::X => (0.0, FRAC_PI_2),
    }
}

/// Outcome counts aligned with a distribution's outcome order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    counts: Vec<u64>,
    m_total: u64,
    master_seed: u64,
    trial_index: u64,
}

impl SampleSet {
    pub fn from_counts(counts: Vec<u64>, master_seed: u64, trial_index: u64) -> Self {
        let m_total = counts.iter().sum();
        Self {
            counts,
            m_total,
            master_seed,
            trial_index,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn m_total(&self) -> u64 {
        self.m_total
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trial_index(&self) -> u64 {
        self.trial_index
    }

    /// Sample mean of the outcome values.
    pub fn mean(&self, outcomes: &[f64]) -> Result<f64> {
        if outcomes.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                got: outcomes.len(),
            });
        }
        if self.m_total == 0 {
            return Err(Error::InvalidArgument("empty sample set".into()));
        }
        let s: f64 = outcomes
            .iter()
            .zip(&self.counts)
            .map(|(m, &c)| m * c as f64)
            .sum();
        Ok(s / self.m_total as f64)
    }
}

/// Independent random stream of trial `trial_index`.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Draws `shots` outcomes by inverse CDF from the trial's own stream.
pub fn sample_outcomes(
    dist: &ProbDist,
    shots: u64,
    master_seed: u64,
    trial_index: u64,
) -> Result<SampleSet> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be >= 1".into()));
    }
    let total: f64 = dist.probs().iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "distribution sums to {total}"
        )));
    }
    let mut cdf: Vec<f64> = dist
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last = cdf.len() - 1;
    cdf[last] = f64::INFINITY;
    let mut counts = vec![0u64; cdf.len()];
    let mut rng = trial_rng(master_seed, trial_index);
    for _ in 0..shots {
        let u: f64 = rng.random();
        let k = cdf.partition_point(|&c| c <= u);
        counts[k.min(last)] += 1;
    }
    Ok(SampleSet::from_counts(counts, master_seed, trial_index))
}

/// Log-likelihood with a flag for observed outcomes the model forbids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub impossible: bool,
}

/// `Σ counts · log P`; an observed outcome with `P < 1e-300` yields `-∞`.
pub fn log_likelihood(samples: &SampleSet, dist: &ProbDist) -> Result<LogLik> {
    if dist.len() != samples.counts.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.counts.len(),
            got: dist.len(),
        });
    }
    let mut value = 0.0;
    for (&c, &p) in samples.counts.iter().zip(dist.probs()) {
        if c == 0 {
            continue;
        }
        if p < PROB_FLOOR {
            return Ok(LogLik {
                value: f64::NEG_INFINITY,
                impossible: true,
            });
        }
        value += c as f64 * p.ln();
    }
    Ok(LogLik {
        value,
        impossible: false,
    })
}

fn loglik_from_table(counts: &[u64], log_probs: &[f64]) -> f64 {
    counts
        .iter()
        .zip(log_probs)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &l)| c as f64 * l)
        .sum()
}

fn model_loglik(samples: &SampleSet, model: &dyn PhaseModel, phi: f64) -> f64 {
    match model.dist(phi) {
        Ok(d) => loglik_from_table(&samples.counts, &d.log_probs()),
        Err(_) => f64::NEG_INFINITY,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateResult {
    pub phi_star: f64,
    pub lambda_star: Option<f64>,
    pub loglik_at_opt: f64,
    pub converged: bool,
    pub grid_bounds_hit: bool,
}

/// Log-probabilities of a one-parameter model on a fixed φ grid, shared by
/// every trial that uses the same model.
#[derive(Clone, Debug)]
pub struct LikelihoodGrid {
    phis: Vec<f64>,
    log_probs: Vec<Vec<f64>>,
}

impl LikelihoodGrid {
    pub fn new(model: &dyn PhaseModel, domain: (f64, f64), points: usize) -> Result<Self> {
        if !(domain.0 < domain.1) || points < 3 {
            return Err(Error::InvalidArgument(format!(
                "bad search domain {domain:?} / {points} points"
            )));
        }
        let phis = linspace(domain.0, domain.1, points);
        let log_probs = phis
            .par_iter()
            .map(|&p| model.dist(p).map(|d| d.log_probs()))
            .collect::<Result<_>>()?;
        Ok(Self { phis, log_probs })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.phis[0], self.phis[self.phis.len() - 1])
    }

    fn scan(&self, counts: &[u64]) -> Vec<f64> {
        self.log_probs
            .iter()
            .map(|lp| loglik_from_table(counts, lp))
            .collect()
    }
}

/// Grid scan over `domain` with `MLE_GRID_POINTS`, then golden refinement.
pub fn mle_single(
    samples: &SampleSet,
    model: &dyn PhaseModel,
    domain: (f64, f64),
) -> Result<EstimateResult> {
    let grid = LikelihoodGrid::new(model, domain, MLE_GRID_POINTS)?;
    mle_single_on_grid(samples, model, &grid)
}

/// [`mle_single`] with a precomputed grid.
pub fn mle_single_on_grid(
    samples: &SampleSet,
    model: &dyn PhaseModel,
    grid: &LikelihoodGrid,
) -> Result<EstimateResult> {
    let values = grid.scan(&samples.counts);
    let (phi, ll, hit) = refine_from_grid(
        |p| model_loglik(samples, model, p),
        &grid.phis,
        &values,
        MLE_TOL,
    )
    .ok_or_else(|| Error::Numerical("likelihood is NaN on the whole grid".into()))?;
    Ok(EstimateResult {
        phi_star: phi,
        lambda_star: None,
        loglik_at_opt: ll,
        converged: ll.is_finite(),
        grid_bounds_hit: hit,
    })
}

/// Joint log-probability table over a `(λ, φ)` grid.
#[derive(Clone, Debug)]
pub struct JointGrid {
    phis: Vec<f64>,
    lambdas: Vec<f64>,
    /// `log_probs[i_lambda][i_phi]`
    log_probs: Vec<Vec<Vec<f64>>>,
}

impl JointGrid {
    pub fn new(
        model: &dyn JointModel,
        phi_domain: (f64, f64),
        lambda_domain: (f64, f64),
        points: usize,
    ) -> Result<Self> {
        if !(phi_domain.0 < phi_domain.1) || !(lambda_domain.0 < lambda_domain.1) || points < 3 {
            return Err(Error::InvalidArgument(
                "bad two-parameter search domain".into(),
            ));
        }
        let phis = linspace(phi_domain.0, phi_domain.1, points);
        let lambdas = linspace(lambda_domain.0, lambda_domain.1, points);
        let log_probs = lambdas
            .par_iter()
            .map(|&l| {
                let slice = model.slice(l)?;
                phis.iter()
                    .map(|&p| slice.dist(p).map(|d| d.log_probs()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            phis,
            lambdas,
            log_probs,
        })
    }
}

/// Two-parameter MLE. A point-like λ domain delegates to [`mle_single`].
pub fn mle_two_param(
    samples: &SampleSet,
    model: &dyn JointModel,
    phi_domain: (f64, f64),
    lambda_domain: (f64, f64),
) -> Result<EstimateResult> {
    if lambda_domain.0 == lambda_domain.1 {
        let slice = model.slice(lambda_domain.0)?;
        let mut r = mle_single(samples, slice.as_ref(), phi_domain)?;
        r.lambda_star = Some(lambda_domain.0);
        return Ok(r);
    }
    let grid = JointGrid::new(model, phi_domain, lambda_domain, TWO_PARAM_GRID_POINTS)?;
    mle_two_param_on_grid(samples, model, &grid)
}

/// [`mle_two_param`] with a precomputed grid: grid argmax, then alternating
/// golden passes in φ and λ until the joint move is below `1e-7`.
pub fn mle_two_param_on_grid(
    samples: &SampleSet,
    model: &dyn JointModel,
    grid: &JointGrid,
) -> Result<EstimateResult> {
    let n_phi = grid.phis.len();
    let flat: Vec<f64> = grid
        .log_probs
        .iter()
        .flat_map(|row| row.iter().map(|lp| loglik_from_table(&samples.counts, lp)))
        .collect();
    let best = argmax(&flat)
        .ok_or_else(|| Error::Numerical("likelihood is NaN on the whole grid".into()))?;
    let (il, ip) = (best / n_phi, best % n_phi);
    let last = n_phi - 1;
    let mut hit = ip == 0 || ip == last || il == 0 || il == grid.lambdas.len() - 1;

    let (phi_lo, phi_hi) = (grid.phis[0], grid.phis[last]);
    let (lam_lo, lam_hi) = (grid.lambdas[0], grid.lambdas[grid.lambdas.len() - 1]);
    let dphi = grid.phis[1] - grid.phis[0];
    let dlam = grid.lambdas[1] - grid.lambdas[0];
    let mut phi = grid.phis[ip];
    let mut lam = grid.lambdas[il];
    let mut ll = flat[best];
    let mut converged = false;

    let joint_ll = |p: f64, l: f64| -> f64 {
        match model.dist(p, l) {
            Ok(d) => loglik_from_table(&samples.counts, &d.log_probs()),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    for _ in 0..TWO_PARAM_MAX_PASSES {
        let slice = model.slice(lam)?;
        let (p_new, v_phi) = golden_max(
            |p| model_loglik(samples, slice.as_ref(), p),
            (phi - dphi).max(phi_lo),
            (phi + dphi).min(phi_hi),
            MLE_TOL,
        );
        let p_new = if v_phi >= ll { p_new } else { phi };
        let ll_phi = v_phi.max(ll);
        let (l_new, v_lam) = golden_max(
            |l| joint_ll(p_new, l),
            (lam - dlam).max(lam_lo),
            (lam + dlam).min(lam_hi),
            MLE_TOL,
        );
        let l_new = if v_lam >= ll_phi { l_new } else { lam };
        let moved = (p_new - phi).hypot(l_new - lam);
        phi = p_new;
        lam = l_new;
        ll = v_lam.max(ll_phi);
        if moved < TWO_PARAM_MOVE_TOL {
            converged = true;
            break;
        }
    }
    let edge = |x: f64, lo: f64, hi: f64| (x - lo).abs() < 1e-12 || (hi - x).abs() < 1e-12;
    hit |= edge(phi, phi_lo, phi_hi) || edge(lam, lam_lo, lam_hi);
    Ok(EstimateResult {
        phi_star: phi,
        lambda_star: Some(lam),
        loglik_at_opt: ll,
        converged: converged && ll.is_finite(),
        grid_bounds_hit: hit,
    })
}

/// Applies the arcsin estimator to the sample mean of `J_z`.
pub fn mom_pipeline(
    samples: &SampleSet,
    outcomes: &[f64],
    jx0_assumed: f64,
) -> Result<EstimateResult> {
    let mean = samples.mean(outcomes)?;
    Ok(EstimateResult {
        phi_star: mom_estimate(mean, jx0_assumed)?,
        lambda_star: None,
        loglik_at_opt: f64::NAN,
        converged: true,
        grid_bounds_hit: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalStats {
    pub repeats: usize,
    pub mean: f64,
    pub bias: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mse: f64,
    pub se_bias: f64,
}

pub fn empirical_stats(phi_stars: &[f64], true_phi: f64) -> Result<EmpiricalStats> {
    let r = phi_stars.len();
    if r < 2 {
        return Err(Error::InvalidArgument("need at least 2 repeats".into()));
    }
    let mean = phi_stars.iter().sum::<f64>() / r as f64;
    let variance = phi_stars.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let mse = phi_stars
        .iter()
        .map(|x| (x - true_phi).powi(2))
        .sum::<f64>()
        / r as f64;
    Ok(EmpiricalStats {
        repeats: r,
        mean,
        bias: mean - true_phi,
        variance,
        mse,
        se_bias: (variance / r as f64).sqrt(),
    })
}

/// [`empirical_stats`] over estimator outputs.
pub fn stats_of(results: &[EstimateResult], true_phi: f64) -> Result<EmpiricalStats> {
    let phis: Vec<f64> = results.iter().map(|r| r.phi_star).collect();
    empirical_stats(&phis, true_phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::classical_fisher;
    use crate::model::{PhaseFamily, SchemeModel};
    use crate::schemes::{PrepConfig, Preparer, SchemeKind};
    use proptest::prelude::*;

    /// Box–Muller draw for the statistics sanity check.
    fn normal(rng: &mut impl rand::Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn delta_distribution_sampling() {
        let d = ProbDist::new(vec![1.0, 0.0, -1.0], vec![0.0, 1.0, 0.0]).unwrap();
        let s = sample_outcomes(&d, 1000, 7, 3).unwrap();
        assert_eq!(s.counts(), &[0, 1000, 0]);
        assert_eq!(s.m_total(), 1000);
        assert!(sample_outcomes(&d, 0, 7, 3).is_err());
    }

    #[test]
    fn binomial_statistics_and_determinism() {
        let d = ProbDist::new(vec![0.5, -0.5], vec![0.5, 0.5]).unwrap();
        let m = 1_000_000u64;
        let s = sample_outcomes(&d, m, 42, 0).unwrap();
        let dev = (s.counts()[0] as f64 - m as f64 / 2.0).abs();
        assert!(dev < 4.0 * (m as f64 / 4.0).sqrt());
        assert_eq!(s, sample_outcomes(&d, m, 42, 0).unwrap());
        assert_ne!(s, sample_outcomes(&d, m, 42, 1).unwrap());
    }

    #[test]
    fn likelihood_examples() {
        let d = ProbDist::new(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        let s = SampleSet::from_counts(vec![5, 0], 0, 0);
        assert_eq!(log_likelihood(&s, &d).unwrap().value, 0.0);
        let bad = SampleSet::from_counts(vec![5, 1], 0, 0);
        let ll = log_likelihood(&bad, &d).unwrap();
        assert!(ll.impossible && ll.value == f64::NEG_INFINITY);
        let n = 10;
        let u = ProbDist::new(
            (0..=n).map(|k| k as f64).collect(),
            vec![1.0 / (n + 1) as f64; n + 1],
        )
        .unwrap();
        let s = SampleSet::from_counts((0..=n as u64).collect(), 0, 0);
        let m = s.m_total() as f64;
        assert!(
            (log_likelihood(&s, &u).unwrap().value - m * (1.0 / (n + 1) as f64).ln()).abs() < 1e-9
        );
    }

    fn oat_family(p: &Preparer, l: f64) -> PhaseFamily<'_> {
        SchemeModel::for_assumed(p, SchemeKind::OatNonGauss, Basis::X, l)
            .unwrap()
            .family(l)
            .unwrap()
    }

    #[test]
    fn concave_near_optimum_and_crb_width() {
        let p = Preparer::new(100).unwrap();
        let fam = oat_family(&p, 0.15);
        let m = 100_000u64;
        let s = sample_outcomes(&fam.dist(0.02), m, 11, 0).unwrap();
        let r = mle_single(&s, &fam, phase_domain(Basis::X)).unwrap();
        assert!(!r.grid_bounds_hit && r.converged);
        let fc = classical_fisher(&fam, 0.02).unwrap().value;
        assert!((r.phi_star - 0.02).abs() < 3.0 / (m as f64 * fc).sqrt());
        let ll = |phi: f64| log_likelihood(&s, &fam.dist(phi)).unwrap().value;
        assert!(ll(r.phi_star + 1e-3) < r.loglik_at_opt && ll(r.phi_star - 1e-3) < r.loglik_at_opt);
    }

    #[test]
    fn boundary_hits_are_flagged() {
        let p = Preparer::new(20).unwrap();
        let fam = PhaseFamily::new(p.ops(), &p.ops().css_x(), Basis::Z);
        let s = sample_outcomes(&fam.dist(0.5), 2000, 1, 0).unwrap();
        let r = mle_single(&s, &fam, (-0.2, 0.2)).unwrap();
        assert!(r.grid_bounds_hit);
        assert!(r.phi_star <= 0.2);
    }

    #[test]
    fn collapsed_lambda_domain_matches_single() {
        let p = Preparer::new(30).unwrap();
        let model = SchemeModel::for_assumed(&p, SchemeKind::TatSqueezed, Basis::Z, 0.01).unwrap();
        let fam = model.family(0.01).unwrap();
        let s = sample_outcomes(&fam.dist(0.05), 500, 3, 9).unwrap();
        let dom = phase_domain(Basis::Z);
        let two = mle_two_param(&s, &model, dom, (0.01, 0.01)).unwrap();
        let one = mle_single(&s, &fam, dom).unwrap();
        assert_eq!(two.phi_star, one.phi_star);
        assert_eq!(two.lambda_star, Some(0.01));
    }

    #[test]
    fn two_param_recovers_both_parameters() {
        let p = Preparer::new(40).unwrap();
        let model = SchemeModel::for_assumed(&p, SchemeKind::TatSqueezed, Basis::Z, 0.02).unwrap();
        let truth = model.family(0.02).unwrap().dist(0.03);
        let s = sample_outcomes(&truth, 200_000, 5, 0).unwrap();
        let r = mle_two_param(&s, &model, (-0.5, 0.5), (0.0, 0.05)).unwrap();
        assert!(r.converged && !r.grid_bounds_hit);
        assert!((r.phi_star - 0.03).abs() < 2e-3, "{r:?}");
        assert!((r.lambda_star.unwrap() - 0.02).abs() < 2e-3, "{r:?}");
        // refinement never loses likelihood relative to the grid optimum
        let ll = log_likelihood(
            &s,
            &JointModel::dist(&model, r.phi_star, r.lambda_star.unwrap()).unwrap(),
        )
        .unwrap();
        assert!((ll.value - r.loglik_at_opt).abs() < 1e-6 * ll.value.abs());
    }

    #[test]
    fn mom_pipeline_on_exact_counts() {
        // counts proportional to the exact distribution reproduce φ
        let p = Preparer::new(50).unwrap();
        let s = p
            .prepare(&PrepConfig::unbiased(50, SchemeKind::TatSqueezed, 0.02))
            .unwrap();
        let jx0 = p.ops().expectation(&s, p.ops().jx()).unwrap();
        let fam = PhaseFamily::new(p.ops(), &s, Basis::Z);
        let d = fam.dist(0.01);
        let scale = 1e15;
        let counts: Vec<u64> = d
            .probs()
            .iter()
            .map(|q| (q * scale).round() as u64)
            .collect();
        let set = SampleSet::from_counts(counts, 0, 0);
        let exact_mean = d.mean();
        let r = mom_pipeline(&set, p.ops().m_values(), jx0).unwrap();
        // the rounded counts carry ~1e-15 relative error in the mean
        let expected = mom_estimate(exact_mean, jx0).unwrap();
        assert!((r.phi_star - expected).abs() < 1e-10);
        assert!((expected - 0.01).abs() < 1e-4);
    }

    #[test]
    fn mom_bias_sign_follows_assumed_lambda() {
        let p = Preparer::new(100).unwrap();
        let s = p
            .prepare(&PrepConfig::unbiased(100, SchemeKind::TatSqueezed, 0.02))
            .unwrap();
        let jx0 = |l: f64| {
            let st = p
                .prepare(&PrepConfig::unbiased(100, SchemeKind::TatSqueezed, l))
                .unwrap();
            p.ops().expectation(&st, p.ops().jx()).unwrap()
        };
        let fam = PhaseFamily::new(p.ops(), &s, Basis::Z);
        let set = sample_outcomes(&fam.dist(0.01), 1_000_000, 2, 0).unwrap();
        let est = mom_pipeline(&set, p.ops().m_values(), jx0(0.01)).unwrap();
        assert!(est.phi_star < 0.01);
    }

    #[test]
    fn stats_examples() {
        let st = empirical_stats(&[0.3, 0.3, 0.3], 0.25).unwrap();
        assert_eq!(st.variance, 0.0);
        assert!((st.bias - 0.05).abs() < 1e-15);
        assert!(empirical_stats(&[0.1], 0.0).is_err());
        let mut rng = trial_rng(99, 0);
        let xs: Vec<f64> = (0..4000).map(|_| 1.5 + 0.2 * normal(&mut rng)).collect();
        let st = empirical_stats(&xs, 1.5).unwrap();
        assert!(st.bias.abs() < 3.0 * st.se_bias);
        let se_var = 0.04 * (2.0 / 3999.0f64).sqrt();
        assert!((st.variance - 0.04).abs() < 3.0 * se_var);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn counts_sum_to_shots(seed in any::<u64>(), trial in any::<u64>(), shots in 1u64..5000) {
            let d = ProbDist::new(vec![1.0, 0.0, -1.0], vec![0.2, 0.5, 0.3]).unwrap();
            let s = sample_outcomes(&d, shots, seed, trial).unwrap();
            prop_assert_eq!(s.counts().iter().sum::<u64>(), shots);
            prop_assert_eq!(s.clone(), sample_outcomes(&d, shots, seed, trial).unwrap());
        }
    }
}

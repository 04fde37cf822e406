//! Exact collective-spin engine on the symmetric Dicke subspace.
//!
//! Basis states `|J, m>` are stored in the order `m = +J, J-1, ..., -J`, so
//! index `k` carries `m = J - k`. Every unitary in the crate follows the
//! convention `exp(-i * angle * G)`; callers that want `exp(+i * a * G)` pass
//! `-a`.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest atom number simulated exactly unless a caller raises the cap.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Probabilities below this are treated as zero before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

const HERMITIAN_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Readout basis. `X` is realised by a clockwise quarter turn about `J_y`
/// followed by a number-difference (`J_z`) measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

/// Spectral decomposition `H = V diag(e) V^†` of a Hermitian matrix, used to
/// apply `exp(-i t H)` repeatedly at O(dim²) per call.
#[derive(Clone, Debug)]
pub struct Propagator {
    values: Vec<f64>,
    vectors: CMatrix,
    adjoint: CMatrix,
}

impl Propagator {
    pub fn new(generator: &CMatrix) -> Result<Self> {
        check_hermitian(generator)?;
        let dim = generator.nrows();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty generator".into()));
        }
        // symmetrise away rounding so the solver sees an exactly Hermitian input
        let h = (generator + generator.adjoint()).map(|z| z * 0.5);
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Eigen(format!("no convergence for dimension {dim}")))?;
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen("non-finite eigenvalue".into()));
        }
        let adjoint = eig.eigenvectors.adjoint();
        Ok(Self {
            values,
            vectors: eig.eigenvectors,
            adjoint,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Coefficients of `psi` in the eigenbasis, `V^† psi`.
    pub fn to_eigenbasis(&self, psi: &CVector) -> CVector {
        &self.adjoint * psi
    }

    /// `V diag(exp(-i t e)) c` for eigenbasis coefficients `c`.
    pub fn evolve_from_eigenbasis(&self, coeffs: &CVector, time: f64) -> CVector {
        let phased = CVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(&self.values)
                .map(|(c, e)| c * C64::from_polar(1.0, -time * e)),
        );
        &self.vectors * phased
    }

    /// `exp(-i t H) psi`.
    pub fn apply(&self, psi: &CVector, time: f64) -> CVector {
        self.evolve_from_eigenbasis(&self.to_eigenbasis(psi), time)
    }

    /// Dense unitary `exp(-i t H)`.
    pub fn unitary(&self, time: f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (mut col, e) in scaled.column_iter_mut().zip(&self.values) {
            col *= C64::from_polar(1.0, -time * e);
        }
        scaled * &self.adjoint
    }
}

/// Largest entry of `|A - A^†|`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_hermitian(a: &CMatrix) -> Result<()> {
    let scale = a.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let dev = hermitian_deviation(a);
    if dev > HERMITIAN_TOL * scale {
        Err(Error::NotHermitian(dev))
    } else {
        Ok(())
    }
}

/// Collective spin operators `J_x, J_y, J_z` for `N` two-mode bosons, with
/// cached spectral decompositions of `J_x` and `J_y`.
#[derive(Clone, Debug)]
pub struct CollectiveOps {
    n_atoms: usize,
    j: f64,
    m_values: Vec<f64>,
    jx: CMatrix,
    jy: CMatrix,
    jz: CMatrix,
    x_prop: Propagator,
    y_prop: Propagator,
}

/// Builds the collective operators for `n_atoms` with the default dimension cap.
pub fn build_ops(n_atoms: usize) -> Result<CollectiveOps> {
    CollectiveOps::new(n_atoms)
}

impl CollectiveOps {
    pub fn new(n_atoms: usize) -> Result<Self> {
        Self::with_cap(n_atoms, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(n_atoms: usize, cap: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::Resource("atom number must be at least 1".into()));
        }
        if n_atoms > cap {
            return Err(Error::Resource(format!(
                "N = {n_atoms} exceeds the exact-simulation cap {cap}"
            )));
        }
        let dim = n_atoms + 1;
        let j = n_atoms as f64 / 2.0;
        let m_values: Vec<f64> = (0..dim).map(|k| j - k as f64).collect();

        let jz = CMatrix::from_fn(dim, dim, |r, c| {
            if r == c {
                C64::new(m_values[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        // <m+1|J_+|m> sits at (k-1, k) because index k holds m = J - k
        let mut jplus = CMatrix::zeros(dim, dim);
        for k in 1..dim {
            let m = m_values[k];
            jplus[(k - 1, k)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
        let jminus = jplus.adjoint();
        let jx = (&jplus + &jminus).map(|z| z * 0.5);
        let jy = (&jplus - &jminus).map(|z| z * C64::new(0.0, -0.5));

        let x_prop = Propagator::new(&jx)?;
        let y_prop = Propagator::new(&jy)?;
        Ok(Self {
            n_atoms,
            j,
            m_values,
            jx,
            jy,
            jz,
            x_prop,
            y_prop,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Total spin `J = N/2`.
    pub fn j(&self) -> f64 {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    /// `m` value of each basis index.
    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    pub fn jx(&self) -> &CMatrix {
        &self.jx
    }

    pub fn jy(&self) -> &CMatrix {
        &self.jy
    }

    pub fn jz(&self) -> &CMatrix {
        &self.jz
    }

    pub fn op(&self, axis: Axis) -> &CMatrix {
        match axis {
            Axis::X => &self.jx,
            Axis::Y => &self.jy,
            Axis::Z => &self.jz,
        }
    }

    /// Cached propagator for `J_x` or `J_y`; `None` for the diagonal `J_z`.
    pub fn propagator(&self, axis: Axis) -> Option<&Propagator> {
        match axis {
            Axis::X => Some(&self.x_prop),
            Axis::Y => Some(&self.y_prop),
            Axis::Z => None,
        }
    }

    fn check_dim(&self, state: &SpinState) -> Result<()> {
        if state.amplitudes.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: state.amplitudes.len(),
            });
        }
        Ok(())
    }

    /// Coherent spin state along `+x` for this `N`.
    pub fn css_x(&self) -> SpinState {
        // n_atoms >= 1 was validated in the constructor
        css_x(self.n_atoms).expect("validated atom number")
    }

    /// `exp(-i * angle * J_axis) |state>`.
    pub fn rotate(&self, state: &SpinState, axis: Axis, angle: f64) -> Result<SpinState> {
        self.check_dim(state)?;
        let amplitudes = match axis {
            Axis::Z => CVector::from_iterator(
                self.dim(),
                state
                    .amplitudes
                    .iter()
                    .zip(&self.m_values)
                    .map(|(a, m)| a * C64::from_polar(1.0, -angle * m)),
            ),
            Axis::X => self.x_prop.apply(&state.amplitudes, angle),
            Axis::Y => self.y_prop.apply(&state.amplitudes, angle),
        };
        Ok(SpinState::from_unitary_output(self.n_atoms, amplitudes))
    }

    /// Multiplies the amplitude at `m` by `exp(i * strength * m²)`.
    pub fn apply_jz_squared_phase(&self, state: &SpinState, strength: f64) -> Result<SpinState> {
        self.check_dim(state)?;
        let amplitudes = CVector::from_iterator(
            self.dim(),
            state
                .amplitudes
                .iter()
                .zip(&self.m_values)
                .map(|(a, m)| a * C64::from_polar(1.0, strength * m * m)),
        );
        Ok(SpinState::from_unitary_output(self.n_atoms, amplitudes))
    }

    /// `exp(-i * time * generator) |state>` by dense Hermitian
    /// eigendecomposition. For repeated use build a [`Propagator`] once.
    pub fn apply_hermitian_evolution(
        &self,
        state: &SpinState,
        generator: &CMatrix,
        time: f64,
    ) -> Result<SpinState> {
        self.check_dim(state)?;
        if generator.nrows() != self.dim() || generator.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: generator.nrows(),
            });
        }
        let prop = Propagator::new(generator)?;
        Ok(SpinState::from_unitary_output(
            self.n_atoms,
            prop.apply(&state.amplitudes, time),
        ))
    }

    /// Applies a previously built propagator.
    pub fn evolve(&self, state: &SpinState, prop: &Propagator, time: f64) -> Result<SpinState> {
        self.check_dim(state)?;
        if prop.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: prop.dim(),
            });
        }
        Ok(SpinState::from_unitary_output(
            self.n_atoms,
            prop.apply(&state.amplitudes, time),
        ))
    }

    pub fn expectation(&self, state: &SpinState, op: &CMatrix) -> Result<f64> {
        self.check_dim(state)?;
        check_hermitian(op)?;
        Ok(raw_expectation(&state.amplitudes, op))
    }

    pub fn variance(&self, state: &SpinState, op: &CMatrix) -> Result<f64> {
        self.check_dim(state)?;
        check_hermitian(op)?;
        let psi = &state.amplitudes;
        let a_psi = op * psi;
        let mean = psi.dotc(&a_psi).re;
        let second = a_psi.dotc(&a_psi).re;
        Ok((second - mean * mean).max(0.0))
    }

    /// Symmetrised covariance `<AB + BA>/2 - <A><B>`.
    pub fn sym_covariance(&self, state: &SpinState, a: &CMatrix, b: &CMatrix) -> Result<f64> {
        self.check_dim(state)?;
        check_hermitian(a)?;
        check_hermitian(b)?;
        let psi = &state.amplitudes;
        let a_psi = a * psi;
        let b_psi = b * psi;
        // <AB> = (A psi)^† (B psi); its real part is <AB + BA>/2
        let sym = a_psi.dotc(&b_psi).re;
        Ok(sym - psi.dotc(&a_psi).re * psi.dotc(&b_psi).re)
    }

    /// Outcome distribution of a number-difference readout in `basis`.
    pub fn outcome_distribution(&self, state: &SpinState, basis: Basis) -> Result<ProbDist> {
        self.check_dim(state)?;
        let read = match basis {
            Basis::Z => state.clone(),
            Basis::X => self.rotate(state, Axis::Y, -std::f64::consts::FRAC_PI_2)?,
        };
        Ok(ProbDist::from_amplitudes(&self.m_values, &read.amplitudes))
    }
}

fn raw_expectation(psi: &CVector, op: &CMatrix) -> f64 {
    psi.dotc(&(op * psi)).re
}

/// Pure state in the symmetric Dicke subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    n_atoms: usize,
    amplitudes: CVector,
}

/// Coherent spin state along `+x`: `a_k = sqrt(C(N,k)) / 2^{N/2}`.
pub fn css_x(n_atoms: usize) -> Result<SpinState> {
    if n_atoms == 0 {
        return Err(Error::Resource("atom number must be at least 1".into()));
    }
    let n = n_atoms as f64;
    let mut log_binom = 0.0_f64;
    let mut amps = Vec::with_capacity(n_atoms + 1);
    for k in 0..=n_atoms {
        if k > 0 {
            log_binom += ((n_atoms - k + 1) as f64).ln() - (k as f64).ln();
        }
        let amp = (0.5 * log_binom - 0.5 * n * std::f64::consts::LN_2).exp();
        amps.push(C64::new(amp, 0.0));
    }
    SpinState::new(n_atoms, CVector::from_vec(amps))
}

impl SpinState {
    /// Wraps a normalised amplitude vector of length `N + 1`.
    pub fn new(n_atoms: usize, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != n_atoms + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_atoms + 1,
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state norm {norm:.12} is not 1"
            )));
        }
        Ok(Self {
            n_atoms,
            amplitudes,
        })
    }

    /// Normalises an arbitrary nonzero vector.
    pub fn normalized(n_atoms: usize, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(
                "cannot normalise a zero vector".into(),
            ));
        }
        Self::new(n_atoms, amplitudes.unscale(norm))
    }

    /// Dicke state `|J, m>` at basis index `k`.
    pub fn dicke(n_atoms: usize, k: usize) -> Result<Self> {
        if k > n_atoms {
            return Err(Error::InvalidArgument(format!(
                "index {k} outside 0..={n_atoms}"
            )));
        }
        let mut v = CVector::zeros(n_atoms + 1);
        v[k] = C64::new(1.0, 0.0);
        Self::new(n_atoms, v)
    }

    pub(crate) fn from_unitary_output(n_atoms: usize, amplitudes: CVector) -> Self {
        Self {
            n_atoms,
            amplitudes,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `|<self|other>|`.
    pub fn overlap(&self, other: &SpinState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm()
    }

    /// `|<self|other>|²`.
    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.overlap(other).powi(2)
    }
}

/// Outcome distribution over `m = +J .. -J`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist {
    outcomes: Vec<f64>,
    probs: Vec<f64>,
}

impl ProbDist {
    /// Validates and renormalises. Entries down to `-1e-14` are clamped to 0.
    pub fn new(outcomes: Vec<f64>, mut probs: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probs.len() || probs.is_empty() {
            return Err(Error::InvalidArgument(
                "outcomes and probabilities must be nonempty and equally long".into(),
            ));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -1e-14 {
                return Err(Error::InvalidArgument(format!("invalid probability {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "distribution is not normalised (sum = {total})"
            )));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { outcomes, probs })
    }

    pub(crate) fn from_amplitudes(m_values: &[f64], amps: &CVector) -> Self {
        let mut probs: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self {
            outcomes: m_values.to_vec(),
            probs,
        }
    }

    /// Weighted sum of distributions sharing the same outcomes.
    pub fn mixture(parts: &[(f64, ProbDist)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let mut probs = vec![0.0; first.1.len()];
        for (w, d) in parts {
            if d.outcomes != first.1.outcomes {
                return Err(Error::InvalidArgument("mixture outcome sets differ".into()));
            }
            for (acc, p) in probs.iter_mut().zip(&d.probs) {
                *acc += w * p;
            }
        }
        Self::new(first.1.outcomes.clone(), probs)
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| m * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.outcomes
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| p * (m - mu).powi(2))
            .sum()
    }

    /// `log P` with the probability floor applied.
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.max(PROB_FLOOR).ln()).collect()
    }
}

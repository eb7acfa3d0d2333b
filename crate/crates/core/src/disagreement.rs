//! Weighted and unweighted steady-state disagreement of the noisy consensus
//! iteration `x(t+1) = P x(t) + w(t)`.
//!
//! Four closed forms are offered for reversible chains (hitting-time, Kemeny,
//! spectral and resistance), together with bounds and a ground-truth oracle
//! that iterates the error-covariance recursion
//! `S(t+1) = (P - J) S(t) (P - J)^T + (I - J) Sw (I - J)^T` with `J = 1 pi^T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    deviation_spectral_radius, effective_resistance, kemeny_constant_combinatorial,
    nonprincipal_eigenvalues, ChainAnalysis, StochasticMatrix,
};
use crate::tolerance;

/// Hard cap on the oracle's default iteration budget.
pub const ORACLE_MAX_ITERS_CAP: usize = 1_000_000;

/// Covariance `Sw` of the per-step noise vector.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseCovariance {
    Scalar { n: usize, sigma2: f64 },
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl NoiseCovariance {
    pub fn scalar(n: usize, sigma2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("noise dimension must be positive".into()));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::NotPsd(format!("scalar variance {sigma2}")));
        }
        Ok(Self::Scalar { n, sigma2 })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::InvalidParam("noise dimension must be positive".into()));
        }
        if let Some((i, v)) = variances.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NotPsd(format!("variance {v} at node {i}")));
        }
        Ok(Self::Diagonal(variances))
    }

    /// A full covariance, validated as symmetric and positive semidefinite by
    /// a Cholesky factorization of `S + eps I`, `eps = 1e-12 trace / n`.
    pub fn full(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::InvalidParam(format!("covariance must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPsd("non-finite entry".into()));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::NotPsd(format!("asymmetry {asym:.3e}")));
        }
        let trace = m.trace();
        if trace <= 0.0 {
            if m.amax() == 0.0 {
                return Ok(Self::Full(m));
            }
            return Err(Error::NotPsd(format!("non-positive trace {trace}")));
        }
        let eps = 1e-12 * trace / n as f64;
        let shifted = (&m + m.transpose()) * 0.5 + DMatrix::identity(n, n) * eps;
        if shifted.cholesky().is_none() {
            return Err(Error::NotPsd("Cholesky factorization failed".into()));
        }
        Ok(Self::Full(m))
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Scalar { n, .. } => *n,
            Self::Diagonal(v) => v.len(),
            Self::Full(m) => m.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        !matches!(self, Self::Full(_))
    }

    /// Per-node variances (the diagonal).
    pub fn variances(&self) -> Vec<f64> {
        match self {
            Self::Scalar { n, sigma2 } => vec![*sigma2; *n],
            Self::Diagonal(v) => v.clone(),
            Self::Full(m) => m.diagonal().iter().copied().collect(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Full(m) => m.clone(),
            _ => DMatrix::from_diagonal(&DVector::from_vec(self.variances())),
        }
    }

    pub fn trace(&self) -> f64 {
        self.variances().iter().sum()
    }

    /// A factor `L` with `L L^T = Sw`, used to color white noise. Full
    /// matrices use the eigendecomposition so singular covariances (such as
    /// common-mode noise) factor exactly.
    pub fn factor(&self) -> DMatrix<f64> {
        match self {
            Self::Full(m) => {
                let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
                let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
            _ => DMatrix::from_diagonal(&DVector::from_vec(self.variances()).map(f64::sqrt)),
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.n() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: n, got: self.n() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Theorem1,
    Spectral,
    Kemeny,
    Oracle,
    MonteCarlo,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub delta_ss: f64,
    pub delta_uni_lower: f64,
    pub delta_uni_upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_uni_exact: Option<f64>,
    pub method: Method,
    pub n: usize,
    pub graph_family: Option<String>,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub diagnostics: Diagnostics,
}

impl DisagreementReport {
    fn new(delta_ss: f64, pi: &DVector<f64>, method: Method) -> Self {
        let (delta_uni_lower, delta_uni_upper) = uni_sandwich(delta_ss, pi);
        Self {
            delta_ss,
            delta_uni_lower,
            delta_uni_upper,
            delta_uni_exact: None,
            method,
            n: pi.len(),
            graph_family: None,
            seed: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn with_context(mut self, graph_family: impl Into<String>, seed: Option<u64>) -> Self {
        self.graph_family = Some(graph_family.into());
        self.seed = seed;
        self
    }
}

/// `delta / (n pi_max) <= delta_uni <= delta / (n pi_min)`.
fn uni_sandwich(delta: f64, pi: &DVector<f64>) -> (f64, f64) {
    let n = pi.len() as f64;
    (delta / (n * pi.max()), delta / (n * pi.min()))
}

/// Rounding can push an exactly-zero disagreement a few ulps negative.
fn clamp_rounding(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if -value <= 1e-9 * scale.max(f64::MIN_POSITIVE) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("negative disagreement {value:.3e}")))
    }
}

/// Analysis of the squared chain `P^2`, shared by every closed form.
pub fn squared_chain_analysis(p: &StochasticMatrix) -> Result<ChainAnalysis> {
    p.require_ergodic()?;
    ChainAnalysis::compute(&p.square())
}

/// Evaluates `pi^T H D Sw D 1 - Tr(H D Sw D)` with `H` the hitting times of
/// `P^2` and `D = diag(pi)`.
pub fn theorem_value(sq: &ChainAnalysis, sw: &NoiseCovariance) -> Result<f64> {
    let n = sq.pi.len();
    sw.check_dim(n)?;
    let pi = &sq.pi;
    let h = &sq.hitting;
    let b = DMatrix::from_fn(n, n, |i, j| pi[i] * sw_entry(sw, i, j) * pi[j]);
    // pi^T H B 1 = (H^T pi) . (B 1)
    let first = (h.tr_mul(pi)).dot(&b.column_sum());
    // Tr(H B) = sum_ij H_ij B_ji
    let second = h.component_mul(&b.transpose()).sum();
    let scale = first.abs() + second.abs();
    clamp_rounding(first - second, scale)
}

fn sw_entry(sw: &NoiseCovariance, i: usize, j: usize) -> f64 {
    match sw {
        NoiseCovariance::Scalar { sigma2, .. } => {
            if i == j {
                *sigma2
            } else {
                0.0
            }
        }
        NoiseCovariance::Diagonal(v) => {
            if i == j {
                v[i]
            } else {
                0.0
            }
        }
        NoiseCovariance::Full(m) => m[(i, j)],
    }
}

/// Weighted steady-state disagreement of a reversible chain from hitting
/// times of `P^2`, with the unweighted sandwich bounds filled in.
pub fn delta_ss_theorem(p: &StochasticMatrix, sw: &NoiseCovariance) -> Result<DisagreementReport> {
    sw.check_dim(p.n())?;
    p.require_reversible()?;
    let sq = squared_chain_analysis(p)?;
    let delta = theorem_value(&sq, sw)?;
    Ok(DisagreementReport::new(delta, &sq.pi, Method::Theorem1))
}

/// Uncorrelated-noise form `sum_i sum_j s_i pi_i^2 pi_j H_{P^2}(j -> i)`.
pub fn delta_ss_diag(p: &StochasticMatrix, variances: &[f64]) -> Result<f64> {
    let sw = NoiseCovariance::diagonal(variances.to_vec())?;
    sw.check_dim(p.n())?;
    p.require_reversible()?;
    let sq = squared_chain_analysis(p)?;
    Ok(diag_value(&sq, variances))
}

fn diag_value(sq: &ChainAnalysis, variances: &[f64]) -> f64 {
    let access = sq.hitting.tr_mul(&sq.pi);
    variances
        .iter()
        .enumerate()
        .map(|(i, s)| s * sq.pi[i] * sq.pi[i] * access[i])
        .sum()
}

/// `sigma^2 K(P^2) / n` for symmetric `P`.
pub fn delta_ss_kemeny(p: &StochasticMatrix, sigma2: f64) -> Result<f64> {
    p.require_symmetric()?;
    p.require_ergodic()?;
    Ok(sigma2 * kemeny_constant_combinatorial(&p.square())? / p.n() as f64)
}

/// `(sigma^2 / n) sum 1 / (1 - lambda^2)` over the non-principal spectrum of
/// a symmetric `P`.
pub fn delta_ss_spectral(p: &StochasticMatrix, sigma2: f64) -> Result<f64> {
    p.require_symmetric()?;
    p.require_ergodic()?;
    if p.n() == 1 {
        return Ok(0.0);
    }
    let total: f64 = nonprincipal_eigenvalues(p)?.iter().map(|l| 1.0 / (1.0 - l.re * l.re)).sum();
    Ok(sigma2 * total / p.n() as f64)
}

/// `(sigma^2 / n) sum_{i<j} R_{P^2}(i, j) / n^2` for symmetric `P`.
pub fn delta_ss_resistance(p: &StochasticMatrix, sigma2: f64) -> Result<f64> {
    p.require_symmetric()?;
    p.require_ergodic()?;
    let n = p.n();
    let r = effective_resistance(&p.square())?;
    let mut upper = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            upper += r[(i, j)];
        }
    }
    let nf = n as f64;
    Ok(sigma2 / nf * upper / (nf * nf))
}

/// `[min_i s_i pi_i * K(P^2), max_i s_i pi_i * max R_{P^2}]` around the
/// uncorrelated-noise disagreement.
pub fn delta_ss_bounds(p: &StochasticMatrix, variances: &[f64]) -> Result<(f64, f64)> {
    NoiseCovariance::diagonal(variances.to_vec())?.check_dim(p.n())?;
    p.require_reversible()?;
    let sq = squared_chain_analysis(p)?;
    Ok(bounds_value(&sq, variances))
}

fn bounds_value(sq: &ChainAnalysis, variances: &[f64]) -> (f64, f64) {
    let weighted: Vec<f64> = variances.iter().zip(sq.pi.iter()).map(|(s, p)| s * p).collect();
    let lo = weighted.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_r = sq.max_resistance().unwrap_or(0.0);
    (lo * sq.kemeny, hi * max_r)
}

/// Unweighted-disagreement sandwich around the hitting-time value.
pub fn delta_uni_bounds(p: &StochasticMatrix, sw: &NoiseCovariance) -> Result<(f64, f64)> {
    let report = delta_ss_theorem(p, sw)?;
    Ok((report.delta_uni_lower, report.delta_uni_upper))
}

/// Fixed point of the covariance recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateCovariance {
    pub sigma_ss: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Relative step size at which iteration stops.
    pub tol: f64,
    /// Iteration budget; `None` derives it from the spectral radius of `P - J`.
    pub max_iters: Option<usize>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tol: tolerance::ORACLE, max_iters: None }
    }
}

/// `ceil(200 / max(1e-6, -ln rho))`, at least 2 and capped at
/// [`ORACLE_MAX_ITERS_CAP`].
pub fn default_oracle_iterations(rho: f64) -> usize {
    let rate = (-rho.ln()).max(1e-6);
    ((200.0 / rate).ceil() as usize).clamp(2, ORACLE_MAX_ITERS_CAP)
}

/// The projector `J = 1 pi^T`.
pub fn j_matrix(p: &StochasticMatrix) -> Result<DMatrix<f64>> {
    let pi = p.stationary_distribution()?;
    let n = p.n();
    Ok(DMatrix::from_fn(n, n, |_, j| pi[j]))
}

/// Ground-truth disagreement by iterating the covariance recursion from
/// `S(0) = 0`. Works for any irreducible chain, reversible or not; a periodic
/// chain ends in [`Error::NoConvergence`].
pub fn delta_oracle(
    p: &StochasticMatrix,
    sw: &NoiseCovariance,
    opts: OracleOptions,
) -> Result<(SteadyStateCovariance, DisagreementReport)> {
    let n = p.n();
    delta_oracle_from(p, sw, DMatrix::zeros(n, n), opts)
}

/// As [`delta_oracle`] but from an arbitrary initial error covariance.
pub fn delta_oracle_from(
    p: &StochasticMatrix,
    sw: &NoiseCovariance,
    initial: DMatrix<f64>,
    opts: OracleOptions,
) -> Result<(SteadyStateCovariance, DisagreementReport)> {
    let n = p.n();
    sw.check_dim(n)?;
    if initial.nrows() != n || initial.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: initial.nrows() });
    }
    let pi = p.stationary_distribution()?;
    let j = j_matrix(p)?;
    let a = p.entries() - &j;
    let at = a.transpose();
    let proj = DMatrix::identity(n, n) - &j;
    let forcing = &proj * sw.matrix() * proj.transpose();
    let max_iters = match opts.max_iters {
        Some(m) => m,
        None => default_oracle_iterations(deviation_spectral_radius(p).unwrap_or(1.0)),
    };

    let mut sigma = initial;
    let mut traces = Vec::new();
    for iter in 1..=max_iters {
        let next = &a * &sigma * &at + &forcing;
        let step = (&next - &sigma).amax();
        let converged = step <= opts.tol * (1.0 + sigma.amax());
        sigma = next;
        traces.push(sigma.trace());
        if converged {
            let delta = (0..n).map(|i| sigma[(i, i)] * pi[i]).sum::<f64>();
            let uni = sigma.trace() / n as f64;
            let mut report = DisagreementReport::new(delta, &pi, Method::Oracle);
            report.delta_uni_exact = Some(uni);
            report.diagnostics = Diagnostics { iterations: Some(iter), residual: Some(step) };
            let ss = SteadyStateCovariance { sigma_ss: sigma, converged: true, iterations: iter };
            return Ok((ss, report));
        }
    }
    let last_trace = traces.last().copied().unwrap_or(0.0);
    let half = traces.get(traces.len() / 2).copied().unwrap_or(0.0);
    Err(Error::NoConvergence { iterations: max_iters, last_trace, growing: last_trace > half })
}

/// `S^ = -H D Sw D + 1 pi^T H D Sw D`, with `H` the hitting times of `P^2`.
pub fn sigma_hat(p: &StochasticMatrix, sw: &NoiseCovariance) -> Result<DMatrix<f64>> {
    sw.check_dim(p.n())?;
    p.require_reversible()?;
    let sq = squared_chain_analysis(p)?;
    let n = p.n();
    let pi = &sq.pi;
    let b = DMatrix::from_fn(n, n, |i, j| pi[i] * sw_entry(sw, i, j) * pi[j]);
    let hb = &sq.hitting * b;
    let row = hb.tr_mul(pi);
    Ok(DMatrix::from_fn(n, n, |i, j| row[j] - hb[(i, j)]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JPropertyReport {
    pub checks: Vec<IdentityCheck>,
}

impl JPropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Checks the algebraic identities of `J = 1 pi^T` against `P`, plus
/// `rho(P - J) < 1`. Every residual is an absolute max-entry error.
pub fn check_j_properties(p: &StochasticMatrix, tol: f64) -> Result<JPropertyReport> {
    let n = p.n();
    let j = j_matrix(p)?;
    let pm = p.entries();
    let id = DMatrix::<f64>::identity(n, n);
    let ones = DVector::from_element(n, 1.0);
    let mut checks = Vec::new();
    let mut push = |name: String, residual: f64| {
        checks.push(IdentityCheck { name, residual, passed: residual <= tol });
    };
    push("J1 = 1".into(), (&j * &ones - &ones).amax());
    push("JP = J".into(), (&j * pm - &j).amax());
    push("PJ = J".into(), (pm * &j - &j).amax());
    push("J^2 = J".into(), (&j * &j - &j).amax());
    let ij = &id - &j;
    push("(I-J)^2 = I-J".into(), (&ij * &ij - &ij).amax());
    let powers: Vec<DMatrix<f64>> = std::iter::successors(Some(id.clone()), |m| Some(m * pm)).take(10).collect();
    for l in 1..=3 {
        let base = &powers[l] - &j;
        let mut lhs = base.clone();
        for k in 1..=3 {
            if k > 1 {
                lhs = &lhs * &base;
            }
            push(format!("(P^{l}-J)^{k} = P^{}-J", l * k), (&lhs - (&powers[l * k] - &j)).amax());
        }
    }
    let rho = deviation_spectral_radius(p)?;
    checks.push(IdentityCheck { name: "rho(P-J) < 1".into(), residual: rho, passed: rho < 1.0 });
    Ok(JPropertyReport { checks })
}

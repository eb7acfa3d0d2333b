//! Monte Carlo simulation of `x(t+1) = P x(t) + w(t)` and empirical
//! steady-state disagreement.
//!
//! Trial `k` draws from its own ChaCha8 stream (`seed`, stream `k`), so the
//! result does not depend on how rayon schedules trials. Across-trial
//! aggregation runs in trial order with pairwise summation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disagreement::{j_matrix, NoiseCovariance};
use crate::error::{Error, Result};
use crate::markov::{deviation_spectral_radius, StochasticMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BurnIn {
    Auto,
    Steps(usize),
}

/// Distribution of the white noise that is colored by the covariance factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Independent +-1 signs.
    Rademacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: usize,
    pub trials: usize,
    pub burn_in: BurnIn,
    pub seed: u64,
    pub record_every: usize,
    #[serde(default)]
    pub noise: NoiseDistribution,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 5000,
            trials: 200,
            burn_in: BurnIn::Auto,
            seed: 0,
            record_every: 1,
            noise: NoiseDistribution::Gaussian,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParam("trials must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParam("record_every must be at least 1".into()));
        }
        if let BurnIn::Steps(b) = self.burn_in {
            if b >= self.horizon {
                return Err(Error::InvalidParam(format!(
                    "horizon {} must exceed burn-in {b}",
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    /// Burn-in in steps, resolving `Auto` against `P`.
    pub fn resolve_burn_in(&self, p: &StochasticMatrix) -> Result<usize> {
        let b = match self.burn_in {
            BurnIn::Steps(b) => b,
            BurnIn::Auto => auto_burn_in(p)?,
        };
        if b >= self.horizon {
            return Err(Error::InvalidParam(format!(
                "horizon {} must exceed burn-in {b}",
                self.horizon
            )));
        }
        Ok(b)
    }
}

/// `ceil(20 / (1 - rho^2))` with `rho` the spectral radius of `P - J`.
pub fn auto_burn_in(p: &StochasticMatrix) -> Result<usize> {
    p.require_ergodic()?;
    let rho = deviation_spectral_radius(p)?;
    if rho >= 1.0 {
        return Err(Error::Numerical(format!("spectral radius of P - J is {rho}")));
    }
    Ok((20.0 / (1.0 - rho * rho)).ceil() as usize)
}

/// Across-trial averages at the recorded steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub times: Vec<usize>,
    pub delta_hat: Vec<f64>,
    pub delta_uni_hat: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Tail-averaged disagreement over `t in (burn_in, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateEstimate {
    pub delta_ss: f64,
    pub stderr: f64,
    pub delta_uni: f64,
    pub delta_uni_stderr: f64,
    pub burn_in: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub trace: SimTrace,
    pub estimate: SteadyStateEstimate,
}

/// Nonzero pattern of a row-stochastic matrix; most graph walks are sparse.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub(crate) fn new(m: &DMatrix<f64>) -> Self {
        let mut start = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            start.push(cols.len());
        }
        Self { start, cols, vals }
    }

    /// `out = M x` for `x` stored row-major with `d` columns.
    pub(crate) fn apply(&self, x: &[f64], d: usize, out: &mut [f64]) {
        for i in 0..self.start.len() - 1 {
            let row = &mut out[i * d..(i + 1) * d];
            row.fill(0.0);
            for k in self.start[i]..self.start[i + 1] {
                let (j, v) = (self.cols[k], self.vals[k]);
                for c in 0..d {
                    row[c] += v * x[j * d + c];
                }
            }
        }
    }
}

/// Colors unit-variance white noise into `N(0, Sw)` (or the Rademacher analogue).
#[derive(Debug, Clone)]
pub(crate) enum NoiseSampler {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl NoiseSampler {
    pub(crate) fn new(sw: &NoiseCovariance) -> Self {
        if sw.is_diagonal() {
            Self::Diagonal(sw.variances().iter().map(|v| v.sqrt()).collect())
        } else {
            Self::Dense(sw.factor())
        }
    }

    pub(crate) fn std_devs(values: &[f64]) -> Self {
        Self::Diagonal(values.to_vec())
    }

    /// Adds one noise draw per column block to `out` (row-major, `d` columns).
    pub(crate) fn add_to(
        &self,
        rng: &mut ChaCha8Rng,
        dist: NoiseDistribution,
        d: usize,
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        match self {
            Self::Diagonal(sd) => {
                for (i, s) in sd.iter().enumerate() {
                    for c in 0..d {
                        let xi = draw(rng, dist);
                        out[i * d + c] += s * xi;
                    }
                }
            }
            Self::Dense(l) => {
                let n = l.nrows();
                for c in 0..d {
                    for xi in scratch[..n].iter_mut() {
                        *xi = draw(rng, dist);
                    }
                    for i in 0..n {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += l[(i, j)] * scratch[j];
                        }
                        out[i * d + c] += acc;
                    }
                }
            }
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, dist: NoiseDistribution) -> f64 {
    match dist {
        NoiseDistribution::Gaussian => rng.sample(StandardNormal),
        NoiseDistribution::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// The independent stream for one trial.
pub(crate) fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn recorded_times(horizon: usize, every: usize) -> Vec<usize> {
    (0..=horizon).step_by(every).collect()
}

/// Per-trial output: recorded samples and tail means.
pub(crate) struct TrialRecord {
    pub weighted: Vec<f64>,
    pub uniform: Vec<f64>,
    pub tail_weighted: f64,
    pub tail_uniform: f64,
}

/// Stacks per-trial records into a trace and a tail estimate.
pub(crate) fn aggregate(
    times: Vec<usize>,
    records: &[TrialRecord],
    burn_in: usize,
) -> SimulationRun {
    let k = times.len();
    let mut delta_hat = Vec::with_capacity(k);
    let mut delta_uni_hat = Vec::with_capacity(k);
    let mut stderr = Vec::with_capacity(k);
    for idx in 0..k {
        let w: Vec<f64> = records.iter().map(|r| r.weighted[idx]).collect();
        let u: Vec<f64> = records.iter().map(|r| r.uniform[idx]).collect();
        let (mw, sw) = mean_stderr(&w);
        delta_hat.push(mw);
        stderr.push(sw);
        delta_uni_hat.push(pairwise_sum(&u) / u.len() as f64);
    }
    let tw: Vec<f64> = records.iter().map(|r| r.tail_weighted).collect();
    let tu: Vec<f64> = records.iter().map(|r| r.tail_uniform).collect();
    let (delta_ss, se) = mean_stderr(&tw);
    let (delta_uni, se_uni) = mean_stderr(&tu);
    SimulationRun {
        trace: SimTrace { times, delta_hat, delta_uni_hat, stderr },
        estimate: SteadyStateEstimate {
            delta_ss,
            stderr: se,
            delta_uni,
            delta_uni_stderr: se_uni,
            burn_in,
            trials: records.len(),
        },
    }
}

/// Simulates the recursion from `x0` and returns the trace together with the
/// tail estimate over `(burn_in, horizon]`.
pub fn run_consensus(
    p: &StochasticMatrix,
    sw: &NoiseCovariance,
    x0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<SimulationRun> {
    let n = p.n();
    if sw.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sw.n() });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    cfg.validate()?;
    p.require_ergodic()?;
    let burn_in = cfg.resolve_burn_in(p)?;
    let pi: Vec<f64> = p.stationary_distribution()?.iter().copied().collect();
    let rows = SparseRows::new(p.entries());
    let sampler = NoiseSampler::new(sw);
    let times = recorded_times(cfg.horizon, cfg.record_every);
    let tail_len = (cfg.horizon - burn_in) as f64;

    let records: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let mut x: Vec<f64> = x0.iter().copied().collect();
            let mut next = vec![0.0; n];
            let mut scratch = vec![0.0; n];
            let mut rec = TrialRecord {
                weighted: Vec::with_capacity(times.len()),
                uniform: Vec::with_capacity(times.len()),
                tail_weighted: 0.0,
                tail_uniform: 0.0,
            };
            let (mut tail_w, mut tail_u) = (Vec::new(), Vec::new());
            for t in 0..=cfg.horizon {
                if t > 0 {
                    rows.apply(&x, 1, &mut next);
                    sampler.add_to(&mut rng, cfg.noise, 1, &mut scratch, &mut next);
                    std::mem::swap(&mut x, &mut next);
                }
                let (w, u) = errors(&x, &pi);
                if t % cfg.record_every == 0 {
                    rec.weighted.push(w);
                    rec.uniform.push(u);
                }
                if t > burn_in {
                    tail_w.push(w);
                    tail_u.push(u);
                }
            }
            rec.tail_weighted = pairwise_sum(&tail_w) / tail_len;
            rec.tail_uniform = pairwise_sum(&tail_u) / tail_len;
            rec
        })
        .collect();
    Ok(aggregate(times, &records, burn_in))
}

/// `(sum pi_i e_i^2, sum e_i^2 / n)` with `e = x - (pi^T x) 1`.
fn errors(x: &[f64], pi: &[f64]) -> (f64, f64) {
    let avg: f64 = x.iter().zip(pi).map(|(a, b)| a * b).sum();
    let (mut w, mut u) = (0.0, 0.0);
    for (xi, p) in x.iter().zip(pi) {
        let e = (xi - avg) * (xi - avg);
        w += p * e;
        u += e;
    }
    (w, u / x.len() as f64)
}

pub fn simulate_consensus(
    p: &StochasticMatrix,
    sw: &NoiseCovariance,
    x0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<SimTrace> {
    Ok(run_consensus(p, sw, x0, cfg)?.trace)
}

/// Tail estimate of the weighted disagreement, starting from `x(0) = 0`.
pub fn estimate_delta_ss(
    p: &StochasticMatrix,
    sw: &NoiseCovariance,
    cfg: &SimConfig,
) -> Result<SteadyStateEstimate> {
    Ok(run_consensus(p, sw, &DVector::zeros(p.n()), cfg)?.estimate)
}

/// `Tr S(t)` for `t = 0..=steps` under the exact covariance recursion from
/// `S(0) = 0`. Periodic chains are allowed; that is what this is for.
pub fn divergence_probe(p: &StochasticMatrix, sw: &NoiseCovariance, steps: usize) -> Result<Vec<f64>> {
    let n = p.n();
    if sw.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sw.n() });
    }
    let j = j_matrix(p)?;
    let a = p.entries() - &j;
    let at = a.transpose();
    let proj = DMatrix::identity(n, n) - &j;
    let forcing = &proj * sw.matrix() * proj.transpose();
    let mut sigma = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    for _ in 0..steps {
        sigma = &a * &sigma * &at + &forcing;
        out.push(sigma.trace());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disagreement::delta_ss_theorem;
    use crate::graphs::{build_graph, GraphFamily};
    use crate::markov::{lazy_walk_matrix, simple_walk_matrix};

    fn lazy(f: GraphFamily, n: usize) -> StochasticMatrix {
        lazy_walk_matrix(&build_graph(&f, n, None).unwrap()).unwrap()
    }

    fn cfg(horizon: usize, trials: usize) -> SimConfig {
        SimConfig { horizon, trials, burn_in: BurnIn::Auto, seed: 11, record_every: 1, noise: NoiseDistribution::Gaussian }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(10, 0);
        assert!(c.validate().is_err());
        c.trials = 1;
        c.burn_in = BurnIn::Steps(10);
        assert!(c.validate().is_err());
        c.burn_in = BurnIn::Steps(9);
        c.record_every = 0;
        assert!(c.validate().is_err());
        // auto burn-in of a slow chain exceeds a short horizon
        let p = lazy(GraphFamily::Line, 30);
        assert!(matches!(cfg(10, 1).resolve_burn_in(&p), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn auto_burn_in_matches_rule() {
        let p = lazy(GraphFamily::Ring, 8);
        let rho = deviation_spectral_radius(&p).unwrap();
        assert_eq!(auto_burn_in(&p).unwrap(), (20.0 / (1.0 - rho * rho)).ceil() as usize);
        let ring4 = simple_walk_matrix(&build_graph(&GraphFamily::Ring, 4, None).unwrap()).unwrap();
        assert!(matches!(auto_burn_in(&ring4), Err(Error::Periodic { .. })));
    }

    #[test]
    fn consensus_is_invariant_without_noise() {
        let p = lazy(GraphFamily::Star, 6);
        let sw = NoiseCovariance::scalar(6, 0.0).unwrap();
        let trace = simulate_consensus(&p, &sw, &DVector::from_element(6, 1.0), &cfg(200, 3)).unwrap();
        assert!(trace.delta_hat.iter().chain(&trace.delta_uni_hat).all(|&d| d.abs() < 1e-28));
    }

    #[test]
    fn noiseless_run_converges() {
        let p = lazy(GraphFamily::Ring, 6);
        let sw = NoiseCovariance::scalar(6, 0.0).unwrap();
        let x0 = DVector::from_vec(vec![3.0, -1.0, 0.5, 2.0, -4.0, 1.0]);
        let trace = simulate_consensus(&p, &sw, &x0, &cfg(400, 1)).unwrap();
        assert!(trace.delta_hat[0] > 1.0);
        assert!(*trace.delta_hat.last().unwrap() < 1e-20);
        assert!(trace.delta_hat[200] < trace.delta_hat[100]);
    }

    #[test]
    fn two_node_lazy_tail_average() {
        let p = lazy(GraphFamily::Line, 2);
        let sw = NoiseCovariance::scalar(2, 1.0).unwrap();
        let est = estimate_delta_ss(&p, &sw, &cfg(4000, 50)).unwrap();
        assert!((est.delta_ss - 0.5).abs() <= 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn matches_theorem_on_ring() {
        let p = lazy(GraphFamily::Ring, 8);
        let sw = NoiseCovariance::scalar(8, 1.0).unwrap();
        let exact = delta_ss_theorem(&p, &sw).unwrap().delta_ss;
        let est = estimate_delta_ss(&p, &sw, &cfg(3000, 100)).unwrap();
        assert!((est.delta_ss - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
    }

    #[test]
    fn common_noise_is_invisible() {
        let p = lazy(GraphFamily::Complete, 5);
        let sw = NoiseCovariance::full(DMatrix::from_element(5, 5, 2.0)).unwrap();
        let est = estimate_delta_ss(&p, &sw, &cfg(500, 20)).unwrap();
        assert!(est.delta_ss <= 3.0 * est.stderr + 1e-20, "{est:?}");
    }

    #[test]
    fn reproducible_per_seed() {
        let p = lazy(GraphFamily::Star, 5);
        let sw = NoiseCovariance::diagonal(vec![1.0, 0.0, 0.5, 0.0, 2.0]).unwrap();
        let c = SimConfig { record_every: 7, ..cfg(300, 9) };
        let a = simulate_consensus(&p, &sw, &DVector::zeros(5), &c).unwrap();
        let b = simulate_consensus(&p, &sw, &DVector::zeros(5), &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times, (0..=300).step_by(7).collect::<Vec<_>>());
        let other = simulate_consensus(&p, &sw, &DVector::zeros(5), &SimConfig { seed: 12, ..c }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn doubling_trials_shrinks_stderr() {
        let p = lazy(GraphFamily::Ring, 6);
        let sw = NoiseCovariance::scalar(6, 1.0).unwrap();
        let small = estimate_delta_ss(&p, &sw, &cfg(600, 400)).unwrap();
        let large = estimate_delta_ss(&p, &sw, &cfg(600, 800)).unwrap();
        let ratio = small.stderr / large.stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.25, "{ratio}");
    }

    #[test]
    fn dimension_checks() {
        let p = lazy(GraphFamily::Ring, 5);
        let sw = NoiseCovariance::scalar(4, 1.0).unwrap();
        assert!(matches!(estimate_delta_ss(&p, &sw, &cfg(100, 1)), Err(Error::DimensionMismatch { .. })));
        let sw = NoiseCovariance::scalar(5, 1.0).unwrap();
        assert!(simulate_consensus(&p, &sw, &DVector::zeros(3), &cfg(100, 1)).is_err());
    }

    #[test]
    fn divergence_probe_examples() {
        let p = lazy(GraphFamily::Ring, 6);
        let sw = NoiseCovariance::scalar(6, 1.0).unwrap();
        let tr = divergence_probe(&p, &sw, 400).unwrap();
        assert!((tr[400] - tr[399]).abs() < 1e-10);
        let zero = divergence_probe(&p, &NoiseCovariance::scalar(6, 0.0).unwrap(), 50).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let ring4 = simple_walk_matrix(&build_graph(&GraphFamily::Ring, 4, None).unwrap()).unwrap();
        let tr = divergence_probe(&ring4, &NoiseCovariance::scalar(4, 1.0).unwrap(), 200).unwrap();
        for t in 10..200 {
            assert!(tr[t + 1] > tr[t]);
        }
        assert!(tr[200] >= 0.5 * 200.0 * 0.5);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>());
        let (m, s) = mean_stderr(&[2.0]);
        assert_eq!((m, s), (2.0, 0.0));
    }
}

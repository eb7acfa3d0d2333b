//! Formation control from noisy relative-position measurements:
//!
//! `p_i(t+1) = p_i(t) + sum_j f_ij (p_j(t) - p_i(t) - r_ij) + n_i(t)`.
//!
//! With symmetric weights the long-run per-node squared distance to the
//! nearest centroid-matched formation is `d lambda^2 K((P^form)^2) / n`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disagreement::{delta_ss_theorem, NoiseCovariance};
use crate::error::{Error, Result};
use crate::graphs::{build_graph, Graph, GraphFamily};
use crate::markov::{kemeny_constant_combinatorial, StochasticMatrix};
use crate::simulate::{
    aggregate, recorded_times, trial_rng, NoiseSampler, SimConfig, SimTrace, SparseRows,
    TrialRecord,
};
use crate::tolerance;

/// Per-node noise variance `lambda_i^2` (each coordinate, independent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormationNoise {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl FormationNoise {
    pub fn variances(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Uniform(l) => vec![*l; n],
            Self::PerNode(v) => v.clone(),
        }
    }

    /// The common variance, if every node has the same one.
    pub fn uniform(&self) -> Option<f64> {
        match self {
            Self::Uniform(l) => Some(*l),
            Self::PerNode(v) => {
                let first = *v.first()?;
                v.iter().all(|&x| x == first).then_some(first)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// `f_ij = 1 / (2 max degree)` on every edge.
    Default,
    Explicit(Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    graph: Graph,
    dim: usize,
    /// `r_ij` for each edge `(i, j)` of `graph.edges()`, `i < j`.
    offsets: Vec<Vec<f64>>,
    /// `f_ij`, aligned with `graph.edges()`.
    weights: Vec<f64>,
    noise: FormationNoise,
}

/// `epsilon = 1 / (2 max degree)` on every edge of `g`.
pub fn default_weights(g: &Graph) -> Vec<f64> {
    let eps = 1.0 / (2.0 * g.max_degree().max(1) as f64);
    vec![eps; g.edge_count()]
}

fn edge_index(g: &Graph, i: usize, j: usize) -> Option<usize> {
    let key = (i.min(j), i.max(j));
    g.edges().binary_search(&key).ok()
}

impl FormationSpec {
    /// Builds a spec from offsets given on either orientation of each edge;
    /// `r_ji = -r_ij` fills in the other. The graph is the set of listed edges.
    pub fn from_offsets(
        n: usize,
        dim: usize,
        offsets: &[(usize, usize, Vec<f64>)],
        weights: WeightSpec,
        noise: FormationNoise,
    ) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = offsets
            .iter()
            .map(|(i, j, _)| (*i.min(j), *i.max(j)))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let graph = Graph::from_edges(n, &pairs, "custom")?;
        let mut stored: Vec<Option<Vec<f64>>> = vec![None; graph.edge_count()];
        for (i, j, r) in offsets {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            let k = edge_index(&graph, *i, *j).expect("edge present");
            let oriented: Vec<f64> = if i < j { r.clone() } else { r.iter().map(|x| -x).collect() };
            match &stored[k] {
                Some(prev) => {
                    let gap = prev.iter().zip(&oriented).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if gap > tolerance::FORMATION_CONSISTENCY {
                        return Err(Error::InconsistentFormation { residual: gap });
                    }
                }
                None => stored[k] = Some(oriented),
            }
        }
        let offsets = stored.into_iter().map(|r| r.expect("every edge listed")).collect();
        Self::assemble(graph, dim, offsets, weights, noise)
    }

    /// Offsets `r_ij = p_j - p_i` read off a configuration in formation.
    pub fn from_positions(
        graph: Graph,
        positions: &[Vec<f64>],
        weights: WeightSpec,
        noise: FormationNoise,
    ) -> Result<Self> {
        if positions.len() != graph.n() {
            return Err(Error::DimensionMismatch { expected: graph.n(), got: positions.len() });
        }
        let dim = positions.first().map_or(1, Vec::len);
        if let Some(bad) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        let offsets = graph
            .edges()
            .iter()
            .map(|&(i, j)| positions[j].iter().zip(&positions[i]).map(|(a, b)| a - b).collect())
            .collect();
        Self::assemble(graph, dim, offsets, weights, noise)
    }

    /// A built-in family laid out by [`layout_positions`], default weights.
    pub fn for_family(family: &GraphFamily, n: usize, dim: usize, noise: FormationNoise, seed: Option<u64>) -> Result<Self> {
        let graph = build_graph(family, n, seed)?;
        let positions = layout_positions(&graph, dim);
        Self::from_positions(graph, &positions, WeightSpec::Default, noise)
    }

    pub fn star(n: usize, dim: usize, lambda2: f64) -> Result<Self> {
        Self::for_family(&GraphFamily::Star, n, dim, FormationNoise::Uniform(lambda2), None)
    }

    pub fn tree(n: usize, dim: usize, lambda2: f64) -> Result<Self> {
        Self::for_family(&GraphFamily::CompleteBinaryTree, n, dim, FormationNoise::Uniform(lambda2), None)
    }

    /// Four nodes on a ring with offsets `[1,1], [-1,1], [-1,-1], [1,-1]`
    /// taken cyclically (`0->1->2->3->0`) and all weights `1/9`.
    pub fn ring_demo(lambda2: f64) -> Result<Self> {
        let offsets = vec![
            (0, 1, vec![1.0, 1.0]),
            (1, 2, vec![-1.0, 1.0]),
            (2, 3, vec![-1.0, -1.0]),
            (3, 0, vec![1.0, -1.0]),
        ];
        let weights = offsets.iter().map(|(i, j, _)| (*i, *j, 1.0 / 9.0)).collect();
        Self::from_offsets(4, 2, &offsets, WeightSpec::Explicit(weights), FormationNoise::Uniform(lambda2))
    }

    fn assemble(
        graph: Graph,
        dim: usize,
        offsets: Vec<Vec<f64>>,
        weights: WeightSpec,
        noise: FormationNoise,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("dimension must be positive".into()));
        }
        if !graph.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        let weights = match weights {
            WeightSpec::Default => default_weights(&graph),
            WeightSpec::Explicit(list) => {
                let mut w: Vec<Option<f64>> = vec![None; graph.edge_count()];
                for (i, j, f) in list {
                    let k = edge_index(&graph, i, j)
                        .ok_or_else(|| Error::InvalidParam(format!("weight on non-edge ({i}, {j})")))?;
                    match w[k] {
                        Some(prev) if prev != f => return Err(Error::AsymmetricWeights { i, j }),
                        _ => w[k] = Some(f),
                    }
                }
                w.into_iter()
                    .enumerate()
                    .map(|(k, f)| {
                        f.ok_or_else(|| {
                            let (i, j) = graph.edges()[k];
                            Error::InvalidParam(format!("missing weight on edge ({i}, {j})"))
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        let n = graph.n();
        let lambdas = noise.variances(n);
        if lambdas.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: lambdas.len() });
        }
        if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidParam(format!("noise variance {l}")));
        }
        let spec = Self { graph, dim, offsets, weights, noise };
        spec.check_weights()?;
        Ok(spec)
    }

    fn check_weights(&self) -> Result<()> {
        let mut sums = vec![0.0; self.n()];
        for (&(i, j), &f) in self.graph.edges().iter().zip(&self.weights) {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidParam(format!("weight {f} on edge ({i}, {j}) must be positive")));
            }
            sums[i] += f;
            sums[j] += f;
        }
        match sums.iter().position(|&s| s >= 1.0) {
            Some(node) => Err(Error::StepSizeViolation { node, sum: sums[node] }),
            None => Ok(()),
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noise(&self) -> &FormationNoise {
        &self.noise
    }

    pub fn with_noise(mut self, noise: FormationNoise) -> Result<Self> {
        let lambdas = noise.variances(self.n());
        if lambdas.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: lambdas.len() });
        }
        self.noise = noise;
        Ok(self)
    }

    /// `r_ij` for any ordered pair of neighbours.
    pub fn offset(&self, i: usize, j: usize) -> Option<Vec<f64>> {
        let k = edge_index(&self.graph, i, j)?;
        let r = &self.offsets[k];
        Some(if i < j { r.clone() } else { r.iter().map(|x| -x).collect() })
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        edge_index(&self.graph, i, j).map(|k| self.weights[k])
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `{n, dim, edges, weights, lambda2}`; edges are `[i, j, [r..]]` or
    /// `{"i", "j", "r"}`, weights are `"default"` or a list of `[i, j, f]` /
    /// `{"i", "j", "f"}`, and `lambda2` is a number or a per-node list.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text)?;
        let offsets: Vec<(usize, usize, Vec<f64>)> = raw.edges.into_iter().map(RawEdge::into_tuple).collect();
        let weights = match raw.weights {
            RawWeights::Keyword(k) if k == "default" => WeightSpec::Default,
            RawWeights::Keyword(k) => return Err(Error::Parse(format!("unknown weights keyword {k:?}"))),
            RawWeights::List(list) => WeightSpec::Explicit(list.into_iter().map(RawWeight::into_tuple).collect()),
        };
        Self::from_offsets(raw.n, raw.dim, &offsets, weights, raw.lambda2)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<_> = self
            .graph
            .edges()
            .iter()
            .zip(&self.offsets)
            .map(|(&(i, j), r)| serde_json::json!({ "i": i, "j": j, "r": r }))
            .collect();
        let weights: Vec<_> = self
            .graph
            .edges()
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), f)| serde_json::json!({ "i": i, "j": j, "f": f }))
            .collect();
        serde_json::json!({
            "n": self.n(),
            "dim": self.dim,
            "edges": edges,
            "weights": weights,
            "lambda2": self.noise,
        })
    }
}

#[derive(Deserialize)]
struct RawSpec {
    n: usize,
    dim: usize,
    edges: Vec<RawEdge>,
    #[serde(default = "default_keyword")]
    weights: RawWeights,
    lambda2: FormationNoise,
}

fn default_keyword() -> RawWeights {
    RawWeights::Keyword("default".into())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEdge {
    Object { i: usize, j: usize, r: Vec<f64> },
    Tuple(usize, usize, Vec<f64>),
}

impl RawEdge {
    fn into_tuple(self) -> (usize, usize, Vec<f64>) {
        match self {
            Self::Object { i, j, r } | Self::Tuple(i, j, r) => (i, j, r),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawWeights {
    Keyword(String),
    List(Vec<RawWeight>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawWeight {
    Object { i: usize, j: usize, f: f64 },
    Tuple(usize, usize, f64),
}

impl RawWeight {
    fn into_tuple(self) -> (usize, usize, f64) {
        match self {
            Self::Object { i, j, f } | Self::Tuple(i, j, f) => (i, j, f),
        }
    }
}

/// A drawing of `g`: BFS levels from node 0 stacked downward, nodes in a
/// level spread one unit apart along the first axis. In one dimension nodes
/// sit at their BFS rank.
pub fn layout_positions(g: &Graph, dim: usize) -> Vec<Vec<f64>> {
    let n = g.n();
    let mut level = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    if n > 0 {
        level[0] = 0;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &v in g.neighbors(u) {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    order.push(v);
                }
            }
        }
    }
    let mut pos = vec![vec![0.0; dim]; n];
    if dim == 1 {
        for (rank, &u) in order.iter().enumerate() {
            pos[u][0] = rank as f64;
        }
        return pos;
    }
    let depth = level.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
    for l in 0..=depth {
        let members: Vec<usize> = order.iter().copied().filter(|&u| level[u] == l).collect();
        let mid = (members.len() as f64 - 1.0) / 2.0;
        for (k, &u) in members.iter().enumerate() {
            pos[u][0] = k as f64 - mid;
            pos[u][1] = -(l as f64);
        }
    }
    pos
}

/// Least-squares positions for the offsets, anchored at zero centroid, and
/// the worst edge residual `max |p_j - p_i - r_ij|`.
pub fn canonical_positions(spec: &FormationSpec) -> Result<(DMatrix<f64>, f64)> {
    let n = spec.n();
    let d = spec.dim;
    let mut a = DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut b = DMatrix::zeros(n, d);
    for (&(i, j), r) in spec.graph.edges().iter().zip(&spec.offsets) {
        a[(i, i)] += 1.0;
        a[(j, j)] += 1.0;
        a[(i, j)] -= 1.0;
        a[(j, i)] -= 1.0;
        for c in 0..d {
            b[(i, c)] -= r[c];
            b[(j, c)] += r[c];
        }
    }
    let p = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("formation least squares".into()))?;
    let mut residual: f64 = 0.0;
    for (&(i, j), r) in spec.graph.edges().iter().zip(&spec.offsets) {
        for c in 0..d {
            residual = residual.max((p[(j, c)] - p[(i, c)] - r[c]).abs());
        }
    }
    Ok((p, residual))
}

/// Canonical positions, or [`Error::InconsistentFormation`] when the best fit
/// misses some offset by more than `1e-9 * max(1, max |r|)`.
pub fn consistent_positions(spec: &FormationSpec) -> Result<DMatrix<f64>> {
    let (p, residual) = canonical_positions(spec)?;
    let scale = spec.offsets.iter().flatten().fold(1.0_f64, |m, x| m.max(x.abs()));
    if residual > tolerance::FORMATION_CONSISTENCY * scale {
        return Err(Error::InconsistentFormation { residual });
    }
    Ok(p)
}

pub fn is_consistent(spec: &FormationSpec) -> bool {
    consistent_positions(spec).is_ok()
}

/// `P^form`: off-diagonal `f_ij`, diagonal `1 - sum_j f_ij`.
pub fn formation_matrix(spec: &FormationSpec) -> Result<StochasticMatrix> {
    spec.check_weights()?;
    let n = spec.n();
    let mut m = DMatrix::identity(n, n);
    for (&(i, j), &f) in spec.graph.edges().iter().zip(&spec.weights) {
        m[(i, j)] = f;
        m[(j, i)] = f;
        m[(i, i)] -= f;
        m[(j, j)] -= f;
    }
    StochasticMatrix::new(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationReport {
    pub form_exact: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form_simulated: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form_stderr: Option<f64>,
    pub kemeny_p2: f64,
    pub n: usize,
    pub dim: usize,
}

/// `d lambda^2 K((P^form)^2) / n`; needs a common noise variance.
pub fn form_exact(spec: &FormationSpec) -> Result<FormationReport> {
    let lambda2 = spec
        .noise
        .uniform()
        .ok_or_else(|| Error::InvalidParam("closed-form Form needs equal noise variances".into()))?;
    consistent_positions(spec)?;
    let p = formation_matrix(spec)?;
    let n = spec.n();
    let kemeny_p2 = if n == 1 { 0.0 } else { kemeny_constant_combinatorial(&p.square())? };
    Ok(FormationReport {
        form_exact: spec.dim as f64 * lambda2 * kemeny_p2 / n as f64,
        form_simulated: None,
        form_stderr: None,
        kemeny_p2,
        n,
        dim: spec.dim,
    })
}

/// Covariance of the centred noise, `(n Diag(l) - Q + (sum l / n) 1 1^T) / n`
/// with `Q_ij = l_i + l_j`.
pub fn centred_noise_covariance(lambda2: &[f64]) -> DMatrix<f64> {
    let n = lambda2.len();
    let nf = n as f64;
    let mean = lambda2.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { nf * lambda2[i] } else { 0.0 };
        (diag - lambda2[i] - lambda2[j] + mean) / nf
    })
}

/// `d * delta_ss(P^form, Sigma^form)` through the hitting-time formula;
/// accepts per-node variances.
pub fn form_via_delta(spec: &FormationSpec) -> Result<f64> {
    consistent_positions(spec)?;
    let p = formation_matrix(spec)?;
    let n = spec.n();
    if n == 1 {
        return Ok(0.0);
    }
    let cov = centred_noise_covariance(&spec.noise.variances(n));
    let sw = NoiseCovariance::full(cov)?;
    Ok(spec.dim as f64 * delta_ss_theorem(&p, &sw)?.delta_ss)
}

/// `(1/n) sum |p_i - p^_i|^2` with `p^` the formation translated onto the
/// centroid of `positions` (an `n x d` matrix).
pub fn form_metric(positions: &DMatrix<f64>, spec: &FormationSpec) -> Result<f64> {
    let canon = consistent_positions(spec)?;
    if positions.nrows() != spec.n() || positions.ncols() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.n() * spec.dim, got: positions.len() });
    }
    let e = positions - canon;
    let flat: Vec<f64> = (0..spec.n()).flat_map(|i| (0..spec.dim).map(move |c| (i, c))).map(|(i, c)| e[(i, c)]).collect();
    Ok(centred_mean_square(&flat, spec.n(), spec.dim))
}

/// `(1/n) sum_i |e_i - mean(e)|^2` for `e` row-major `n x d`.
fn centred_mean_square(e: &[f64], n: usize, d: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..d {
        let mean = (0..n).map(|i| e[i * d + c]).sum::<f64>() / n as f64;
        total += (0..n).map(|i| (e[i * d + c] - mean).powi(2)).sum::<f64>();
    }
    total / n as f64
}

/// Positions of trial 0 at the recorded steps, plus the Form metric averaged
/// across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationRun {
    /// `(t, n x d positions)`.
    pub trajectory: Vec<(usize, DMatrix<f64>)>,
    /// Form metric per recorded step; `delta_hat` and `delta_uni_hat` coincide.
    pub trace: SimTrace,
    pub form_simulated: f64,
    pub stderr: f64,
    pub burn_in: usize,
}

/// Simulates the noisy protocol. Each trial starts from `initial` if given,
/// otherwise from the canonical formation plus standard Gaussian jitter drawn
/// from that trial's stream. Form is tail-averaged over `(burn_in, horizon]`,
/// with `Auto` burn-in resolved on `P^form`.
pub fn simulate_formation(
    spec: &FormationSpec,
    cfg: &SimConfig,
    initial: Option<&DMatrix<f64>>,
) -> Result<FormationRun> {
    cfg.validate()?;
    let n = spec.n();
    let d = spec.dim;
    if let Some(p0) = initial {
        if p0.nrows() != n || p0.ncols() != d {
            return Err(Error::DimensionMismatch { expected: n * d, got: p0.len() });
        }
    }
    let canon = consistent_positions(spec)?;
    let p = formation_matrix(spec)?;
    let burn_in = if n == 1 { 0 } else { cfg.resolve_burn_in(&p)? };
    if burn_in >= cfg.horizon {
        return Err(Error::InvalidParam(format!("horizon {} must exceed burn-in {burn_in}", cfg.horizon)));
    }
    let rows = SparseRows::new(p.entries());
    // drift c_i = -sum_j f_ij r_ij
    let mut drift = vec![0.0; n * d];
    for (&(i, j), (&f, r)) in spec.graph.edges().iter().zip(spec.weights.iter().zip(&spec.offsets)) {
        for c in 0..d {
            drift[i * d + c] -= f * r[c];
            drift[j * d + c] += f * r[c];
        }
    }
    let sd: Vec<f64> = spec.noise.variances(n).iter().map(|l| l.sqrt()).collect();
    let sampler = NoiseSampler::std_devs(&sd);
    let canon_flat: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |c| (i, c))).map(|(i, c)| canon[(i, c)]).collect();
    let times = recorded_times(cfg.horizon, cfg.record_every);
    let tail_len = (cfg.horizon - burn_in) as f64;

    let results: Vec<(TrialRecord, Vec<(usize, DMatrix<f64>)>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let mut x: Vec<f64> = match initial {
                Some(p0) => (0..n).flat_map(|i| (0..d).map(move |c| p0[(i, c)])).collect(),
                None => canon_flat.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect(),
            };
            let mut next = vec![0.0; n * d];
            let mut err = vec![0.0; n * d];
            let mut rec = TrialRecord { weighted: Vec::new(), uniform: Vec::new(), tail_weighted: 0.0, tail_uniform: 0.0 };
            let mut tail = Vec::with_capacity(cfg.horizon - burn_in);
            let mut traj = Vec::new();
            for t in 0..=cfg.horizon {
                if t > 0 {
                    rows.apply(&x, d, &mut next);
                    for (v, c) in next.iter_mut().zip(&drift) {
                        *v += c;
                    }
                    sampler.add_to(&mut rng, cfg.noise, d, &mut [], &mut next);
                    std::mem::swap(&mut x, &mut next);
                }
                for ((e, a), b) in err.iter_mut().zip(&x).zip(&canon_flat) {
                    *e = a - b;
                }
                let form = centred_mean_square(&err, n, d);
                if t % cfg.record_every == 0 {
                    rec.weighted.push(form);
                    rec.uniform.push(form);
                    if trial == 0 {
                        traj.push((t, DMatrix::from_row_slice(n, d, &x)));
                    }
                }
                if t > burn_in {
                    tail.push(form);
                }
            }
            let mean = crate::simulate::pairwise_sum(&tail) / tail_len;
            rec.tail_weighted = mean;
            rec.tail_uniform = mean;
            (rec, traj)
        })
        .collect();
    let mut trajectory = Vec::new();
    let mut records = Vec::with_capacity(results.len());
    for (k, (rec, traj)) in results.into_iter().enumerate() {
        if k == 0 {
            trajectory = traj;
        }
        records.push(rec);
    }
    let run = aggregate(times, &records, burn_in);
    Ok(FormationRun {
        trajectory,
        trace: run.trace,
        form_simulated: run.estimate.delta_ss,
        stderr: run.estimate.stderr,
        burn_in,
    })
}

/// Exact Form plus a simulated estimate.
pub fn formation_report(spec: &FormationSpec, cfg: &SimConfig) -> Result<(FormationReport, FormationRun)> {
    let mut report = form_exact(spec)?;
    let run = simulate_formation(spec, cfg, None)?;
    report.form_simulated = Some(run.form_simulated);
    report.form_stderr = Some(run.stderr);
    Ok((report, run))
}

/// Positions as an `n x d` matrix from per-node rows.
pub fn positions_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    Ok(DMatrix::from_fn(n, d, |i, c| rows[i][c]))
}

/// Stacked coordinate `c` of all nodes.
pub fn coordinate(positions: &DMatrix<f64>, c: usize) -> DVector<f64> {
    positions.column(c).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::kemeny_constant_combinatorial;
    use crate::simulate::BurnIn;

    fn line(n: usize, lambda2: f64) -> FormationSpec {
        FormationSpec::for_family(&GraphFamily::Line, n, 2, FormationNoise::Uniform(lambda2), None).unwrap()
    }

    #[test]
    fn default_weight_examples() {
        let star = build_graph(&GraphFamily::Star, 4, None).unwrap();
        assert!(default_weights(&star).iter().all(|&f| f == 1.0 / 6.0));
        let ring = build_graph(&GraphFamily::Ring, 9, None).unwrap();
        assert!(default_weights(&ring).iter().all(|&f| f == 0.25));
        let l2 = build_graph(&GraphFamily::Line, 2, None).unwrap();
        assert_eq!(default_weights(&l2), vec![0.5]);
    }

    #[test]
    fn formation_matrix_examples() {
        let p = formation_matrix(&line(2, 1.0)).unwrap();
        assert_eq!(p.entries(), &DMatrix::from_element(2, 2, 0.5));
        let star = FormationSpec::star(4, 2, 1.0).unwrap();
        let p = formation_matrix(&star).unwrap();
        assert!((p.entries()[(0, 0)] - 0.5).abs() < 1e-15);
        for leaf in 1..4 {
            assert!((p.entries()[(leaf, leaf)] - 5.0 / 6.0).abs() < 1e-15);
        }
        assert!(p.is_symmetric());
    }

    #[test]
    fn weight_errors() {
        let g = build_graph(&GraphFamily::Line, 3, None).unwrap();
        let pos = layout_positions(&g, 2);
        let heavy = WeightSpec::Explicit(vec![(0, 1, 0.6), (1, 2, 0.6)]);
        assert!(matches!(
            FormationSpec::from_positions(g.clone(), &pos, heavy, FormationNoise::Uniform(1.0)),
            Err(Error::StepSizeViolation { node: 1, .. })
        ));
        let asym = WeightSpec::Explicit(vec![(0, 1, 0.2), (1, 0, 0.3), (1, 2, 0.2)]);
        assert!(matches!(
            FormationSpec::from_positions(g.clone(), &pos, asym, FormationNoise::Uniform(1.0)),
            Err(Error::AsymmetricWeights { .. })
        ));
        let missing = WeightSpec::Explicit(vec![(0, 1, 0.2)]);
        assert!(FormationSpec::from_positions(g, &pos, missing, FormationNoise::Uniform(1.0)).is_err());
    }

    #[test]
    fn consistency_detection() {
        let demo = FormationSpec::ring_demo(1.0).unwrap();
        let p = consistent_positions(&demo).unwrap();
        assert!((p.row_sum()).amax() < 1e-12);
        assert_eq!(demo.offset(0, 3).unwrap(), vec![-1.0, 1.0]);
        // reading the fourth label on the 0 -> 3 orientation breaks the cycle
        let bad = vec![
            (0, 1, vec![1.0, 1.0]),
            (1, 2, vec![-1.0, 1.0]),
            (2, 3, vec![-1.0, -1.0]),
            (0, 3, vec![1.0, -1.0]),
        ];
        let spec = FormationSpec::from_offsets(4, 2, &bad, WeightSpec::Default, FormationNoise::Uniform(1.0)).unwrap();
        assert!(matches!(form_exact(&spec), Err(Error::InconsistentFormation { .. })));
        let clash = vec![(0, 1, vec![1.0]), (1, 0, vec![1.0])];
        assert!(matches!(
            FormationSpec::from_offsets(2, 1, &clash, WeightSpec::Default, FormationNoise::Uniform(1.0)),
            Err(Error::InconsistentFormation { .. })
        ));
    }

    #[test]
    fn two_node_form_is_one() {
        let r = form_exact(&line(2, 1.0)).unwrap();
        assert_eq!(r.form_exact, 1.0);
        assert_eq!(form_exact(&line(2, 0.0)).unwrap().form_exact, 0.0);
    }

    #[test]
    fn form_exact_is_linear() {
        let a = form_exact(&line(6, 0.3)).unwrap().form_exact;
        let b = form_exact(&line(6, 0.6)).unwrap().form_exact;
        assert!((b - 2.0 * a).abs() < 1e-14 * b);
        let d3 = FormationSpec::for_family(&GraphFamily::Line, 6, 3, FormationNoise::Uniform(0.3), None).unwrap();
        assert!((form_exact(&d3).unwrap().form_exact - 1.5 * a).abs() < 1e-14 * a);
    }

    #[test]
    fn via_delta_matches_exact() {
        for (f, n) in [(GraphFamily::Ring, 7), (GraphFamily::Star, 9), (GraphFamily::CompleteBinaryTree, 15)] {
            let spec = FormationSpec::for_family(&f, n, 2, FormationNoise::Uniform(0.7), None).unwrap();
            let exact = form_exact(&spec).unwrap().form_exact;
            let via = form_via_delta(&spec).unwrap();
            assert!((exact - via).abs() <= 1e-10 * exact, "{f}: {exact} vs {via}");
        }
        let zero = line(5, 0.0).with_noise(FormationNoise::PerNode(vec![0.0; 5])).unwrap();
        assert_eq!(form_via_delta(&zero).unwrap(), 0.0);
    }

    #[test]
    fn centred_covariance_rows_sum_to_zero() {
        let cov = centred_noise_covariance(&[0.1, 0.5, 2.0, 0.0, 1.0]);
        assert!(cov.column_sum().amax() < 1e-15);
        assert!((&cov - cov.transpose()).amax() == 0.0);
    }

    #[test]
    fn kemeny_report_field() {
        let spec = FormationSpec::tree(7, 2, 1.0).unwrap();
        let r = form_exact(&spec).unwrap();
        let p = formation_matrix(&spec).unwrap();
        assert_eq!(r.kemeny_p2, kemeny_constant_combinatorial(&p.square()).unwrap());
    }

    #[test]
    fn form_metric_examples() {
        let spec = FormationSpec::tree(7, 2, 1.0).unwrap();
        let canon = consistent_positions(&spec).unwrap();
        assert!(form_metric(&canon, &spec).unwrap() < 1e-24);
        let shifted = canon.map(|v| v + 3.5);
        assert!(form_metric(&shifted, &spec).unwrap() < 1e-24);
        let mut v = DMatrix::zeros(7, 2);
        v[(0, 0)] = 1.0;
        v[(1, 0)] = -1.0;
        v[(2, 1)] = 0.5;
        v[(3, 1)] = -0.5;
        let m = form_metric(&(&canon + &v), &spec).unwrap();
        assert!((m - 2.5 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn noiseless_simulation() {
        let spec = FormationSpec::star(7, 2, 0.0).unwrap();
        let canon = consistent_positions(&spec).unwrap();
        let cfg = SimConfig { horizon: 200, trials: 2, burn_in: BurnIn::Steps(10), seed: 3, record_every: 10, ..Default::default() };
        let still = simulate_formation(&spec, &cfg, Some(&canon.map(|v| v - 2.0))).unwrap();
        assert!(still.trace.delta_hat.iter().all(|&f| f < 1e-24));
        let moving = simulate_formation(&spec, &cfg, None).unwrap();
        assert!(moving.trace.delta_hat[0] > 0.1);
        assert!(*moving.trace.delta_hat.last().unwrap() < 1e-6);
        assert_eq!(moving.trajectory.len(), 21);
    }

    #[test]
    fn simulation_matches_exact_on_line() {
        let spec = line(4, 0.04);
        let cfg = SimConfig { horizon: 4000, trials: 40, burn_in: BurnIn::Auto, seed: 5, record_every: 100, ..Default::default() };
        let (report, run) = formation_report(&spec, &cfg).unwrap();
        let sim = report.form_simulated.unwrap();
        assert!((sim - report.form_exact).abs() <= 3.0 * run.stderr, "{sim} vs {}", report.form_exact);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"n": 3, "dim": 2, "edges": [[0, 1, [1.0, 0.0]], {"i": 2, "j": 1, "r": [0.0, -1.0]}],
                       "weights": "default", "lambda2": 0.25}"#;
        let spec = FormationSpec::from_json(text).unwrap();
        assert_eq!(spec.offset(1, 2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(spec.weight(0, 1), Some(0.25));
        let again = FormationSpec::from_json(&spec.to_json().to_string()).unwrap();
        assert_eq!(again, spec);
        let explicit = r#"{"n": 2, "dim": 1, "edges": [[0, 1, [2.0]]], "weights": [[1, 0, 0.3]], "lambda2": [1.0, 2.0]}"#;
        let spec = FormationSpec::from_json(explicit).unwrap();
        assert_eq!(spec.weight(0, 1), Some(0.3));
        assert!(form_exact(&spec).is_err());
        assert!(form_via_delta(&spec).unwrap() > 0.0);
        assert!(FormationSpec::from_json(r#"{"n": 2, "dim": 1, "edges": [], "weights": "bogus", "lambda2": 1}"#).is_err());
    }
}

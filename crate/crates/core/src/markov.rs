//! Row-stochastic matrices and the chain analytics built on them: stationary
//! distribution, hitting times, Kemeny constant and commute-time resistance.

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::tolerance::Tolerances;

/// A dense row-stochastic matrix. Structural flags are computed on first use
/// and cached.
#[derive(Debug, Clone)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
    tol: Tolerances,
    irreducible: OnceLock<bool>,
    aperiodic: OnceLock<bool>,
    symmetric: OnceLock<bool>,
    reversible: OnceLock<bool>,
    stationary: OnceLock<DVector<f64>>,
}

impl StochasticMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerances(entries, Tolerances::default())
    }

    pub fn with_tolerances(entries: DMatrix<f64>, tol: Tolerances) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::NotStochastic(format!(
                "expected a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..n {
            let row = entries.row(i);
            if let Some(bad) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::NotStochastic(format!("row {i} has entry {bad}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol.row_sum {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            entries,
            tol,
            irreducible: OnceLock::new(),
            aperiodic: OnceLock::new(),
            symmetric: OnceLock::new(),
            reversible: OnceLock::new(),
            stationary: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotStochastic("rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is stochastic")
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Strong connectivity of the directed graph of positive entries.
    pub fn is_irreducible(&self) -> bool {
        *self.irreducible.get_or_init(|| {
            let n = self.n();
            let forward = reachable_from_zero(n, |u, v| self.entries[(u, v)] > 0.0);
            let backward = reachable_from_zero(n, |u, v| self.entries[(v, u)] > 0.0);
            forward.iter().all(|&b| b) && backward.iter().all(|&b| b)
        })
    }

    /// Period of an irreducible chain (gcd of cycle lengths), `None` if reducible.
    pub fn period(&self) -> Option<usize> {
        if !self.is_irreducible() {
            return None;
        }
        let n = self.n();
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if self.entries[(u, v)] > 0.0 && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0;
        for u in 0..n {
            for v in 0..n {
                if self.entries[(u, v)] > 0.0 {
                    g = gcd(g, (level[u] + 1).abs_diff(level[v]));
                }
            }
        }
        Some(g)
    }

    pub fn is_aperiodic(&self) -> bool {
        *self.aperiodic.get_or_init(|| {
            if !self.is_irreducible() {
                return false;
            }
            (0..self.n()).any(|i| self.entries[(i, i)] > 0.0) || self.period() == Some(1)
        })
    }

    pub fn asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self) -> bool {
        *self.symmetric.get_or_init(|| self.asymmetry() <= self.tol.symmetry)
    }

    /// `max |pi_i P_ij - pi_j P_ji|` relative to `max pi_i P_ij`.
    pub fn reversibility_defect(&self) -> Result<f64> {
        let pi = self.stationary_distribution()?;
        let n = self.n();
        let (mut defect, mut scale) = (0.0_f64, 0.0_f64);
        for i in 0..n {
            for j in 0..n {
                let flow = pi[i] * self.entries[(i, j)];
                scale = scale.max(flow);
                defect = defect.max((flow - pi[j] * self.entries[(j, i)]).abs());
            }
        }
        Ok(if scale > 0.0 { defect / scale } else { 0.0 })
    }

    pub fn is_reversible(&self) -> bool {
        *self
            .reversible
            .get_or_init(|| matches!(self.reversibility_defect(), Ok(d) if d <= self.tol.reversibility))
    }

    pub fn require_irreducible(&self) -> Result<()> {
        if self.is_irreducible() {
            Ok(())
        } else {
            Err(Error::NotIrreducible)
        }
    }

    /// Irreducible and aperiodic; a periodic chain reports its period.
    pub fn require_ergodic(&self) -> Result<()> {
        self.require_irreducible()?;
        if self.is_aperiodic() {
            Ok(())
        } else {
            Err(Error::Periodic { period: self.period().unwrap_or(0) })
        }
    }

    pub fn require_reversible(&self) -> Result<()> {
        self.require_irreducible()?;
        if self.is_reversible() {
            Ok(())
        } else {
            Err(Error::NotReversible { defect: self.reversibility_defect()? })
        }
    }

    pub fn require_symmetric(&self) -> Result<()> {
        if self.is_symmetric() {
            Ok(())
        } else {
            Err(Error::NotSymmetric { asymmetry: self.asymmetry() })
        }
    }

    /// Solves `pi^T P = pi^T`, `sum pi = 1` with the last balance equation
    /// replaced by the normalization. Cached after the first call.
    pub fn stationary_distribution(&self) -> Result<DVector<f64>> {
        if let Some(pi) = self.stationary.get() {
            return Ok(pi.clone());
        }
        self.require_irreducible()?;
        let n = self.n();
        let mut a = self.entries.transpose() - DMatrix::identity(n, n);
        a.row_mut(n - 1).fill(1.0);
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::SingularSystem("stationary balance equations".into()))?;
        let residual = (self.entries.tr_mul(&pi) - &pi).amax();
        if residual > self.tol.stationarity {
            return Err(Error::Numerical(format!("stationary residual {residual:.3e}")));
        }
        Ok(self.stationary.get_or_init(|| pi).clone())
    }

    /// Matrix product `P * P`.
    pub fn square(&self) -> StochasticMatrix {
        let sq = &self.entries * &self.entries;
        StochasticMatrix::with_tolerances(sq, self.tol).expect("product of stochastic matrices")
    }
}

fn reachable_from_zero(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !seen[v] && edge(u, v) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Simple random walk: `P_ij = 1/d(i)` on edges.
pub fn simple_walk_matrix(g: &Graph) -> Result<StochasticMatrix> {
    if g.n() < 2 {
        return Err(Error::InvalidParam("simple walk needs at least two nodes".into()));
    }
    if !g.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    let n = g.n();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let d = g.neighbors(i).len() as f64;
        for &j in g.neighbors(i) {
            p[(i, j)] = 1.0 / d;
        }
    }
    StochasticMatrix::new(p)
}

/// Lazy walk `1/2 I + 1/2 P~`. On a single node this is the 1x1 identity.
pub fn lazy_walk_matrix(g: &Graph) -> Result<StochasticMatrix> {
    if g.n() == 1 {
        return Ok(StochasticMatrix::identity(1));
    }
    let simple = simple_walk_matrix(g)?;
    let n = g.n();
    let lazy = (DMatrix::identity(n, n) + simple.entries) * 0.5;
    StochasticMatrix::new(lazy)
}

/// Closed-form stationary distribution `d(i) / 2m` of the walks on `g`.
pub fn degree_stationary(g: &Graph) -> DVector<f64> {
    if g.edge_count() == 0 {
        return DVector::from_element(g.n(), 1.0 / g.n() as f64);
    }
    let two_m = 2.0 * g.edge_count() as f64;
    DVector::from_iterator(g.n(), g.degrees().into_iter().map(|d| d as f64 / two_m))
}

pub fn stationary_distribution(p: &StochasticMatrix) -> Result<DVector<f64>> {
    p.stationary_distribution()
}

pub fn square_chain(p: &StochasticMatrix) -> StochasticMatrix {
    p.square()
}

/// Hitting-time matrix `H[i][j] = E[steps from i to first reach j]`.
///
/// Computed from one factorization of the fundamental matrix
/// `Z = (I - P + 1 pi^T)^{-1}` as `H[i][j] = (Z_jj - Z_ij) / pi_j`, then
/// verified against the first-step equations `h_i = 1 + sum_{k != j} P_ik h_k`.
pub fn hitting_times(p: &StochasticMatrix) -> Result<DMatrix<f64>> {
    let n = p.n();
    let pi = p.stationary_distribution()?;
    let mut a = DMatrix::identity(n, n) - p.entries();
    for j in 0..n {
        a.column_mut(j).add_scalar_mut(pi[j]);
    }
    let z = a
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("fundamental matrix".into()))?;
    let h = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (z[(j, j)] - z[(i, j)]) / pi[j] });
    check_first_step_residual(p, &h)?;
    Ok(h)
}

/// Hitting times by one dense LU solve per target, the textbook route.
/// Cubic per target, so only practical for small chains; kept as an
/// independent reference for [`hitting_times`].
pub fn hitting_times_per_target(p: &StochasticMatrix) -> Result<DMatrix<f64>> {
    p.require_irreducible()?;
    let n = p.n();
    let columns: Vec<Result<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|target| {
            let others: Vec<usize> = (0..n).filter(|&k| k != target).collect();
            let m = others.len();
            let mut h = DVector::zeros(n);
            if m == 0 {
                return Ok(h);
            }
            let a = DMatrix::from_fn(m, m, |r, c| {
                let delta = if r == c { 1.0 } else { 0.0 };
                delta - p.entries()[(others[r], others[c])]
            });
            let ones = DVector::from_element(m, 1.0);
            let sol = a
                .clone()
                .lu()
                .solve(&ones)
                .ok_or_else(|| Error::SingularSystem(format!("hitting times to {target}")))?;
            let residual = (&a * &sol - &ones).amax();
            if residual > p.tolerances().hitting_residual * n as f64 * sol.amax().max(1.0) {
                return Err(Error::Numerical(format!("hitting-time residual {residual:.3e} for target {target}")));
            }
            for (r, &k) in others.iter().enumerate() {
                h[k] = sol[r];
            }
            Ok(h)
        })
        .collect();
    let mut h = DMatrix::zeros(n, n);
    for (j, col) in columns.into_iter().enumerate() {
        h.set_column(j, &col?);
    }
    Ok(h)
}

fn check_first_step_residual(p: &StochasticMatrix, h: &DMatrix<f64>) -> Result<()> {
    let n = p.n();
    let ph = p.entries() * h;
    let scale = h.amax().max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max((h[(i, j)] - 1.0 - ph[(i, j)]).abs());
            }
        }
    }
    if worst > p.tolerances().hitting_residual * n as f64 * scale {
        return Err(Error::Numerical(format!("hitting-time residual {worst:.3e} (scale {scale:.3e})")));
    }
    Ok(())
}

/// Largest entry of a hitting-time matrix.
pub fn max_hitting_time(h: &DMatrix<f64>) -> f64 {
    h.max()
}

/// Random-target row sums `sum_j pi_j H[i][j]`, one per start state.
pub fn random_target_sums(pi: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    h * pi
}

/// Kemeny constant from hitting times, after checking that the random-target
/// sum is the same from every start state.
pub fn kemeny_constant_combinatorial(p: &StochasticMatrix) -> Result<f64> {
    if p.n() == 1 {
        return Ok(0.0);
    }
    let pi = p.stationary_distribution()?;
    let h = hitting_times(p)?;
    kemeny_from_hitting(&pi, &h, p.tolerances().random_target)
}

fn kemeny_from_hitting(pi: &DVector<f64>, h: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let sums = random_target_sums(pi, h);
    let kemeny = sums[0];
    let spread = sums.iter().map(|s| (s - kemeny).abs()).fold(0.0, f64::max);
    if spread > tol * (1.0 + kemeny.abs()) {
        return Err(Error::RandomTargetViolation { spread, kemeny });
    }
    Ok(kemeny)
}

/// The `n - 1` eigenvalues of `P` other than the principal eigenvalue 1.
///
/// Reversible chains are symmetrized as `D^{1/2} P D^{-1/2}` and handed to the
/// symmetric eigensolver; anything else goes through the general (Schur)
/// solver and may return complex values.
pub fn nonprincipal_eigenvalues(p: &StochasticMatrix) -> Result<Vec<Complex<f64>>> {
    p.require_irreducible()?;
    let n = p.n();
    let mut values: Vec<Complex<f64>> = if p.is_symmetric() || p.is_reversible() {
        let pi = p.stationary_distribution()?;
        let sqrt_pi: Vec<f64> = pi.iter().map(|x| x.sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |i, j| sqrt_pi[i] * p.entries()[(i, j)] / sqrt_pi[j]);
        let s = (&s + s.transpose()) * 0.5;
        s.symmetric_eigenvalues().iter().map(|&x| Complex::new(x, 0.0)).collect()
    } else {
        p.entries().complex_eigenvalues().iter().copied().collect()
    };
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::EigSolverFailure("non-finite eigenvalue".into()));
    }
    let principal = values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::EigSolverFailure("empty spectrum".into()))?;
    if (values[principal] - 1.0).norm() > 1e-8 {
        return Err(Error::EigSolverFailure(format!(
            "no eigenvalue at 1 (closest {})",
            values[principal]
        )));
    }
    values.swap_remove(principal);
    Ok(values)
}

/// Kemeny constant as `sum 1 / (1 - lambda)` over the non-principal spectrum.
pub fn kemeny_constant_spectral(p: &StochasticMatrix) -> Result<f64> {
    if p.n() == 1 {
        return Ok(0.0);
    }
    let values = nonprincipal_eigenvalues(p)?;
    let total: Complex<f64> = values.iter().map(|&l| Complex::new(1.0, 0.0) / (1.0 - l)).sum();
    if total.im.abs() > p.tolerances().imaginary_residue * (1.0 + total.re.abs()) {
        return Err(Error::EigSolverFailure(format!("imaginary residue {:.3e}", total.im)));
    }
    Ok(total.re)
}

/// Spectral radius of `P - J`, i.e. the largest modulus among the
/// non-principal eigenvalues of `P`.
pub fn deviation_spectral_radius(p: &StochasticMatrix) -> Result<f64> {
    if p.n() == 1 {
        return Ok(0.0);
    }
    Ok(nonprincipal_eigenvalues(p)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Commute-time resistance `R = H + H^T` of a reversible chain.
pub fn effective_resistance(p: &StochasticMatrix) -> Result<DMatrix<f64>> {
    p.require_reversible()?;
    let h = hitting_times(p)?;
    Ok(&h + h.transpose())
}

/// Stationary distribution, hitting times, Kemeny constant and (for
/// reversible chains) resistances of one chain.
#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    pub pi: DVector<f64>,
    pub hitting: DMatrix<f64>,
    pub kemeny: f64,
    pub resistance: Option<DMatrix<f64>>,
}

impl ChainAnalysis {
    pub fn compute(p: &StochasticMatrix) -> Result<Self> {
        let pi = p.stationary_distribution()?;
        let hitting = hitting_times(p)?;
        let kemeny = if p.n() == 1 {
            0.0
        } else {
            kemeny_from_hitting(&pi, &hitting, p.tolerances().random_target)?
        };
        let resistance = p.is_reversible().then(|| &hitting + hitting.transpose());
        Ok(Self { pi, hitting, kemeny, resistance })
    }

    pub fn max_hitting_time(&self) -> f64 {
        self.hitting.max()
    }

    pub fn max_resistance(&self) -> Option<f64> {
        self.resistance.as_ref().map(|r| r.max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_graph, GraphFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn graph(f: GraphFamily, n: usize) -> Graph {
        build_graph(&f, n, Some(0)).unwrap()
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(StochasticMatrix::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(StochasticMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(StochasticMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn simple_walk_examples() {
        let p = simple_walk_matrix(&graph(GraphFamily::Ring, 3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p.entries()[(i, j)], if i == j { 0.0 } else { 0.5 });
            }
        }
        let path = simple_walk_matrix(&graph(GraphFamily::Star, 3)).unwrap();
        assert_eq!(path.entries().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.5, 0.5]);
        let two = simple_walk_matrix(&graph(GraphFamily::Line, 2)).unwrap();
        assert_eq!(two.entries(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let disconnected = Graph::from_edges(4, &[(0, 1), (2, 3)], "custom").unwrap();
        assert!(matches!(simple_walk_matrix(&disconnected), Err(Error::DisconnectedGraph)));
        assert!(matches!(lazy_walk_matrix(&disconnected), Err(Error::DisconnectedGraph)));
    }

    #[test]
    fn lazy_walk_examples() {
        let p = lazy_walk_matrix(&graph(GraphFamily::Line, 2)).unwrap();
        assert_eq!(p.entries(), half().entries());
        let pi = lazy_walk_matrix(&graph(GraphFamily::Line, 3)).unwrap().stationary_distribution().unwrap();
        assert!((pi - DVector::from_vec(vec![0.25, 0.5, 0.25])).amax() < 1e-12);
        for fam in [GraphFamily::Star, GraphFamily::Line, GraphFamily::CompleteBinaryTree] {
            let p = lazy_walk_matrix(&graph(fam, 7)).unwrap();
            assert!(p.is_reversible() && p.is_aperiodic());
        }
    }

    #[test]
    fn flags() {
        let ring4 = simple_walk_matrix(&graph(GraphFamily::Ring, 4)).unwrap();
        assert!(ring4.is_irreducible());
        assert_eq!(ring4.period(), Some(2));
        assert!(!ring4.is_aperiodic());
        let ring5 = simple_walk_matrix(&graph(GraphFamily::Ring, 5)).unwrap();
        assert!(ring5.is_aperiodic());
        let id = StochasticMatrix::identity(3);
        assert!(!id.is_irreducible());
        let cyclic = StochasticMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(cyclic.period(), Some(3));
        // A biased cycle is irreducible but not reversible.
        let biased = StochasticMatrix::from_rows(&[
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.2, 0.7],
            vec![0.7, 0.1, 0.2],
        ])
        .unwrap();
        assert!(biased.is_aperiodic());
        assert!(!biased.is_reversible());
        assert!(matches!(biased.require_reversible(), Err(Error::NotReversible { .. })));
    }

    #[test]
    fn stationary_examples() {
        let star = lazy_walk_matrix(&graph(GraphFamily::Star, 4)).unwrap();
        let pi = star.stationary_distribution().unwrap();
        let expected = DVector::from_vec(vec![0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]);
        assert!((pi - expected).amax() < 1e-12);
        let p = StochasticMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = p.stationary_distribution().unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12 && (pi[1] - 1.0 / 3.0).abs() < 1e-12);
        let sym = lazy_walk_matrix(&graph(GraphFamily::Ring, 6)).unwrap();
        assert!(sym.stationary_distribution().unwrap().iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-12));
        assert!(matches!(StochasticMatrix::identity(2).stationary_distribution(), Err(Error::NotIrreducible)));
    }

    #[test]
    fn hitting_time_examples() {
        let h = hitting_times(&half()).unwrap();
        assert!((h - DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0])).amax() < 1e-12);
        let lazy_k3 = lazy_walk_matrix(&graph(GraphFamily::Complete, 3)).unwrap();
        let h = hitting_times(&lazy_k3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 4.0 };
                assert!((h[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    /// First-passage sampling as an independent check of the 2-node value.
    #[test]
    fn hitting_time_monte_carlo() {
        let p = half();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 200_000;
        let mut total = 0u64;
        for _ in 0..trials {
            let mut state = 0;
            let mut steps = 0;
            while state != 1 {
                let u: f64 = rng.random();
                state = if u < p.entries()[(state, 0)] { 0 } else { 1 };
                steps += 1;
            }
            total += steps;
        }
        let mean = total as f64 / trials as f64;
        // sd of a geometric(1/2) is sqrt(2)
        assert!((mean - 2.0).abs() < 4.0 * 2f64.sqrt() / (trials as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn both_hitting_routes_agree() {
        for (fam, n) in [
            (GraphFamily::Star, 9),
            (GraphFamily::StarryLine, 12),
            (GraphFamily::CompleteBinaryTree, 15),
            (GraphFamily::ErdosRenyi { p: 0.3 }, 14),
        ] {
            let p = lazy_walk_matrix(&graph(fam.clone(), n)).unwrap();
            let a = hitting_times(&p).unwrap();
            let b = hitting_times_per_target(&p).unwrap();
            assert!((&a - &b).amax() <= 1e-9 * b.amax(), "{fam}");
            let sq = p.square();
            let a = hitting_times(&sq).unwrap();
            let b = hitting_times_per_target(&sq).unwrap();
            assert!((&a - &b).amax() <= 1e-9 * b.amax(), "{fam} squared");
        }
    }

    #[test]
    fn square_chain_examples() {
        assert!((half().square().entries() - half().entries()).amax() < 1e-15);
        assert_eq!(StochasticMatrix::identity(3).square().entries(), &DMatrix::identity(3, 3));
        let sq = lazy_walk_matrix(&graph(GraphFamily::Ring, 3)).unwrap().square();
        for row in sq.entries().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-15);
        }
        assert!(sq.is_irreducible() && sq.is_aperiodic());
    }

    #[test]
    fn kemeny_examples() {
        assert_eq!(kemeny_constant_combinatorial(&StochasticMatrix::identity(1)).unwrap(), 0.0);
        assert!((kemeny_constant_combinatorial(&half()).unwrap() - 1.0).abs() < 1e-12);
        let lazy_k3 = lazy_walk_matrix(&graph(GraphFamily::Complete, 3)).unwrap();
        assert!((kemeny_constant_combinatorial(&lazy_k3).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!((kemeny_constant_spectral(&half()).unwrap() - 1.0).abs() < 1e-12);
        assert!((kemeny_constant_spectral(&lazy_k3).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!(matches!(kemeny_constant_spectral(&StochasticMatrix::identity(2)), Err(Error::NotIrreducible)));
    }

    #[test]
    fn kemeny_non_reversible_uses_general_solver() {
        let p = StochasticMatrix::from_rows(&[
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.2, 0.7],
            vec![0.7, 0.1, 0.2],
        ])
        .unwrap();
        let comb = kemeny_constant_combinatorial(&p).unwrap();
        let spec = kemeny_constant_spectral(&p).unwrap();
        assert!((comb - spec).abs() <= 1e-8 * comb, "{comb} vs {spec}");
    }

    #[test]
    fn resistance_examples() {
        let r = effective_resistance(&half()).unwrap();
        assert_eq!(r[(0, 0)], 0.0);
        assert!((r[(0, 1)] - 4.0).abs() < 1e-12);
        let p = lazy_walk_matrix(&graph(GraphFamily::StarryLine, 9)).unwrap();
        let r = effective_resistance(&p).unwrap();
        assert_eq!(r, r.transpose());
        assert!(r.diagonal().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lazy_hitting_is_twice_simple() {
        for fam in [GraphFamily::Ring, GraphFamily::Star, GraphFamily::Line] {
            let g = graph(fam.clone(), 9);
            let lazy = hitting_times(&lazy_walk_matrix(&g).unwrap()).unwrap();
            let simple = hitting_times(&simple_walk_matrix(&g).unwrap()).unwrap();
            assert!((&lazy - simple * 2.0).amax() <= 1e-8 * lazy.amax(), "{fam}");
        }
    }

    #[test]
    fn degree_stationary_matches_solve() {
        for (fam, n) in [(GraphFamily::StarryLine, 15), (GraphFamily::TwoStar, 10), (GraphFamily::Grid { dim: 2 }, 25)] {
            let g = graph(fam, n);
            let solved = lazy_walk_matrix(&g).unwrap().stationary_distribution().unwrap();
            assert!((solved - degree_stationary(&g)).amax() <= 1e-12);
        }
    }

    #[test]
    fn analysis_bundle() {
        let p = lazy_walk_matrix(&graph(GraphFamily::Star, 6)).unwrap();
        let a = ChainAnalysis::compute(&p).unwrap();
        let r = a.resistance.as_ref().unwrap();
        assert_eq!(r, &(&a.hitting + a.hitting.transpose()));
        assert!((a.kemeny - kemeny_constant_spectral(&p).unwrap()).abs() < 1e-9 * a.kemeny);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(a.hitting[(i, j)] >= 1.0);
                }
            }
        }
    }
}

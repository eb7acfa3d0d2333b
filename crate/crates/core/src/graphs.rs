//! Undirected simple graphs and the generator families used in the scaling
//! experiments.
//!
//! Labeling conventions (0-based):
//! - `Star`: node 0 is the center.
//! - `TwoStar`: centers are 0 and `n - 1`; the first `ceil((n - 2) / 2)` leaves
//!   hang off node 0, the rest off node `n - 1`.
//! - `StarryLine`: node 0 is the first star center with leaves `1..k`, the line
//!   occupies `k..2k`, the second star has leaves `2k..n-1` and center `n - 1`
//!   (`k = n / 3`).
//! - `Grid { dim }`: node index is the mixed-radix encoding of the coordinates,
//!   first coordinate fastest.
//! - `CompleteBinaryTree`: node `i` has children `2i + 1` and `2i + 2`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resampling cap for Erdős–Rényi graphs that come out disconnected.
pub const ER_MAX_ATTEMPTS: usize = 1000;
/// Restart cap for the random-regular pairing model.
pub const REGULAR_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphFamily {
    Complete,
    Line,
    Ring,
    Star,
    TwoStar,
    StarryLine,
    Grid { dim: u32 },
    CompleteBinaryTree,
    ErdosRenyi { p: f64 },
    RandomRegular { degree: usize },
    Custom { edges: Vec<(usize, usize)> },
}

impl GraphFamily {
    pub fn is_random(&self) -> bool {
        matches!(self, GraphFamily::ErdosRenyi { .. } | GraphFamily::RandomRegular { .. })
    }

    /// Short name used in tags, CSV rows and on the command line.
    pub fn name(&self) -> String {
        match self {
            GraphFamily::Complete => "complete".into(),
            GraphFamily::Line => "line".into(),
            GraphFamily::Ring => "ring".into(),
            GraphFamily::Star => "star".into(),
            GraphFamily::TwoStar => "two-star".into(),
            GraphFamily::StarryLine => "starry-line".into(),
            GraphFamily::Grid { dim } => format!("grid{dim}"),
            GraphFamily::CompleteBinaryTree => "tree".into(),
            GraphFamily::ErdosRenyi { p } => format!("erdos-renyi(p={p})"),
            GraphFamily::RandomRegular { degree } => format!("random-regular(d={degree})"),
            GraphFamily::Custom { .. } => "custom".into(),
        }
    }

    /// Checks the family-specific constraints on `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidParam("n must be at least 1".into()));
        }
        match *self {
            GraphFamily::StarryLine if n % 3 != 0 => Err(Error::InvalidParam(format!(
                "starry line needs n divisible by 3, got {n}"
            ))),
            GraphFamily::Grid { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidParam("grid dimension must be positive".into()));
                }
                integer_root(n, dim).map(|_| ()).ok_or_else(|| {
                    Error::InvalidParam(format!("grid{dim} needs n to be a perfect {dim}-th power, got {n}"))
                })
            }
            GraphFamily::CompleteBinaryTree if !(n + 1).is_power_of_two() => Err(
                Error::InvalidParam(format!("complete binary tree needs n = 2^h - 1, got {n}")),
            ),
            GraphFamily::ErdosRenyi { p } if !(p > 0.0 && p <= 1.0) => Err(Error::InvalidParam(
                format!("Erdos-Renyi edge probability must lie in (0, 1], got {p}"),
            )),
            GraphFamily::RandomRegular { degree } => {
                if n == 1 && degree == 0 {
                    Ok(())
                } else if degree == 0 || degree >= n || (n * degree) % 2 != 0 {
                    Err(Error::InvalidParam(format!(
                        "random regular graph needs 1 <= d < n and n*d even, got n={n}, d={degree}"
                    )))
                } else if n > 2 && degree == 1 {
                    Err(Error::InvalidParam(
                        "a 1-regular graph on more than two nodes is disconnected".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// An immutable undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Graph {
    n: usize,
    /// Sorted, each pair stored as `(i, j)` with `i < j`.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
    family_tag: String,
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            edges: Vec<(usize, usize)>,
            family_tag: String,
        }
        let raw = Raw::deserialize(de)?;
        Graph::from_edges(raw.n, &raw.edges, raw.family_tag).map_err(serde::de::Error::custom)
    }
}

impl Graph {
    /// Builds a graph from an explicit edge list, rejecting self-loops,
    /// duplicates and out-of-range endpoints.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], family_tag: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("n must be at least 1".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParam(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::InvalidParam(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidParam(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self::from_sorted(n, set.into_iter().collect(), family_tag.into()))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>, family_tag: String) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self { n, edges, adjacency, family_tag }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn family_tag(&self) -> &str {
        &self.family_tag
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Two-coloring by BFS over every component.
    pub fn is_bipartite(&self) -> bool {
        let mut color: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let cu = color[u].expect("colored on push");
                for &v in &self.adjacency[u] {
                    match color[v] {
                        None => {
                            color[v] = Some(!cu);
                            queue.push_back(v);
                        }
                        Some(cv) if cv == cu => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    /// Reads the plain-text edge-list format: first line `n`, then one
    /// 0-based `i j` pair per line. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n: usize = first
            .parse()
            .map_err(|_| Error::Parse(format!("first line must be the node count, got {first:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected two node ids", lineno + 1)))?
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad node id", lineno + 1)))
            };
            let (a, b) = (next()?, next()?);
            if it.next().is_some() {
                return Err(Error::Parse(format!("line {}: trailing tokens", lineno + 1)));
            }
            edges.push((a, b));
        }
        Graph::from_edges(n, &edges, "custom")
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }
}

/// Builds a member of `family` on `n` nodes.
///
/// Random families are a deterministic function of `seed`; with no seed one is
/// drawn from the OS and recorded in the family tag. Every family except
/// `Custom` returns a connected graph.
pub fn build_graph(family: &GraphFamily, n: usize, seed: Option<u64>) -> Result<Graph> {
    family.validate(n)?;
    let tag = match (family.is_random(), seed) {
        (true, Some(s)) => format!("{}[n={n},seed={s}]", family.name()),
        (true, None) => String::new(),
        (false, _) => format!("{}[n={n}]", family.name()),
    };
    let edges = match family {
        GraphFamily::Complete => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        GraphFamily::Line => (1..n).map(|i| (i - 1, i)).collect(),
        GraphFamily::Ring => ring_edges(n),
        GraphFamily::Star => (1..n).map(|i| (0, i)).collect(),
        GraphFamily::TwoStar => two_star_edges(n),
        GraphFamily::StarryLine => starry_line_edges(n),
        GraphFamily::Grid { dim } => grid_edges(n, *dim),
        GraphFamily::CompleteBinaryTree => (1..n).map(|i| ((i - 1) / 2, i)).collect(),
        GraphFamily::ErdosRenyi { p } => {
            let seed = seed.unwrap_or_else(rand::random);
            let edges = erdos_renyi_edges(n, *p, seed)?;
            return Graph::from_edges(n, &edges, format!("{}[n={n},seed={seed}]", family.name()));
        }
        GraphFamily::RandomRegular { degree } => {
            let seed = seed.unwrap_or_else(rand::random);
            let edges = random_regular_edges(n, *degree, seed)?;
            return Graph::from_edges(n, &edges, format!("{}[n={n},seed={seed}]", family.name()));
        }
        GraphFamily::Custom { edges } => return Graph::from_edges(n, edges, "custom"),
    };
    Graph::from_edges(n, &edges, tag)
}

pub fn degrees(g: &Graph) -> Vec<usize> {
    g.degrees()
}

pub fn is_connected(g: &Graph) -> bool {
    g.is_connected()
}

pub fn is_bipartite(g: &Graph) -> bool {
    g.is_bipartite()
}

fn ring_edges(n: usize) -> Vec<(usize, usize)> {
    match n {
        1 => vec![],
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    }
}

fn two_star_edges(n: usize) -> Vec<(usize, usize)> {
    if n == 1 {
        return vec![];
    }
    let last = n - 1;
    let leaves = n - 2;
    let first_half = leaves.div_ceil(2);
    let mut edges = vec![(0, last)];
    for leaf in 1..=leaves {
        let center = if leaf <= first_half { 0 } else { last };
        edges.push((center, leaf));
    }
    edges
}

fn starry_line_edges(n: usize) -> Vec<(usize, usize)> {
    let k = n / 3;
    let first_center = 0;
    let second_center = n - 1;
    let line = k..2 * k;
    let mut edges = Vec::with_capacity(n - 1);
    edges.extend((1..k).map(|leaf| (first_center, leaf)));
    edges.extend((2 * k..n - 1).map(|leaf| (second_center, leaf)));
    edges.extend((line.start + 1..line.end).map(|i| (i - 1, i)));
    edges.push((first_center, line.start));
    edges.push((line.end - 1, second_center));
    edges
}

fn integer_root(n: usize, dim: u32) -> Option<usize> {
    let guess = (n as f64).powf(1.0 / dim as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&s| s > 0 && s.checked_pow(dim) == Some(n))
}

fn grid_edges(n: usize, dim: u32) -> Vec<(usize, usize)> {
    let side = integer_root(n, dim).expect("validated");
    let mut edges = Vec::new();
    for node in 0..n {
        let mut stride = 1;
        let mut rest = node;
        for _ in 0..dim {
            let coord = rest % side;
            rest /= side;
            if coord + 1 < side {
                edges.push((node, node + stride));
            }
            stride *= side;
        }
    }
    edges
}

fn erdos_renyi_edges(n: usize, p: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ER_MAX_ATTEMPTS {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        if Graph::from_sorted(n, edges.clone(), String::new()).is_connected() {
            return Ok(edges);
        }
    }
    Err(Error::GenerationFailed {
        attempts: ER_MAX_ATTEMPTS,
        reason: format!("no connected G({n}, {p}) sample"),
    })
}

/// Pairing model: stubs are matched at random, rejecting pairs that would
/// create a self-loop or a multi-edge; a dead end restarts the whole pairing.
/// Disconnected outcomes are resampled as well.
fn random_regular_edges(n: usize, degree: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n == 1 {
        return Ok(vec![]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..REGULAR_MAX_ATTEMPTS {
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
        stubs.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        while !stubs.is_empty() {
            let mut paired = false;
            for _ in 0..(4 * stubs.len()).max(32) {
                let a = rng.random_range(0..stubs.len());
                let b = rng.random_range(0..stubs.len());
                let (u, v) = (stubs[a], stubs[b]);
                if a == b || u == v || edges.contains(&(u.min(v), u.max(v))) {
                    continue;
                }
                edges.insert((u.min(v), u.max(v)));
                let (hi, lo) = (a.max(b), a.min(b));
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                paired = true;
                break;
            }
            if !paired {
                continue 'attempt;
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        if Graph::from_sorted(n, edges.clone(), String::new()).is_connected() {
            return Ok(edges);
        }
    }
    Err(Error::GenerationFailed {
        attempts: REGULAR_MAX_ATTEMPTS,
        reason: format!("no connected {degree}-regular graph on {n} nodes"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().to_vec()
    }

    #[test]
    fn star_has_center_zero() {
        let g = build_graph(&GraphFamily::Star, 4, None).unwrap();
        assert_eq!(edge_set(&g), vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(g.degrees(), vec![3, 1, 1, 1]);
    }

    #[test]
    fn complete_single_node() {
        let g = build_graph(&GraphFamily::Complete, 1, None).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(g.is_connected());
    }

    #[test]
    fn starry_line_nine() {
        let g = build_graph(&GraphFamily::StarryLine, 9, None).unwrap();
        // star 0 {1,2}, line 3-4-5, star 8 {6,7}, joins 0-3 and 5-8
        let expected = vec![(0, 1), (0, 2), (0, 3), (3, 4), (4, 5), (5, 8), (6, 8), (7, 8)];
        assert_eq!(edge_set(&g), expected);
        assert_eq!(g.edge_count(), 8);
        assert_eq!(g.degrees(), vec![3, 1, 1, 2, 2, 2, 1, 1, 3]);
        assert!(g.is_connected());
    }

    #[test]
    fn ring_degrees_and_bipartiteness() {
        let g5 = build_graph(&GraphFamily::Ring, 5, None).unwrap();
        assert_eq!(g5.degrees(), vec![2; 5]);
        assert!(!g5.is_bipartite());
        let g4 = build_graph(&GraphFamily::Ring, 4, None).unwrap();
        assert!(g4.is_bipartite());
    }

    #[test]
    fn disjoint_edges_not_connected() {
        let fam = GraphFamily::Custom { edges: vec![(0, 1), (2, 3)] };
        let g = build_graph(&fam, 4, None).unwrap();
        assert!(!g.is_connected());
        assert!(g.is_bipartite());
    }

    #[test]
    fn two_star_centers_at_ends() {
        let g = build_graph(&GraphFamily::TwoStar, 8, None).unwrap();
        let deg = g.degrees();
        assert_eq!(deg[0], 4);
        assert_eq!(deg[7], 4);
        assert!(g.has_edge(0, 7));
        assert_eq!(g.edge_count(), 7);
    }

    #[test]
    fn grid_edges_count() {
        let g = build_graph(&GraphFamily::Grid { dim: 2 }, 16, None).unwrap();
        assert_eq!(g.edge_count(), 2 * 4 * 3);
        let g3 = build_graph(&GraphFamily::Grid { dim: 3 }, 27, None).unwrap();
        assert_eq!(g3.edge_count(), 3 * 9 * 2);
        assert!(g3.is_connected());
    }

    #[test]
    fn tree_structure() {
        let g = build_graph(&GraphFamily::CompleteBinaryTree, 7, None).unwrap();
        assert_eq!(edge_set(&g), vec![(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);
    }

    #[test]
    fn invalid_params() {
        let bad = [
            (GraphFamily::StarryLine, 10),
            (GraphFamily::Grid { dim: 2 }, 15),
            (GraphFamily::CompleteBinaryTree, 8),
            (GraphFamily::RandomRegular { degree: 3 }, 5),
            (GraphFamily::RandomRegular { degree: 5 }, 5),
            (GraphFamily::ErdosRenyi { p: 0.0 }, 5),
            (GraphFamily::Line, 0),
        ];
        for (fam, n) in bad {
            assert!(matches!(build_graph(&fam, n, Some(1)), Err(Error::InvalidParam(_))), "{fam} n={n}");
        }
    }

    #[test]
    fn sparse_erdos_renyi_hits_retry_cap() {
        let err = build_graph(&GraphFamily::ErdosRenyi { p: 0.001 }, 50, Some(3)).unwrap_err();
        assert!(matches!(err, Error::GenerationFailed { attempts: ER_MAX_ATTEMPTS, .. }));
    }

    #[test]
    fn random_families_are_seeded() {
        for fam in [GraphFamily::ErdosRenyi { p: 0.3 }, GraphFamily::RandomRegular { degree: 4 }] {
            let a = build_graph(&fam, 30, Some(42)).unwrap();
            let b = build_graph(&fam, 30, Some(42)).unwrap();
            let c = build_graph(&fam, 30, Some(43)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.edges(), c.edges());
        }
    }

    #[test]
    fn random_regular_is_regular() {
        for (n, d) in [(10, 3), (20, 4), (31, 10), (12, 11)] {
            let g = build_graph(&GraphFamily::RandomRegular { degree: d }, n, Some(7)).unwrap();
            assert!(g.degrees().iter().all(|&x| x == d), "n={n} d={d}");
            assert!(g.is_connected());
        }
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let g = build_graph(&GraphFamily::StarryLine, 9, None).unwrap();
        let parsed = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(parsed.edges(), g.edges());
        assert!(Graph::parse_edge_list("3\n0 0\n").is_err());
        assert!(Graph::parse_edge_list("3\n0 1\n1 0\n").is_err());
        assert!(Graph::parse_edge_list("3\n0 5\n").is_err());
        assert!(Graph::parse_edge_list("x\n").is_err());
        let with_comments = Graph::parse_edge_list("# a path\n3\n0 1 # first\n\n1 2\n").unwrap();
        assert_eq!(with_comments.edge_count(), 2);
    }
}

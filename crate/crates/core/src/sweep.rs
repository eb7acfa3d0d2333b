//! Disagreement of lazy walks across graph sizes.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::disagreement::{squared_chain_analysis, theorem_value, NoiseCovariance};
use crate::error::{Error, Result};
use crate::graphs::{build_graph, GraphFamily};
use crate::io::{fmt_f64, write_metadata};
use crate::markov::lazy_walk_matrix;

pub const SWEEP_HEADER: [&str; 7] = [
    "family",
    "n",
    "delta_ss",
    "delta_uni_lower",
    "delta_uni_upper",
    "kemeny_p2",
    "max_resistance",
];

/// A node addressed from the front (`3`) or the back (`-1` is the last node).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRef {
    Index(usize),
    FromEnd(usize),
}

impl NodeRef {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            Self::Index(i) if i < n => Ok(i),
            Self::FromEnd(k) if k >= 1 && k <= n => Ok(n - k),
            _ => Err(Error::InvalidParam(format!("node {self} out of range for n = {n}"))),
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Index(i) => write!(f, "{i}"),
            Self::FromEnd(k) => write!(f, "-{k}"),
        }
    }
}

/// `i=s` with `i` a node index, negative counting from the end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeVariance {
    pub node: NodeRef,
    pub sigma2: f64,
}

impl FromStr for NodeVariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (node, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected i=s, got {s:?}")))?;
        let node = node.trim();
        let node = match node.strip_prefix('-') {
            Some(k) => NodeRef::FromEnd(k.parse().map_err(|_| Error::Parse(format!("bad node {node:?}")))?),
            None => NodeRef::Index(node.parse().map_err(|_| Error::Parse(format!("bad node {node:?}")))?),
        };
        let sigma2: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad variance {value:?}")))?;
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::NotPsd(format!("variance {sigma2}")));
        }
        Ok(Self { node, sigma2 })
    }
}

/// Per-node variances built from a base value, an optional explicit vector
/// and per-node overrides applied last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<NodeVariance>,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self::scalar(1.0)
    }
}

impl NoiseProfile {
    pub fn scalar(sigma2: f64) -> Self {
        Self { sigma2, vector: None, overrides: Vec::new() }
    }

    /// Zero everywhere except the listed nodes.
    pub fn only(nodes: &[(NodeRef, f64)]) -> Self {
        Self {
            sigma2: 0.0,
            vector: None,
            overrides: nodes.iter().map(|&(node, sigma2)| NodeVariance { node, sigma2 }).collect(),
        }
    }

    pub fn variances(&self, n: usize) -> Result<Vec<f64>> {
        let mut v = match &self.vector {
            Some(vec) if vec.len() != n => {
                return Err(Error::DimensionMismatch { expected: n, got: vec.len() });
            }
            Some(vec) => vec.clone(),
            None => vec![self.sigma2; n],
        };
        for o in &self.overrides {
            v[o.node.resolve(n)?] = o.sigma2;
        }
        Ok(v)
    }

    pub fn covariance(&self, n: usize) -> Result<NoiseCovariance> {
        NoiseCovariance::diagonal(self.variances(n)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub n: usize,
    pub delta_ss: f64,
    pub delta_uni_lower: f64,
    pub delta_uni_upper: f64,
    pub kemeny_p2: f64,
    pub max_resistance: f64,
}

/// Hitting-time disagreement of the lazy walk on `family` at size `n`.
pub fn sweep_row(family: &GraphFamily, n: usize, seed: Option<u64>, noise: &NoiseProfile) -> Result<SweepRow> {
    let g = build_graph(family, n, seed)?;
    let sw = noise.covariance(n)?;
    let name = family.name();
    if n == 1 {
        return Ok(SweepRow {
            family: name,
            n,
            delta_ss: 0.0,
            delta_uni_lower: 0.0,
            delta_uni_upper: 0.0,
            kemeny_p2: 0.0,
            max_resistance: 0.0,
        });
    }
    let p = lazy_walk_matrix(&g)?;
    let sq = squared_chain_analysis(&p)?;
    let delta = theorem_value(&sq, &sw)?;
    let nf = n as f64;
    Ok(SweepRow {
        family: name,
        n,
        delta_ss: delta,
        delta_uni_lower: delta / (nf * sq.pi.max()),
        delta_uni_upper: delta / (nf * sq.pi.min()),
        kemeny_p2: sq.kemeny,
        max_resistance: sq.max_resistance().unwrap_or(0.0),
    })
}

/// One result per size, in the order given. Failures do not stop the sweep.
pub fn sweep(
    family: &GraphFamily,
    sizes: &[usize],
    seed: Option<u64>,
    noise: &NoiseProfile,
) -> Vec<(usize, Result<SweepRow>)> {
    sizes
        .par_iter()
        .map(|&n| (n, sweep_row(family, n, seed, noise)))
        .collect()
}

/// Header plus one row per success; failures become `# error` comments in
/// row order.
pub fn write_sweep_csv<W: Write>(
    mut w: W,
    family: &str,
    rows: &[(usize, Result<SweepRow>)],
    config: Option<&Value>,
) -> Result<()> {
    if let Some(c) = config {
        write_metadata(&mut w, c)?;
    }
    writeln!(w, "{}", SWEEP_HEADER.join(","))?;
    for (n, row) in rows {
        match row {
            Ok(r) => writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.family,
                r.n,
                fmt_f64(r.delta_ss),
                fmt_f64(r.delta_uni_lower),
                fmt_f64(r.delta_uni_upper),
                fmt_f64(r.kemeny_p2),
                fmt_f64(r.max_resistance)
            )?,
            Err(e) => writeln!(w, "# error {family} n={n}: {e}")?,
        }
    }
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Parse(format!("unexpected sweep header {header:?}")));
    }
    rd.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use noisy_consensus::graphs::{build_graph, Graph, GraphFamily};
use noisy_consensus::io::read_vector;
use noisy_consensus::markov::{lazy_walk_matrix, simple_walk_matrix, StochasticMatrix};
use noisy_consensus::simulate::{BurnIn, NoiseDistribution, SimConfig};
use noisy_consensus::sweep::NoiseProfile;
use noisy_consensus::{Error, Result};

use crate::args::{Distribution, GraphArgs, NoiseArgs, RunArgs, Walk};

/// Family from its command-line name.
pub fn parse_family(name: &str, p: Option<f64>, degree: Option<usize>) -> Result<GraphFamily> {
    let fam = match name {
        "complete" => GraphFamily::Complete,
        "line" | "path" => GraphFamily::Line,
        "ring" | "cycle" => GraphFamily::Ring,
        "star" => GraphFamily::Star,
        "two-star" => GraphFamily::TwoStar,
        "starry-line" => GraphFamily::StarryLine,
        "tree" | "complete-binary-tree" => GraphFamily::CompleteBinaryTree,
        "er" | "erdos-renyi" => GraphFamily::ErdosRenyi {
            p: p.ok_or_else(|| Error::InvalidParam("erdos-renyi needs --p".into()))?,
        },
        "regular" | "random-regular" => GraphFamily::RandomRegular {
            degree: degree.ok_or_else(|| Error::InvalidParam("random-regular needs --degree".into()))?,
        },
        other => match other.strip_prefix("grid").map(str::parse::<u32>) {
            Some(Ok(dim)) if dim >= 1 => GraphFamily::Grid { dim },
            _ => return Err(Error::InvalidParam(format!("unknown family {other:?}"))),
        },
    };
    Ok(fam)
}

/// Family name and graph described by the graph flags.
pub fn resolve_graph(args: &GraphArgs) -> Result<(String, Graph)> {
    let is_custom = matches!(args.family.as_deref(), Some("custom")) || (args.family.is_none() && args.edges.is_some());
    if is_custom {
        let path = args
            .edges
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("custom family needs --edges".into()))?;
        let g = Graph::read_edge_list(path)?;
        if let Some(n) = args.n {
            if n != g.n() {
                return Err(Error::DimensionMismatch { expected: g.n(), got: n });
            }
        }
        if !g.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        return Ok(("custom".into(), g));
    }
    let name = args
        .family
        .as_deref()
        .ok_or_else(|| Error::InvalidParam("--family is required".into()))?;
    let fam = parse_family(name, args.p, args.degree)?;
    let n = args.n.ok_or_else(|| Error::InvalidParam("--n is required".into()))?;
    let g = build_graph(&fam, n, Some(args.seed))?;
    Ok((fam.name(), g))
}

pub fn walk_matrix(g: &Graph, walk: Walk) -> Result<StochasticMatrix> {
    match walk {
        Walk::Lazy => lazy_walk_matrix(g),
        Walk::Simple => simple_walk_matrix(g),
    }
}

pub fn noise_profile(args: &NoiseArgs) -> Result<NoiseProfile> {
    if !(args.sigma2.is_finite() && args.sigma2 >= 0.0) {
        return Err(Error::NotPsd(format!("variance {}", args.sigma2)));
    }
    let vector = match &args.sigma2_vec {
        Some(path) => {
            let v = read_vector(File::open(path)?)?;
            if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::NotPsd(format!("variance {bad}")));
            }
            Some(v)
        }
        None => None,
    };
    Ok(NoiseProfile { sigma2: args.sigma2, vector, overrides: args.sigma2_node.clone() })
}

pub fn sim_config(args: &RunArgs, seed: u64) -> Result<SimConfig> {
    let burn_in = match args.burn_in.trim() {
        "auto" => BurnIn::Auto,
        s => BurnIn::Steps(
            s.parse()
                .map_err(|_| Error::InvalidParam(format!("--burn-in must be `auto` or a step count, got {s:?}")))?,
        ),
    };
    let cfg = SimConfig {
        horizon: args.horizon,
        trials: args.trials,
        burn_in,
        seed,
        record_every: args.record_every,
        noise: match args.distribution {
            Distribution::Gaussian => NoiseDistribution::Gaussian,
            Distribution::Rademacher => NoiseDistribution::Rademacher,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Serialized arguments plus resolved values under `resolved`.
pub fn config_value<T: serde::Serialize>(args: &T, resolved: Value) -> Result<Value> {
    let mut v = serde_json::to_value(args)?;
    if let Value::Object(map) = &mut v {
        map.insert("resolved".into(), resolved);
    }
    Ok(v)
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `(a - b) / s`, or 0 when both the difference and `s` vanish.
pub fn z_score(a: f64, b: f64, s: f64) -> f64 {
    if s > 0.0 {
        (a - b) / s
    } else if a == b {
        0.0
    } else {
        f64::INFINITY.copysign(a - b)
    }
}

use std::fs::File;
use std::io::Write;

use nalgebra::DVector;
use serde_json::{json, Map, Value};

use noisy_consensus::disagreement::{
    delta_oracle, delta_ss_bounds, delta_ss_diag, delta_ss_kemeny, delta_ss_resistance, delta_ss_spectral,
    delta_ss_theorem, squared_chain_analysis, DisagreementReport, NoiseCovariance, OracleOptions,
};
use noisy_consensus::formation::{form_exact, form_via_delta, simulate_formation, FormationNoise, FormationSpec};
use noisy_consensus::io::{read_matrix_csv, with_metadata, write_trace_csv, write_trajectory_csv};
use noisy_consensus::markov::{kemeny_constant_combinatorial, StochasticMatrix};
use noisy_consensus::simulate::run_consensus;
use noisy_consensus::sweep::{sweep, write_sweep_csv};
use noisy_consensus::{Error, Result};

use crate::args::{AnalyzeArgs, FormationArgs, SimulateArgs, SweepArgs};
use crate::common::{
    config_value, noise_profile, open_output, parse_family, resolve_graph, sim_config, walk_matrix, write_json, z_score,
};

/// Default formation noise variance, `lambda = 1/50`.
const DEFAULT_LAMBDA2: f64 = 1.0 / 2500.0;

fn chain_flags(p: &StochasticMatrix) -> Value {
    json!({
        "irreducible": p.is_irreducible(),
        "aperiodic": p.is_aperiodic(),
        "period": p.period(),
        "reversible": p.is_reversible(),
        "symmetric": p.is_symmetric(),
    })
}

/// Common variance when the covariance is `s I`.
fn scalar_variance(sw: &NoiseCovariance) -> Option<f64> {
    if !sw.is_diagonal() {
        return None;
    }
    let v = sw.variances();
    let first = *v.first()?;
    v.iter().all(|&x| x == first).then_some(first)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let (family, p) = match &args.matrix {
        Some(path) => ("matrix".to_string(), StochasticMatrix::new(read_matrix_csv(File::open(path)?)?)?),
        None => {
            let (name, g) = resolve_graph(&args.graph)?;
            let p = walk_matrix(&g, args.walk)?;
            (name, p)
        }
    };
    let n = p.n();
    let sw = match &args.covariance {
        Some(path) => NoiseCovariance::full(read_matrix_csv(File::open(path)?)?)?,
        None => noise_profile(&args.noise)?.covariance(n)?,
    };
    if sw.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sw.n() });
    }
    let config = config_value(
        args,
        json!({ "family": family, "n": n, "seed": args.graph.seed, "noise_variances": sw.variances() }),
    )?;

    let mut body = Map::new();
    body.insert("n".into(), json!(n));
    body.insert("family".into(), json!(family));
    body.insert("seed".into(), json!(args.graph.seed));
    body.insert("chain".into(), chain_flags(&p));

    if n == 1 {
        body.insert("pi".into(), json!([1.0]));
        body.insert("kemeny_p".into(), json!(0.0));
        body.insert("kemeny_p2".into(), json!(0.0));
        body.insert("methods".into(), json!([]));
        body.insert("delta_ss".into(), json!({ "value": 0.0 }));
        body.insert("delta_uni_lower".into(), json!(0.0));
        body.insert("delta_uni_upper".into(), json!(0.0));
        return write_json(args.out.as_deref(), &with_metadata(Value::Object(body), &config));
    }

    p.require_ergodic()?;
    let pi = p.stationary_distribution()?;
    let sq = squared_chain_analysis(&p)?;
    body.insert("pi".into(), json!(pi.as_slice()));
    body.insert("kemeny_p".into(), json!(kemeny_constant_combinatorial(&p)?));
    body.insert("kemeny_p2".into(), json!(sq.kemeny));
    body.insert("max_hitting_time_p2".into(), json!(sq.max_hitting_time()));
    body.insert("max_resistance_p2".into(), json!(sq.max_resistance()));

    let reversible = p.is_reversible();
    let symmetric = p.is_symmetric();
    let run_oracle = !reversible || n <= args.oracle_cap;
    let mut values = Map::new();
    let mut notes: Vec<String> = Vec::new();
    let mut primary: Option<DisagreementReport> = None;

    if reversible {
        let report = delta_ss_theorem(&p, &sw)?;
        values.insert("theorem1".into(), json!(report.delta_ss));
        if sw.is_diagonal() {
            let vars = sw.variances();
            values.insert("diagonal".into(), json!(delta_ss_diag(&p, &vars)?));
            let (lo, hi) = delta_ss_bounds(&p, &vars)?;
            body.insert("delta_ss_bounds".into(), json!([lo, hi]));
        }
        primary = Some(report);
    } else {
        notes.push("chain is not reversible; hitting-time formulas skipped".into());
    }
    if symmetric {
        match scalar_variance(&sw) {
            Some(s) => {
                values.insert("kemeny".into(), json!(delta_ss_kemeny(&p, s)?));
                values.insert("spectral".into(), json!(delta_ss_spectral(&p, s)?));
                values.insert("resistance".into(), json!(delta_ss_resistance(&p, s)?));
            }
            None => notes.push("noise is not a multiple of I; kemeny, spectral and resistance forms skipped".into()),
        }
    }
    let mut delta_uni_exact = None;
    if run_oracle {
        let (_, report) = delta_oracle(&p, &sw, OracleOptions::default())?;
        values.insert("oracle".into(), json!(report.delta_ss));
        body.insert("oracle_iterations".into(), json!(report.diagnostics.iterations));
        delta_uni_exact = report.delta_uni_exact;
        if primary.is_none() {
            primary = Some(report);
        }
    } else {
        notes.push(format!("n = {n} exceeds --oracle-cap {}; oracle skipped", args.oracle_cap));
    }
    let primary = primary.ok_or_else(|| Error::Numerical("no applicable method".into()))?;

    let methods: Vec<&String> = values.keys().collect();
    body.insert("methods".into(), json!(methods));
    let reference = primary.delta_ss;
    let spread = values
        .values()
        .filter_map(Value::as_f64)
        .map(|v| (v - reference).abs() / reference.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    values.insert("value".into(), json!(reference));
    body.insert("delta_ss".into(), Value::Object(values));
    body.insert("primary_method".into(), json!(primary.method));
    body.insert("max_relative_spread".into(), json!(spread));
    body.insert("delta_uni_lower".into(), json!(primary.delta_uni_lower));
    body.insert("delta_uni_upper".into(), json!(primary.delta_uni_upper));
    if let Some(u) = delta_uni_exact {
        body.insert("delta_uni_exact".into(), json!(u));
    }
    body.insert("notes".into(), json!(notes));
    write_json(args.out.as_deref(), &with_metadata(Value::Object(body), &config))
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let name = args
        .graph
        .family
        .as_deref()
        .ok_or_else(|| Error::InvalidParam("--family is required".into()))?;
    let family = parse_family(name, args.graph.p, args.graph.degree)?;
    if args.sizes.is_empty() {
        return Err(Error::InvalidParam("--sizes is empty".into()));
    }
    let noise = noise_profile(&args.noise)?;
    let rows = sweep(&family, &args.sizes, Some(args.graph.seed), &noise);
    let failures: Vec<String> = rows
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("n={n}: {e}")))
        .collect();
    for f in &failures {
        eprintln!("warning: {f}");
    }
    let config = config_value(args, json!({ "family": family.name(), "seed": args.graph.seed }))?;
    let mut out = open_output(args.out.as_deref())?;
    write_sweep_csv(&mut out, &family.name(), &rows, Some(&config))?;
    out.flush()?;
    if failures.len() == rows.len() {
        let (_, first) = rows.into_iter().next().expect("sizes is non-empty");
        return Err(first.expect_err("every row failed"));
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let (family, g) = resolve_graph(&args.graph)?;
    let p = walk_matrix(&g, args.walk)?;
    let n = p.n();
    let sw = noise_profile(&args.noise)?.covariance(n)?;
    let cfg = sim_config(&args.run, args.graph.seed)?;
    let run = run_consensus(&p, &sw, &DVector::zeros(n), &cfg)?;
    let config = config_value(
        args,
        json!({ "family": family, "n": n, "seed": cfg.seed, "burn_in": run.estimate.burn_in }),
    )?;
    if let Some(path) = &args.out {
        let mut w = open_output(Some(path))?;
        write_trace_csv(&mut w, &run.trace, Some(&config))?;
        w.flush()?;
    }
    let mut body = json!({
        "n": n,
        "family": family,
        "seed": cfg.seed,
        "estimate": run.estimate,
    });
    if p.is_reversible() {
        let exact = delta_ss_theorem(&p, &sw)?.delta_ss;
        body["delta_ss_exact"] = json!(exact);
        body["z"] = json!(z_score(run.estimate.delta_ss, exact, run.estimate.stderr));
    }
    write_json(args.summary.as_deref(), &with_metadata(body, &config))
}

fn formation_spec(args: &FormationArgs) -> Result<(String, FormationSpec)> {
    let lambda2 = match (args.lambda, args.lambda2) {
        (Some(l), _) => Some(l * l),
        (None, l2) => l2,
    };
    if let Some(l2) = lambda2 {
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::InvalidParam(format!("noise variance {l2}")));
        }
    }
    if args.demo {
        return Ok(("ring-demo".into(), FormationSpec::ring_demo(lambda2.unwrap_or(DEFAULT_LAMBDA2))?));
    }
    if let Some(path) = &args.spec {
        let spec = FormationSpec::load_json(path)?;
        let spec = match lambda2 {
            Some(l2) => spec.with_noise(FormationNoise::Uniform(l2))?,
            None => spec,
        };
        return Ok(("spec".into(), spec));
    }
    if args.dim == 0 {
        return Err(Error::InvalidParam("--dim must be at least 1".into()));
    }
    let (name, g) = resolve_graph(&args.graph)?;
    let positions = noisy_consensus::formation::layout_positions(&g, args.dim);
    let spec = FormationSpec::from_positions(
        g,
        &positions,
        noisy_consensus::formation::WeightSpec::Default,
        FormationNoise::Uniform(lambda2.unwrap_or(DEFAULT_LAMBDA2)),
    )?;
    Ok((name, spec))
}

pub fn formation(args: &FormationArgs) -> Result<()> {
    let (source, spec) = formation_spec(args)?;
    let n = spec.n();
    let via_delta = form_via_delta(&spec)?;
    let exact = match spec.noise().uniform() {
        Some(_) => Some(form_exact(&spec)?),
        None => None,
    };
    let mut resolved = json!({
        "source": source,
        "n": n,
        "dim": spec.dim(),
        "seed": args.graph.seed,
        "spec": spec.to_json(),
    });
    let mut body = json!({
        "n": n,
        "dim": spec.dim(),
        "source": source,
        "seed": args.graph.seed,
        "form_exact": via_delta,
    });
    if let Some(r) = &exact {
        body["form_exact"] = json!(r.form_exact);
        body["kemeny_p2"] = json!(r.kemeny_p2);
    }
    body["form_via_delta"] = json!(via_delta);

    if !args.exact_only {
        let cfg = sim_config(&args.run, args.graph.seed)?;
        let run = simulate_formation(&spec, &cfg, None)?;
        resolved["burn_in"] = json!(run.burn_in);
        body["form_simulated"] = json!(run.form_simulated);
        body["form_stderr"] = json!(run.stderr);
        body["burn_in"] = json!(run.burn_in);
        body["trials"] = json!(cfg.trials);
        let reference = body["form_exact"].as_f64().unwrap_or(via_delta);
        body["z"] = json!(z_score(run.form_simulated, reference, run.stderr));
        let config = config_value(args, resolved.clone())?;
        if let Some(path) = &args.out {
            let mut w = open_output(Some(path))?;
            write_trajectory_csv(&mut w, &run.trajectory, Some(&config))?;
            w.flush()?;
        }
    } else if args.out.is_some() {
        return Err(Error::InvalidParam("--out needs a simulation; drop --exact-only".into()));
    }
    let config = config_value(args, resolved)?;
    write_json(args.summary.as_deref(), &with_metadata(body, &config))
}

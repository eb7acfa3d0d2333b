use nalgebra::DVector;

use noisy_consensus::disagreement::{
    check_j_properties, delta_oracle, delta_ss_diag, delta_ss_kemeny, delta_ss_resistance, delta_ss_spectral,
    delta_ss_theorem, NoiseCovariance, OracleOptions,
};
use noisy_consensus::formation::{form_exact, form_via_delta, FormationSpec};
use noisy_consensus::graphs::{build_graph, GraphFamily};
use noisy_consensus::markov::{
    effective_resistance, hitting_times, hitting_times_per_target, kemeny_constant_combinatorial,
    kemeny_constant_spectral, lazy_walk_matrix, simple_walk_matrix, StochasticMatrix,
};
use noisy_consensus::simulate::{divergence_probe, simulate_consensus, BurnIn, SimConfig};
use noisy_consensus::{Error, Result};

use crate::args::SelftestArgs;

struct Check {
    name: &'static str,
    outcome: Result<String>,
    passed: bool,
}

fn lazy(family: GraphFamily, n: usize, seed: u64) -> Result<StochasticMatrix> {
    lazy_walk_matrix(&build_graph(&family, n, Some(seed))?)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn j_properties(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut ok = true;
    for p in [
        lazy(GraphFamily::Ring, 7, seed)?,
        lazy(GraphFamily::Star, 6, seed)?,
        lazy(GraphFamily::ErdosRenyi { p: 0.4 }, 10, seed)?,
    ] {
        let report = check_j_properties(&p, 1e-9)?;
        ok &= report.all_passed();
        worst = report
            .checks
            .iter()
            .filter(|c| !c.name.starts_with("rho"))
            .map(|c| c.residual)
            .fold(worst, f64::max);
    }
    Ok((ok, format!("max residual {worst:.2e}")))
}

fn symmetric_forms() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (fam, n) in [(GraphFamily::Ring, 9), (GraphFamily::Complete, 6), (GraphFamily::RandomRegular { degree: 3 }, 10)] {
        let p = lazy(fam, n, 0)?;
        let t = delta_ss_theorem(&p, &NoiseCovariance::scalar(n, 1.0)?)?.delta_ss;
        for v in [
            delta_ss_kemeny(&p, 1.0)?,
            delta_ss_spectral(&p, 1.0)?,
            delta_ss_resistance(&p, 1.0)?,
            delta_ss_diag(&p, &vec![1.0; n])?,
        ] {
            worst = worst.max(rel(v, t));
        }
    }
    Ok((worst <= 1e-9, format!("max relative gap {worst:.2e}")))
}

fn oracle_agreement(seed: u64) -> Result<(bool, String)> {
    let p = lazy(GraphFamily::ErdosRenyi { p: 0.35 }, 9, seed)?;
    let sw = NoiseCovariance::diagonal((0..9).map(|i| 0.5 + i as f64 / 4.0).collect())?;
    let t = delta_ss_theorem(&p, &sw)?.delta_ss;
    let (_, o) = delta_oracle(&p, &sw, OracleOptions::default())?;
    let gap = rel(o.delta_ss, t);
    Ok((gap <= 1e-8, format!("relative gap {gap:.2e}")))
}

fn kemeny_and_resistance() -> Result<(bool, String)> {
    let p = lazy(GraphFamily::Star, 9, 0)?;
    let kc = kemeny_constant_combinatorial(&p)?;
    let ks = kemeny_constant_spectral(&p)?;
    let h = hitting_times(&p)?;
    let h2 = hitting_times_per_target(&p)?;
    let r = effective_resistance(&p)?;
    let k_gap = rel(ks, kc);
    let h_gap = (&h - &h2).amax() / h.amax();
    let r_gap = (&r - (&h + h.transpose())).amax();
    let ok = k_gap <= 1e-9 && h_gap <= 1e-9 && r_gap <= 1e-9 * r.amax();
    Ok((ok, format!("kemeny {k_gap:.2e}, hitting {h_gap:.2e}, resistance {r_gap:.2e}")))
}

fn formation_routes() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for spec in [FormationSpec::star(7, 2, 0.0004)?, FormationSpec::tree(7, 2, 0.0004)?, FormationSpec::ring_demo(1.0)?] {
        worst = worst.max(rel(form_via_delta(&spec)?, form_exact(&spec)?.form_exact));
    }
    Ok((worst <= 1e-9, format!("max relative gap {worst:.2e}")))
}

fn periodic_divergence() -> Result<(bool, String)> {
    let g = build_graph(&GraphFamily::Ring, 6, None)?;
    let p = simple_walk_matrix(&g)?;
    let sw = NoiseCovariance::scalar(6, 1.0)?;
    let rejected = matches!(delta_ss_theorem(&p, &sw), Err(Error::Periodic { period: 2 }));
    let traces = divergence_probe(&p, &sw, 400)?;
    let growth = traces[400] / traces[200];
    Ok((rejected && growth > 1.5, format!("period-2 rejected: {rejected}, trace growth {growth:.3}")))
}

fn reproducible(seed: u64) -> Result<(bool, String)> {
    let p = lazy(GraphFamily::Line, 6, 0)?;
    let sw = NoiseCovariance::scalar(6, 1.0)?;
    let cfg = SimConfig { horizon: 200, trials: 4, burn_in: BurnIn::Steps(50), seed, record_every: 10, ..Default::default() };
    let x0 = DVector::zeros(6);
    let same = simulate_consensus(&p, &sw, &x0, &cfg)? == simulate_consensus(&p, &sw, &x0, &cfg)?;
    Ok((same, "identical traces for a fixed seed".into()))
}

/// Prints one line per check; returns whether all passed.
pub fn run(args: &SelftestArgs) -> Result<bool> {
    let checks: Vec<(&'static str, Result<(bool, String)>)> = vec![
        ("J-matrix identities", j_properties(args.seed)),
        ("symmetric closed forms", symmetric_forms()),
        ("covariance oracle", oracle_agreement(args.seed)),
        ("kemeny, hitting, resistance", kemeny_and_resistance()),
        ("formation routes", formation_routes()),
        ("periodic divergence", periodic_divergence()),
        ("seeded reproducibility", reproducible(args.seed)),
    ];
    let results: Vec<Check> = checks
        .into_iter()
        .map(|(name, r)| match r {
            Ok((passed, detail)) => Check { name, outcome: Ok(detail), passed },
            Err(e) => Check { name, outcome: Err(e), passed: false },
        })
        .collect();
    for c in &results {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        match &c.outcome {
            Ok(detail) => println!("[{tag}] {}: {detail}", c.name),
            Err(e) => println!("[{tag}] {}: error: {e}", c.name),
        }
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    println!("selftest: {}/{} passed", results.len() - failed, results.len());
    Ok(failed == 0)
}

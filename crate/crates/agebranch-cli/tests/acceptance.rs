//! The full acceptance run. Each criterion prints one PASS or FAIL line to stderr,
//! then the test fails if any criterion did.

#[path = "../../agebranch/tests/support/fpe_checks.rs"]
mod fpe_checks;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use agebranch::dist::{LifetimeLaw, OffspringLaw, QuadratureOptions};
use agebranch::fpe::{iterate_phi, scaled_certificate_from_classical, scaling_residual, survival_probability, ProcessSpec, SolverOptions, TimeGrid};
use agebranch::minsum::{sample_min_naive, sample_min_shortcut};
use agebranch::sim::{davies_growth_diagnostic, exploding_path_search, minimal_path_m};
use agebranch::stats::{ks_critical_two_sided, ks_two_sample, sorted};
use agebranch::{trial_rng, Exec};
use agebranch_cli::config::RunConfig;
use agebranch_cli::{cmd_compare, cmd_minsum, cmd_solve, Exit, Format};
use serde_json::{json, Value};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn heavy(alpha: f64) -> OffspringLaw {
    OffspringLaw::HeavyTailAlpha { alpha }
}

fn grey() -> LifetimeLaw {
    LifetimeLaw::GreyFlat { ell: 1.0, beta: 1.0 }
}

fn exp1() -> LifetimeLaw {
    LifetimeLaw::Exponential { lambda: 1.0 }
}

/// Runs a command on `config` with JSON written to `dir`; returns the exit and the result object.
fn run(dir: &Path, name: &str, config: Value, cmd: fn(&RunConfig) -> Result<agebranch_cli::Outcome, agebranch_cli::CliError>) -> Result<(Exit, Value), String> {
    let mut c = RunConfig::from_json(&config.to_string()).map_err(|e| e.to_string())?;
    let out = dir.join(format!("{name}.json"));
    c.output.path = Some(out.clone());
    c.output.format = Format::Json;
    let outcome = cmd(&c).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((outcome.exit, v["result"].clone()))
}

fn spec_json(spec: &ProcessSpec) -> Value {
    serde_json::to_value(spec).unwrap()
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took < limit { Ok(()) } else { Err(format!("took {took:.1?}, limit {limit:?}")) }
}

fn grey_explosive(dir: &Path) -> Check {
    let start = Instant::now();
    let spec = ProcessSpec::Classical { offspring: heavy(0.5), lifetime: grey() };
    let (exit, r) = run(dir, "c1", json!({"process": spec_json(&spec), "grid": {"dt": 1e-3, "horizon": 1.0}}), cmd_solve)?;
    within(Duration::from_secs(30), start)?;
    let mass = r["explosion_mass"].as_f64().unwrap_or(f64::NAN);
    if exit == Exit::Success && r["verdict"] == "explosive" && mass > 0.01 {
        Ok(format!("explosive, 1 - phi(1) = {mass:.4e}, {:.1?}", start.elapsed()))
    } else {
        Err(format!("exit {exit:?}, verdict {}, 1 - phi(1) = {mass}", r["verdict"]))
    }
}

fn gamma_threshold(dir: &Path) -> Check {
    let mut seen = Vec::new();
    for (gamma, want) in [(0.5, "explosive"), (1.0, "conservative"), (1.5, "conservative")] {
        for alpha in [0.3, 0.5, 0.8] {
            let spec = ProcessSpec::Classical { offspring: heavy(alpha), lifetime: LifetimeLaw::DoubleExpFlat { k: 1.0, gamma } };
            let config = json!({"process": spec_json(&spec), "minsum": {"alphas": [0.3, 0.5, 0.8]}});
            let (exit, r) = run(dir, &format!("c2_{gamma}_{alpha}"), config, cmd_minsum)?;
            if r["verdict"] != want || exit != Exit::Success || r["alpha_scan"]["violation"] != false {
                return Err(format!("gamma {gamma}, alpha {alpha}: {} (exit {exit:?}, scan {})", r["verdict"], r["alpha_scan"]));
            }
        }
        seen.push(format!("gamma {gamma} {want}"));
    }
    Ok(seen.join(", "))
}

fn contagion_keeps_explosion(dir: &Path) -> Check {
    // the contagious solution needs more room than the classical one to clear the threshold
    let grid = TimeGrid::new(1e-3, 2.0).unwrap();
    let opts = SolverOptions::default();
    let classical = ProcessSpec::Classical { offspring: heavy(0.5), lifetime: grey() };
    let forward = ProcessSpec::ForwardContagious { offspring: heavy(0.5), lifetime: grey(), contagious: exp1() };
    let phi = iterate_phi(&classical, grid, &opts).map_err(|e| e.to_string())?;
    let psi = scaled_certificate_from_classical(&phi, 0.5, &forward, opts.tol).map_err(|e| e.to_string())?;
    let (_, r) = run(dir, "c3", json!({"process": spec_json(&forward), "grid": {"dt": 1e-3, "horizon": 2.0}}), cmd_solve)?;
    if r["verdict"] != "explosive" {
        return Err(format!("certificate found but solve says {}", r["verdict"]));
    }
    let scale = psi.scale.unwrap_or(f64::NAN);
    Ok(format!("certificate at scale {scale}, solve explosive with 1 - phi(2) = {:.4e}", r["explosion_mass"].as_f64().unwrap_or(f64::NAN)))
}

fn domination(dir: &Path, name: &str, spec: &ProcessSpec, seed: u64) -> Check {
    let start = Instant::now();
    let config = json!({"process": spec_json(spec), "sim": {"trials": 2000, "cap": 10_000, "master_seed": seed, "level": 0.01}});
    let (exit, r) = run(dir, name, config, cmd_compare)?;
    within(Duration::from_secs(120), start)?;
    let d = &r["domination"];
    let detail = format!("gap {:.4} vs critical {:.4}, {:.1?}", d["max_gap"].as_f64().unwrap_or(f64::NAN), d["critical_value"].as_f64().unwrap_or(f64::NAN), start.elapsed());
    if exit == Exit::Success && d["violated"] == false { Ok(detail) } else { Err(detail) }
}

fn incubation_necessity(dir: &Path) -> Check {
    let spec = ProcessSpec::ForwardIncubation { offspring: heavy(0.5), lifetime: exp1(), incubation: LifetimeLaw::Deterministic { c: 0.1 } };
    let (_, r) = run(dir, "c6", json!({"process": spec_json(&spec), "grid": {"dt": 1e-3, "horizon": 1.0}}), cmd_solve)?;
    let mass = r["explosion_mass"].as_f64().unwrap_or(f64::NAN);
    let ok = r["verdict"] == "conservative" || (r["verdict"] == "inconclusive" && mass <= SolverOptions::default().tol);
    let detail = format!("{}, 1 - phi(1) = {mass:.3e}", r["verdict"].as_str().unwrap_or("?"));
    if ok { Ok(detail) } else { Err(detail) }
}

fn fpe_suite() -> Check {
    let grid = TimeGrid::new(0.01, 1.0).unwrap();
    let opts = SolverOptions::default();
    let mut failures = Vec::new();
    for seed in 0..20 {
        let spec = fpe_checks::random_forward_spec(&mut trial_rng(2024, seed));
        for v in fpe_checks::fpe_violations(&spec, grid, &opts) {
            failures.push(format!("seed {seed}: {v}"));
        }
    }
    if failures.is_empty() { Ok("20 specs, zero failures".into()) } else { Err(failures.join("; ")) }
}

fn scaling_identity() -> Check {
    let opts = SolverOptions::default();
    let spec = ProcessSpec::Classical { offspring: heavy(0.5), lifetime: grey() };
    let phi = iterate_phi(&spec, TimeGrid::new(1e-3, 1.0).unwrap(), &opts).map_err(|e| e.to_string())?;
    let mut worst = Vec::new();
    for c in [0.5, 0.8] {
        let r = scaling_residual(&spec, &phi, c).map_err(|e| e.to_string())?;
        if r.is_nan() || r >= 10.0 * opts.tol {
            return Err(format!("c = {c}: residual {r:e}"));
        }
        worst.push(format!("c = {c}: {r:.2e}"));
    }
    Ok(worst.join(", "))
}

fn survival() -> Check {
    let opts = QuadratureOptions::default();
    for alpha in [0.3, 0.5, 0.8] {
        let r = survival_probability(&ProcessSpec::Classical { offspring: heavy(alpha), lifetime: exp1() }, &opts).map_err(|e| e.to_string())?;
        if (r.eta_infinity - 1.0).abs() > 1e-9 {
            return Err(format!("alpha {alpha}: eta = {}", r.eta_infinity));
        }
    }
    let closed = ProcessSpec::ForwardContagious { offspring: heavy(0.5), lifetime: exp1(), contagious: LifetimeLaw::Deterministic { c: 0.0 } };
    let r = survival_probability(&closed, &opts).map_err(|e| e.to_string())?;
    if r.eta_infinity.abs() > 1e-9 {
        return Err(format!("closed contagion: eta = {}", r.eta_infinity));
    }
    Ok("classical eta = 1, zero contagion eta = 0".into())
}

fn shortcut_ks() -> Check {
    const DRAWS: usize = 10_000;
    let crit = ks_critical_two_sided(0.001, DRAWS, DRAWS);
    let mut worst: f64 = 0.0;
    for g in [exp1(), grey()] {
        for m in [2u64, 5, 10] {
            let mut rng = trial_rng(31, m);
            let fast = sorted((0..DRAWS).map(|_| sample_min_shortcut(&g, (m as f64).ln(), &mut rng)).collect());
            let slow = sorted((0..DRAWS).map(|_| sample_min_naive(&g, m, &mut rng)).collect());
            let d = ks_two_sample(&fast, &slow);
            if d >= crit {
                return Err(format!("{g:?}, M = {m}: D = {d:.4} >= {crit:.4}"));
            }
            worst = worst.max(d);
        }
    }
    Ok(format!("largest D {worst:.4} vs critical {crit:.4}"))
}

fn davies() -> Check {
    let h = heavy(0.5);
    let a = davies_growth_diagnostic(&h, 0.5, 100, 10, 1, Exec::default()).map_err(|e| e.to_string())?;
    let b = davies_growth_diagnostic(&h, 0.5, 100, 10, 2, Exec::default()).map_err(|e| e.to_string())?;
    let (fa, fb) = (a.stabilized_fraction, b.stabilized_fraction);
    let detail = format!("stabilized {fa:.2} and {fb:.2}");
    if fa >= 0.8 && fb >= 0.8 && (fa - fb).abs() < 0.1 { Ok(detail) } else { Err(detail) }
}

fn path_search() -> Check {
    let delta = 0.2;
    let spec = ProcessSpec::ForwardIncubation { offspring: heavy(0.5), lifetime: exp1(), incubation: LifetimeLaw::Uniform { a: 0.0, b: delta } };
    let m = 1.01 * minimal_path_m(0.5, 0.5 * (-delta).exp());
    let mut successes = 0;
    for run in 0..100 {
        let r = exploding_path_search(&spec, delta, m, 25, &mut trial_rng(12, run)).map_err(|e| e.to_string())?;
        if r.success {
            successes += 1;
            match r.last_increment {
                Some(x) if x < 1e-3 => {}
                other => return Err(format!("run {run} succeeded with last increment {other:?}")),
            }
        }
    }
    if successes > 0 { Ok(format!("{successes} of 100 runs found a path")) } else { Err("no run found a path".into()) }
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let contagious = ProcessSpec::ForwardContagious { offspring: heavy(0.5), lifetime: exp1(), contagious: LifetimeLaw::Deterministic { c: 0.5 } };
    let incubation = ProcessSpec::ForwardIncubation { offspring: heavy(0.5), lifetime: exp1(), incubation: LifetimeLaw::Uniform { a: 0.0, b: 0.2 } };
    let criteria: Vec<Criterion> = vec![
        ("grey explosive solve", Box::new(|| grey_explosive(d))),
        ("gamma threshold across alpha", Box::new(|| gamma_threshold(d))),
        ("contagion keeps explosion", Box::new(|| contagion_keeps_explosion(d))),
        ("contagious domination", Box::new(|| domination(d, "c4", &contagious, 4))),
        ("incubation domination", Box::new(|| domination(d, "c5", &incubation, 5))),
        ("point-mass incubation is conservative", Box::new(|| incubation_necessity(d))),
        ("solver property suite", Box::new(fpe_suite)),
        ("scaling residual", Box::new(scaling_identity)),
        ("survival fixed points", Box::new(survival)),
        ("order-statistics shortcut", Box::new(shortcut_ks)),
        ("generation growth diagnostic", Box::new(davies)),
        ("exploding path search", Box::new(path_search)),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        match check() {
            Ok(detail) => writeln!(err, "criterion {n} ({name}): PASS {detail}").unwrap(),
            Err(detail) => {
                writeln!(err, "criterion {n} ({name}): FAIL {detail}").unwrap();
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

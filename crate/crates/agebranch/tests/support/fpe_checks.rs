//! Solver invariants checked on a forward spec together with its backward partner.
//! Shared by the property suite and the acceptance run.

use agebranch::dist::{LifetimeLaw, OffspringLaw};
use agebranch::fpe::{backward_excess, iterate_phi, iterate_with_law, DiscreteOperator, PhiTable, ProcessSpec, SolverOptions, TimeGrid};
use agebranch::Exec;
use rand::Rng;

const SLACK: f64 = 1e-12;

fn lifetime<R: Rng>(rng: &mut R) -> LifetimeLaw {
    match rng.random_range(0..3) {
        0 => LifetimeLaw::Exponential { lambda: rng.random_range(0.5..3.0) },
        1 => LifetimeLaw::GreyFlat { ell: rng.random_range(0.5..2.0), beta: rng.random_range(0.5..1.5) },
        _ => LifetimeLaw::Uniform { a: 0.0, b: rng.random_range(0.3..2.0) },
    }
}

fn period<R: Rng>(rng: &mut R) -> LifetimeLaw {
    match rng.random_range(0..3) {
        0 => LifetimeLaw::Exponential { lambda: rng.random_range(0.5..5.0) },
        1 => LifetimeLaw::Deterministic { c: rng.random_range(0.05..1.0) },
        _ => LifetimeLaw::Uniform { a: 0.0, b: rng.random_range(0.1..1.0) },
    }
}

/// A forward contagious or forward incubation spec with heavy-tailed offspring.
pub fn random_forward_spec<R: Rng>(rng: &mut R) -> ProcessSpec {
    let offspring = OffspringLaw::HeavyTailAlpha { alpha: rng.random_range(0.3..0.8) };
    let lifetime = lifetime(rng);
    if rng.random_bool(0.5) {
        ProcessSpec::ForwardContagious { offspring, lifetime, contagious: period(rng) }
    } else {
        ProcessSpec::ForwardIncubation { offspring, lifetime, incubation: period(rng) }
    }
}

/// Runs the iteration by hand and reports the first step where some eta grew.
fn monotone_in_k(spec: &ProcessSpec, grid: TimeGrid, opts: &SolverOptions) -> Result<(), String> {
    let op = DiscreteOperator::new(spec, grid);
    let mut eta = vec![1.0; grid.len()];
    for k in 1..=opts.max_iters {
        let next = op.apply_eta(&eta, Exec::Sequential);
        let mut residual = 0.0_f64;
        for (j, (n, e)) in next.iter().zip(&eta).enumerate() {
            if *n > e + SLACK {
                return Err(format!("{}: iterate {k} decreased phi at index {j} by {:e}", spec.name(), n - e));
            }
            residual = residual.max(e - n);
        }
        eta = next;
        if residual < opts.tol {
            return Ok(());
        }
    }
    Err(format!("{}: no convergence in {} iterations", spec.name(), opts.max_iters))
}

fn monotone_in_t(name: &str, phi: &PhiTable) -> Result<(), String> {
    match phi.values.windows(2).position(|w| w[1] > w[0] + SLACK) {
        Some(j) => Err(format!("{name}: phi increases between indices {j} and {}", j + 1)),
        None => Ok(()),
    }
}

/// All invariant violations for `forward` and its backward partner; empty when every check holds.
pub fn fpe_violations(forward: &ProcessSpec, grid: TimeGrid, opts: &SolverOptions) -> Vec<String> {
    let mut out = Vec::new();
    let backward = forward.partner().expect("forward specs have a partner");
    for spec in [forward, &backward] {
        if let Err(e) = monotone_in_k(spec, grid, opts) {
            out.push(e);
        }
    }
    let (phi_f, phi_b) = match (iterate_phi(forward, grid, opts), iterate_phi(&backward, grid, opts)) {
        (Ok(f), Ok(b)) => (f, b),
        (f, b) => {
            out.push(format!("solver failed: forward {:?}, backward {:?}", f.err(), b.err()));
            return out;
        }
    };
    for (name, phi) in [("forward", &phi_f), ("backward", &phi_b)] {
        if let Err(e) = monotone_in_t(name, phi) {
            out.push(e);
        }
    }

    let thinned = backward.thinned_law(&grid.quadrature()).expect("backward spec");
    match iterate_with_law(backward.offspring(), &thinned, grid, opts) {
        Ok(classical) if classical == phi_b => {}
        Ok(_) => out.push("backward table differs from the classical table with the thinned law".into()),
        Err(e) => out.push(format!("thinned classical solve failed: {e}")),
    }

    // a forward solution is a supersolution of the backward equation
    match backward_excess(forward, &phi_f) {
        Ok(x) if x <= 5.0 * opts.tol => {}
        Ok(x) => out.push(format!("forward solution exceeds the backward operator by {x:e}")),
        Err(e) => out.push(e.to_string()),
    }

    if let Some(j) = (0..grid.len()).find(|&j| phi_f.values[j] < phi_b.values[j] - 5.0 * opts.tol) {
        out.push(format!("phi_forward {} < phi_backward {} at index {j}", phi_f.values[j], phi_b.values[j]));
    }
    out
}

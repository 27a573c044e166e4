use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dist::OffspringLaw;
use crate::trial_rng;
use crate::Exec;

/// Generations larger than this are summed over a subsample and rescaled.
pub const DAVIES_SUBSAMPLE: u64 = 10_000;
const MAX_GENERATIONS: usize = 12;
const STABLE_WINDOW: usize = 3;
const STABLE_RELATIVE: f64 = 0.1;
/// Absolute slack so that trajectories converging to zero count as stable.
const STABLE_ABSOLUTE: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthDiagnostic {
    /// Per trial, alpha^n ln(Z_n + 1) for n = 0..=max_gen.
    pub trajectories: Vec<Vec<f64>>,
    pub stabilized: Vec<bool>,
    pub stabilized_fraction: f64,
}

/// Generation sizes of the Galton-Watson process without lifetimes, tracked as ln Z_n.
///
/// Large generations sum a subsample of s offspring counts and scale the sum by
/// (Z/s)^(1/alpha): sums of alpha-stable terms grow like n^(1/alpha), so the linear
/// scale-up would be biased low by a factor that itself grows with Z.
pub fn davies_growth_diagnostic(h: &OffspringLaw, alpha: f64, trials: usize, max_gen: usize, seed: u64, exec: Exec) -> Result<GrowthDiagnostic, SimError> {
    h.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::Precondition(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if max_gen > MAX_GENERATIONS {
        return Err(SimError::Precondition(format!("max_gen {max_gen} exceeds {MAX_GENERATIONS}")));
    }
    let trajectories = exec.map(trials, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let mut log_z = 0.0_f64;
        let mut traj = vec![std::f64::consts::LN_2];
        for n in 1..=max_gen {
            if log_z == f64::NEG_INFINITY {
                traj.push(0.0);
                continue;
            }
            let small = log_z <= (DAVIES_SUBSAMPLE as f64).ln();
            let draws = if small { log_z.exp().round() as u64 } else { DAVIES_SUBSAMPLE };
            let sum: f64 = (0..draws).map(|_| h.sample(&mut rng) as f64).sum();
            log_z = if small { sum.ln() } else { sum.ln() + (log_z - (draws as f64).ln()) / alpha };
            // ln(Z + 1) without overflowing Z
            let log_z1 = if log_z == f64::NEG_INFINITY { 0.0 } else { log_z + (-log_z).exp().ln_1p() };
            traj.push(alpha.powi(n as i32) * log_z1);
        }
        traj
    });
    let stabilized: Vec<bool> = trajectories.iter().map(|t| is_stable(t)).collect();
    let stabilized_fraction = stabilized.iter().filter(|&&s| s).count() as f64 / trials.max(1) as f64;
    Ok(GrowthDiagnostic { trajectories, stabilized, stabilized_fraction })
}

fn is_stable(traj: &[f64]) -> bool {
    if traj.len() < STABLE_WINDOW {
        return false;
    }
    let tail = &traj[traj.len() - STABLE_WINDOW..];
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let last = tail[STABLE_WINDOW - 1];
    hi - lo < STABLE_RELATIVE * last.abs() + STABLE_ABSOLUTE
}

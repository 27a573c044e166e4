use serde::{Deserialize, Serialize};

use super::{FpeError, ProcessSpec};
use crate::dist::{effective_co_pgf, QuadratureOptions};

const BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    /// Probability that the process never dies out.
    pub eta_infinity: f64,
    /// Extinction probability of the embedded Galton-Watson process, 1 - eta_infinity.
    pub extinction_q: f64,
}

/// Smallest fixed point q of the (effective) pgf, found by bisection.
///
/// Works with y = 1 - q: the complement pgf y -> 1 - h(1 - y) is concave with a root
/// at 0, so the largest root in [0, 1] is bracketed by the sign of co(y) - y.
pub fn survival_probability(spec: &ProcessSpec, opts: &QuadratureOptions) -> Result<SurvivalReport, FpeError> {
    let co: Box<dyn Fn(f64) -> f64> = match spec {
        ProcessSpec::Classical { offspring, .. } => Box::new(move |y| offspring.co_pgf(y)),
        ProcessSpec::ForwardContagious { offspring, lifetime, contagious } => {
            Box::new(move |y| effective_co_pgf(offspring, lifetime, contagious, y, opts))
        }
        other => return Err(FpeError::Unsupported(format!("survival is defined for classical and forward contagious specs, not {}", other.name()))),
    };
    let gap = |y: f64| co(y) - y;
    let eta = if gap(1.0) >= 0.0 {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(SurvivalReport { eta_infinity: eta, extinction_q: 1.0 - eta })
}

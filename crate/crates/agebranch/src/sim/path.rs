use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::engine::binomial;
use super::SimError;
use crate::dist::{Lifetime, LifetimeLaw, OffspringLaw};
use crate::fpe::ProcessSpec;

/// Up to this many options are drawn one by one.
const LITERAL_OPTIONS: f64 = 64.0;
/// Option counts beyond e^600 are cut down to it. A subset of the options can only
/// lengthen the path, and the increments there are far below double resolution anyway.
const OPTION_LOG_CAP: f64 = 600.0;
/// Expected number of options drawn inside the search box.
const BOX_EXPECTED: f64 = 32.0;
/// Below this acceptance rate conditional lifetimes switch from rejection to inversion.
const REJECTION_FLOOR: f64 = 0.01;
/// Counts below 2^53 are handled as integers.
const LOG_EXACT_COUNT: f64 = 36.7368005696771;
const LOG_SMALL_RANK: f64 = 13.815510557964274;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSearchResult {
    pub success: bool,
    /// Running sums of the lifetimes along the path.
    pub path_partial_sums: Vec<f64>,
    pub failure_generation: Option<usize>,
    pub last_increment: Option<f64>,
}

/// Smallest m with c m^(1 - sqrt(alpha)) / 8 >= e, where c = P(X > delta) / 2.
pub fn minimal_path_m(alpha: f64, c: f64) -> f64 {
    (8.0 * std::f64::consts::E / c).powf(1.0 / (1.0 - alpha.sqrt()))
}

/// P(X - x <= r | X >= x).
fn excess_cdf(g: &LifetimeLaw, x: f64, r: f64) -> f64 {
    if let LifetimeLaw::Exponential { lambda } = g {
        return -(-lambda * r).exp_m1();
    }
    let gl = g.cdf_left(x);
    ((g.cdf(x + r) - gl) / (1.0 - gl)).clamp(0.0, 1.0)
}

fn excess_inv(g: &LifetimeLaw, x: f64, p: f64) -> f64 {
    if let LifetimeLaw::Exponential { lambda } = g {
        return -(-p).ln_1p() / lambda;
    }
    let gl = g.cdf_left(x);
    (g.inv_cdf(gl + p * (1.0 - gl)) - x).max(0.0)
}

/// A draw of X - x given X >= x.
fn conditional_excess<R: Rng>(g: &LifetimeLaw, x: f64, rng: &mut R) -> f64 {
    if 1.0 - g.cdf_left(x) >= REJECTION_FLOOR {
        loop {
            let v = g.sample(rng);
            if v >= x {
                return v - x;
            }
        }
    }
    excess_inv(g, x, rng.random())
}

/// Among e^log_w options, the one minimizing (X - x | X >= x) + I'.
/// Returns (excess lifetime, incubation period) of the winner.
fn best_option<R: Rng>(g: &LifetimeLaw, inc: &LifetimeLaw, x: f64, log_w: f64, rng: &mut R) -> (f64, f64) {
    if log_w <= LITERAL_OPTIONS.ln() {
        let w = log_w.exp().round().max(1.0) as usize;
        return (0..w)
            .map(|_| {
                let i = inc.sample(rng);
                (conditional_excess(g, x, rng), i)
            })
            .min_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)))
            .expect("at least one option");
    }
    // Only options with both coordinates below s can beat a sum of s. Pick s so that
    // about BOX_EXPECTED options land in that box, draw exactly those, and widen the
    // box if none of them has sum <= s.
    let log_w = log_w.min(OPTION_LOG_CAP);
    let log_box = |s: f64| excess_cdf(g, x, s).ln() + inc.cdf(s).ln();
    let target = BOX_EXPECTED.ln() - log_w;
    let mut hi = 0.0_f64;
    while log_box(hi.exp()) < target {
        hi += 1.0;
    }
    let mut lo = -690.0_f64;
    if log_box(lo.exp()) < target {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if log_box(mid.exp()) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let mut s = hi.exp();
    loop {
        let (fy, fi) = (excess_cdf(g, x, s), inc.cdf(s));
        let n = if log_w < LOG_EXACT_COUNT {
            binomial(log_w.exp() as u64, fy * fi, rng)
        } else {
            let mean = (log_w + fy.ln() + fi.ln()).exp();
            Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
        };
        let best = (0..n)
            .map(|_| {
                let y = excess_inv(g, x, rng.random::<f64>() * fy);
                (y, inc.inv_cdf(rng.random::<f64>() * fi))
            })
            .min_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));
        if let Some(b) = best {
            if b.0 + b.1 <= s {
                return b;
            }
        }
        s *= 2.0;
    }
}

/// ln of the offspring count of a child picked uniformly among the `e^log_w`
/// largest of `e^log_k` i.i.d. counts.
fn picked_log_degree<R: Rng>(h: &OffspringLaw, log_k: f64, log_w: f64, rng: &mut R) -> f64 {
    let (rank, log_rank) = if log_w < LOG_EXACT_COUNT {
        let r = rng.random_range(1..=log_w.exp().floor().max(1.0) as u64) as f64;
        (r, r.ln())
    } else {
        (f64::NAN, log_w + (1.0 - rng.random::<f64>()).ln())
    };
    // upper-tail probability of the rank-th largest: Beta(rank, k - rank + 1)
    let log_p = if log_k < LOG_SMALL_RANK {
        let k = log_k.exp().round();
        Beta::new(rank, k - rank + 1.0).expect("rank within count").sample(rng).ln()
    } else if log_rank < LOG_SMALL_RANK {
        Gamma::new(log_rank.exp().round(), 1.0).expect("positive shape").sample(rng).ln() - log_k
    } else {
        log_rank - log_k
    };
    h.log_quantile_upper_tail(log_p)
}

/// Grows one candidate exploding path of a forward incubation process.
///
/// Node n needs at least c f(n) children that outlive its incubation period, with
/// f(n) = m^(1/sqrt(alpha)^n) and c = P(X > delta) / 2. Its options are the
/// W_n = c f(n)^(1 - sqrt(alpha)) / 2 of those with the most children, and the
/// path continues through the option minimizing conditional lifetime plus
/// incubation period. The root is taken with at least f(0) children.
pub fn exploding_path_search<R: Rng>(spec: &ProcessSpec, delta: f64, m: f64, max_gen: usize, rng: &mut R) -> Result<PathSearchResult, SimError> {
    let (h, g, inc, alpha) = match spec {
        ProcessSpec::ForwardIncubation { offspring: h @ OffspringLaw::HeavyTailAlpha { alpha }, lifetime, incubation } => (h, lifetime, incubation, *alpha),
        _ => return Err(SimError::Precondition("path search needs a forward incubation spec with a heavy-tailed offspring law".into())),
    };
    spec.validate()?;
    if !(delta > 0.0) || inc.cdf(delta) < 1.0 - 1e-12 {
        return Err(SimError::Precondition(format!("incubation law must be truncated at delta = {delta}")));
    }
    let c = 0.5 * (1.0 - g.cdf(delta));
    if !(c > 0.0) {
        return Err(SimError::Precondition(format!("P(X > {delta}) is zero")));
    }
    let m_min = minimal_path_m(alpha, c);
    if !(m >= m_min) {
        return Err(SimError::Precondition(format!("m = {m} is below the minimum {m_min:.6e}")));
    }
    let sa = alpha.sqrt();
    let mut sums = Vec::with_capacity(max_gen);
    let mut total = 0.0;
    let mut log_d = h.log_quantile_upper_tail((1.0 - rng.random::<f64>()).ln() + h.log_tail_ge_real(m)).max(m.ln());
    let mut incubation = inc.sample(rng);
    for n in 0..max_gen {
        let log_f = m.ln() / sa.powi(n as i32);
        let survive = 1.0 - g.cdf_left(incubation);
        let log_alive = if log_d < LOG_EXACT_COUNT {
            (binomial(log_d.exp().round() as u64, survive, rng) as f64).ln()
        } else {
            log_d + survive.ln()
        };
        if log_alive < c.ln() + log_f {
            return Ok(PathSearchResult { success: false, last_increment: last_increment(&sums), path_partial_sums: sums, failure_generation: Some(n) });
        }
        let log_w = (c.ln() + (1.0 - sa) * log_f - std::f64::consts::LN_2).min(log_alive);
        let (excess, next_incubation) = best_option(g, inc, incubation, log_w, rng);
        total += incubation + excess;
        sums.push(total);
        log_d = picked_log_degree(h, log_alive, log_w, rng);
        incubation = next_incubation;
    }
    Ok(PathSearchResult { success: true, last_increment: last_increment(&sums), path_partial_sums: sums, failure_generation: None })
}

fn last_increment(sums: &[f64]) -> Option<f64> {
    match sums {
        [] => None,
        [only] => Some(*only),
        [.., a, b] => Some(b - a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_rng;

    fn spec(inc: LifetimeLaw) -> ProcessSpec {
        ProcessSpec::ForwardIncubation { offspring: OffspringLaw::heavy_tail(0.5).unwrap(), lifetime: LifetimeLaw::Exponential { lambda: 1.0 }, incubation: inc }
    }

    #[test]
    fn zero_generations_succeed_trivially() {
        let s = spec(LifetimeLaw::Deterministic { c: 0.0 });
        let m = minimal_path_m(0.5, 0.5 * (-0.1f64).exp()) * 1.01;
        let r = exploding_path_search(&s, 0.1, m, 0, &mut trial_rng(1, 0)).unwrap();
        assert!(r.success && r.path_partial_sums.is_empty());
    }

    #[test]
    fn small_m_is_rejected() {
        let s = spec(LifetimeLaw::Deterministic { c: 0.0 });
        assert!(matches!(exploding_path_search(&s, 0.1, 10.0, 5, &mut trial_rng(1, 0)), Err(SimError::Precondition(_))));
    }

    #[test]
    fn untruncated_incubation_is_rejected() {
        let s = spec(LifetimeLaw::Exponential { lambda: 1.0 });
        assert!(exploding_path_search(&s, 0.1, 1e12, 5, &mut trial_rng(1, 0)).is_err());
    }

    #[test]
    fn excess_helpers_invert() {
        let g = LifetimeLaw::Uniform { a: 0.0, b: 2.0 };
        let r = excess_inv(&g, 0.5, 0.4);
        assert!((excess_cdf(&g, 0.5, r) - 0.4).abs() < 1e-12);
        let e = LifetimeLaw::Exponential { lambda: 2.0 };
        assert!((excess_cdf(&e, 3.0, excess_inv(&e, 3.0, 1e-30)) - 1e-30).abs() < 1e-40);
    }

    #[test]
    fn box_winner_beats_literal_scale() {
        // with many options the winning sum shrinks like W^(-1/2) for a uniform incubation
        let g = LifetimeLaw::Exponential { lambda: 1.0 };
        let inc = LifetimeLaw::Uniform { a: 0.0, b: 0.2 };
        let mut rng = trial_rng(5, 0);
        let sums: Vec<f64> = (0..200).map(|_| {
            let (y, i) = best_option(&g, &inc, 0.05, 20.0, &mut rng);
            y + i
        }).collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        // E[min] for W = e^20 options is about sqrt(pi * 0.2 / (2 W)) = 2.5e-5
        assert!(mean > 1e-5 && mean < 6e-5, "{mean}");
    }
}

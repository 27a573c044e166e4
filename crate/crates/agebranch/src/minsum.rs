//! Min-summability: the growth sequence f(n+1) = F_D^{-1}(1 - 1/f(n)), the series
//! of lifetime quantiles at 1/f(n), and a Monte Carlo estimator built on minima of
//! ever larger i.i.d. lifetime samples.
//!
//! Everything runs on ln f(n): f overflows a double after a handful of generations.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, LifetimeLaw, OffspringLaw};
use crate::fpe::Verdict;
use crate::{trial_rng, Exec};

pub const DEFAULT_SERIES_TERMS: usize = 60;
pub const DEFAULT_MC_TERMS: usize = 40;
/// ln(1e300): past this the growth sequence switches to its analytic surrogate.
const LOG_SURROGATE_FROM: f64 = 690.7755278982137;

/// Ratio test: consecutive term ratios at most this over the window mean a convergent tail.
pub const RATIO_BOUND: f64 = 0.95;
pub const RATIO_WINDOW: usize = 10;
/// Harmonic lower test: n a_n at least this over the window means a divergent tail.
pub const HARMONIC_FLOOR: f64 = 1e-3;

pub const MC_TAIL_TOL: f64 = 1e-6;
/// Log-log slopes of the median terms: steeper than the first is summable, flatter
/// than the second is not. Between them the run is too short to tell.
pub const MC_SUMMABLE_SLOPE: f64 = -1.5;
pub const MC_DIVERGENT_SLOPE: f64 = -1.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinSumError {
    #[error("growth sequence exceeds 1e300 at n = {n} and the offspring law has no analytic surrogate")]
    QuantileOverflow { n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSequence {
    pub m0: u64,
    /// ln f(n) for n = 0..=N.
    pub log_values: Vec<f64>,
    /// f(n); +inf once past the double range.
    pub values: Vec<f64>,
    /// (m, m_hat) with m^(1/alpha^n) <= f(n) <= m_hat^(1/alpha^n), heavy-tailed laws only.
    pub alpha_bounds: Option<(f64, f64)>,
    /// First index computed by the analytic surrogate, if it was needed.
    pub surrogate_from: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    RatioHeuristic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinSumReport {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub verdict: Verdict,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScan {
    pub alphas: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// Both Explosive and Conservative occurred; that contradicts alpha invariance.
    pub violation: bool,
}

/// f(0) = m0, f(n+1) = smallest k with P(D > k) <= 1/f(n).
pub fn growth_sequence(h: &OffspringLaw, m0: u64, n: usize) -> Result<GrowthSequence, MinSumError> {
    h.validate()?;
    if m0 < 1 {
        return Err(MinSumError::InvalidArgument("m0 must be positive".into()));
    }
    let alpha = match h {
        OffspringLaw::HeavyTailAlpha { alpha } => Some(*alpha),
        _ => None,
    };
    let mut log_values = Vec::with_capacity(n + 1);
    log_values.push((m0 as f64).ln());
    let mut surrogate_from = None;
    for i in 1..=n {
        let prev = log_values[i - 1];
        let next = match (surrogate_from, alpha) {
            (Some(_), Some(a)) => prev / a,
            _ => {
                // the quantile search itself works in ln k, but needs k finite
                let next = h.log_quantile_upper_tail(-prev);
                if next.is_finite() && next <= LOG_SURROGATE_FROM {
                    next
                } else if let Some(a) = alpha {
                    surrogate_from = Some(i);
                    prev / a
                } else {
                    return Err(MinSumError::QuantileOverflow { n: i });
                }
            }
        };
        log_values.push(next);
    }
    let alpha_bounds = alpha.map(|a| {
        let scaled = log_values.iter().enumerate().map(|(i, l)| a.powi(i as i32) * l);
        let lo = scaled.clone().fold(f64::INFINITY, f64::min);
        let hi = scaled.fold(f64::NEG_INFINITY, f64::max);
        (lo.exp(), hi.exp())
    });
    let values = log_values.iter().map(|l| l.exp()).collect();
    Ok(GrowthSequence { m0, log_values, values, alpha_bounds, surrogate_from })
}

/// The plumpness witness doubled once, or None for laws that are not plump.
pub fn default_m0(h: &OffspringLaw) -> Option<u64> {
    let report = h.check_plump();
    report.is_plump.then(|| report.m0.max(1) * 2)
}

fn partial_sums(terms: &[f64]) -> Vec<f64> {
    terms
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc)
        })
        .collect()
}

/// Terms G^{-1}(1/f(n)) for n = 0..=N.
pub fn series_terms(g: &LifetimeLaw, f: &GrowthSequence) -> Vec<f64> {
    f.log_values.iter().map(|l| g.inv_cdf_log(-l)).collect()
}

/// Classifies by the series of lifetime quantiles. `h` decides whether the
/// closed-form analysis applies; a non-plump law gets Inconclusive.
pub fn minsum_series(h: &OffspringLaw, g: &LifetimeLaw, f: &GrowthSequence) -> MinSumReport {
    let terms = series_terms(g, f);
    let partial_sums = partial_sums(&terms);
    let closed = match (h, g) {
        (OffspringLaw::HeavyTailAlpha { .. }, LifetimeLaw::GreyFlat { .. }) => Some(Verdict::Explosive),
        // terms behave like (k / (n ln(1/alpha)))^(1/gamma)
        (OffspringLaw::HeavyTailAlpha { .. }, LifetimeLaw::DoubleExpFlat { gamma, .. }) => {
            Some(if *gamma < 1.0 { Verdict::Explosive } else { Verdict::Conservative })
        }
        _ => None,
    };
    let (verdict, method) = match closed {
        Some(v) => (v, Method::ClosedForm),
        None if !h.check_plump().is_plump => (Verdict::Inconclusive, Method::RatioHeuristic),
        None => (ratio_verdict(&terms), Method::RatioHeuristic),
    };
    MinSumReport { terms, partial_sums, verdict, method }
}

fn ratio_verdict(terms: &[f64]) -> Verdict {
    if terms.len() < RATIO_WINDOW + 1 {
        return Verdict::Inconclusive;
    }
    let start = terms.len() - RATIO_WINDOW;
    // a zero term is followed only by zeros, which sums trivially
    let shrinking = (start..terms.len()).all(|n| terms[n] == 0.0 || terms[n] <= RATIO_BOUND * terms[n - 1]);
    if shrinking {
        return Verdict::Explosive;
    }
    if (start..terms.len()).all(|n| n as f64 * terms[n] >= HARMONIC_FLOOR) {
        return Verdict::Conservative;
    }
    Verdict::Inconclusive
}

/// Series verdicts for HeavyTailAlpha(alpha) over the given alphas.
pub fn alpha_invariance_scan(g: &LifetimeLaw, alphas: &[f64], n: usize) -> Result<AlphaScan, MinSumError> {
    let mut verdicts = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let h = OffspringLaw::heavy_tail(alpha)?;
        let m0 = default_m0(&h).ok_or_else(|| MinSumError::InvalidArgument(format!("alpha = {alpha} failed the plumpness check")))?;
        let f = growth_sequence(&h, m0, n)?;
        verdicts.push(minsum_series(&h, g, &f).verdict);
    }
    let violation = verdicts.contains(&Verdict::Explosive) && verdicts.contains(&Verdict::Conservative);
    Ok(AlphaScan { alphas: alphas.to_vec(), verdicts, violation })
}

/// ln of a draw of the smallest of M uniforms, from one uniform:
/// min = 1 - (1 - U)^(1/M).
pub fn log_min_uniform(log_m: f64, u: f64) -> f64 {
    let l = (-u).ln_1p();
    let inv_m = (-log_m).exp();
    if inv_m > 0.0 {
        let v = -(l * inv_m).exp_m1();
        if v > 0.0 {
            return v.ln();
        }
    }
    // 1 - e^(-x) ~ x once x underflows
    (-l).ln() - log_m
}

/// Minimum of M i.i.d. lifetimes via the order-statistics shortcut, M = e^log_m.
pub fn sample_min_shortcut<R: Rng + ?Sized>(g: &LifetimeLaw, log_m: f64, rng: &mut R) -> f64 {
    g.inv_cdf_log(log_min_uniform(log_m, rng.random::<f64>()))
}

/// Minimum of M i.i.d. lifetimes by direct sampling.
pub fn sample_min_naive<R: Rng + ?Sized>(g: &LifetimeLaw, m: u64, rng: &mut R) -> f64 {
    (0..m).map(|_| g.sample(rng)).fold(f64::INFINITY, f64::min)
}

/// Per-trial sums of minima over M_n = e^(1/alpha^n) lifetimes, n = 1..=N.
/// Terms and partial sums in the report are trial medians.
pub fn minsum_monte_carlo(alpha: f64, g: &LifetimeLaw, n: usize, trials: usize, seed: u64, exec: Exec) -> Result<MinSumReport, MinSumError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MinSumError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n < 2 || trials == 0 {
        return Err(MinSumError::InvalidArgument("need at least two terms and one trial".into()));
    }
    g.validate()?;
    let runs: Vec<Vec<f64>> = exec.map(trials, |i| {
        let mut rng = trial_rng(seed, i as u64);
        (1..=n).map(|k| sample_min_shortcut(g, alpha.powi(-(k as i32)), &mut rng)).collect()
    });
    let terms: Vec<f64> = (0..n).map(|k| median(runs.iter().map(|r| r[k]).collect())).collect();
    let half = n / 2;
    let tail = median(runs.iter().map(|r| r[half..].iter().sum()).collect());
    let verdict = mc_verdict(&terms, tail);
    Ok(MinSumReport { partial_sums: partial_sums(&terms), terms, verdict, method: Method::MonteCarlo })
}

fn mc_verdict(terms: &[f64], tail: f64) -> Verdict {
    if tail < MC_TAIL_TOL {
        return Verdict::Explosive;
    }
    let start = terms.len() / 2;
    let pts: Vec<(f64, f64)> = (start..terms.len()).filter(|&k| terms[k] > 0.0).map(|k| (((k + 1) as f64).ln(), terms[k].ln())).collect();
    if pts.len() < terms.len() - start {
        // some median term is exactly zero: the tail is dominated by zeros
        return Verdict::Explosive;
    }
    match slope(&pts) {
        Some(s) if s < MC_SUMMABLE_SLOPE => Verdict::Explosive,
        Some(s) if s > MC_DIVERGENT_SLOPE => Verdict::Conservative,
        _ => Verdict::Inconclusive,
    }
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (pts.len() >= 3 && sxx > 0.0).then(|| sxy / sxx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

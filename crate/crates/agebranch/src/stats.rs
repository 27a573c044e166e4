//! Kolmogorov-Smirnov statistics on samples that may contain `+inf` (censored) values.

/// sup_t (F_x(t) - F_y(t)) for empirical CDFs of two sorted samples.
pub fn sup_ecdf_gap(x: &[f64], y: &[f64]) -> f64 {
    debug_assert!(x.windows(2).all(|w| w[0] <= w[1]) && y.windows(2).all(|w| w[0] <= w[1]));
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut gap = 0.0_f64;
    while i < x.len() || j < y.len() {
        let t = match (x.get(i), y.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => break,
        };
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        gap = gap.max(i as f64 / n - j as f64 / m);
    }
    gap
}

/// Two-sided two-sample KS statistic.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> f64 {
    sup_ecdf_gap(x, y).max(sup_ecdf_gap(y, x))
}

/// Asymptotic critical value of the one-sided two-sample statistic at `level`.
pub fn ks_critical_one_sided(level: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-(level.ln()) / 2.0 * (n + m) / (n * m)).sqrt()
}

/// Asymptotic critical value of the two-sided two-sample statistic at `level`.
pub fn ks_critical_two_sided(level: f64, n: usize, m: usize) -> f64 {
    ks_critical_one_sided(level / 2.0, n, m)
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

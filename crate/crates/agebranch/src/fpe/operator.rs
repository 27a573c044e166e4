use super::{FpeError, PhiTable, ProcessSpec, SolverOptions, TimeGrid, MONOTONE_SLACK};
use crate::dist::{Lifetime, OffspringLaw};
use crate::Exec;

// All weights are stored as natural logs: near t = 0 the explosion mass can sit far
// below the smallest positive double, and flushing it to zero loses the nontrivial
// fixed point entirely.
enum Kind {
    Classical { lw: Vec<f64> },
    /// `lp[k]`: lifetime mass of cell k that falls below a contagious period ending in cell k.
    ForwardContagious { lw: Vec<f64>, lc: Vec<f64>, lp: Vec<f64>, log_rest: Vec<f64> },
    /// `lp[k]`: lifetime mass of cell k that outlasts an incubation period ending in cell k.
    ForwardIncubation { lw: Vec<f64>, li: Vec<f64>, lp: Vec<f64> },
}

/// A process operator discretized on a uniform grid. Stieltjes integrals use the
/// midpoint rule on law increments, with eta linearly interpolated at midpoints.
pub struct DiscreteOperator {
    h: OffspringLaw,
    grid: TimeGrid,
    kind: Kind,
}

const LN_2: f64 = std::f64::consts::LN_2;

/// Running log-sum-exp.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    const EMPTY: LogSum = LogSum { max: f64::NEG_INFINITY, scaled: 0.0 };

    #[inline]
    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

impl DiscreteOperator {
    pub fn new(spec: &ProcessSpec, grid: TimeGrid) -> Self {
        let n = grid.last();
        match spec {
            ProcessSpec::Classical { offspring, lifetime } => Self::classical(offspring, lifetime, grid),
            ProcessSpec::BackwardContagious { offspring, .. } | ProcessSpec::BackwardIncubation { offspring, .. } => {
                let law = spec.thinned_law(&grid.quadrature()).expect("backward spec has a thinned law");
                Self::classical(offspring, &law, grid)
            }
            ProcessSpec::ForwardContagious { offspring, lifetime, contagious } => {
                let cw = contagious.grid_weights(grid.dt, n);
                let lw = lifetime.log_grid_weights(grid.dt, n);
                let mut mass = 0.0;
                let mut log_rest = Vec::with_capacity(n + 1);
                let mut lp = Vec::with_capacity(n + 1);
                for (k, c) in cw.iter().enumerate() {
                    mass += c;
                    log_rest.push((1.0 - mass).max(0.0).ln());
                    // same midpoint admission as the thinned law, so the backward operator
                    // is exactly the average of this one over the contagious period
                    let below = if k == 0 || *c <= 0.0 {
                        1.0
                    } else {
                        ((mass - contagious.cdf_left((k as f64 - 0.5) * grid.dt)) / c).clamp(0.0, 1.0)
                    };
                    lp.push(lw[k] + below.ln());
                }
                let kind = Kind::ForwardContagious { lw, lc: contagious.log_grid_weights(grid.dt, n), lp, log_rest };
                DiscreteOperator { h: offspring.clone(), grid, kind }
            }
            ProcessSpec::ForwardIncubation { offspring, lifetime, incubation } => {
                let lw = lifetime.log_grid_weights(grid.dt, n);
                let mut before = 0.0;
                let lp = incubation
                    .grid_weights(grid.dt, n)
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let above = if k == 0 || *c <= 0.0 {
                            1.0
                        } else {
                            ((incubation.cdf((k as f64 - 0.5) * grid.dt) - before) / c).clamp(0.0, 1.0)
                        };
                        before += c;
                        lw[k] + above.ln()
                    })
                    .collect();
                let kind = Kind::ForwardIncubation { lw, li: incubation.log_grid_weights(grid.dt, n), lp };
                DiscreteOperator { h: offspring.clone(), grid, kind }
            }
        }
    }

    /// The classical operator for an arbitrary (possibly defective) lifetime law.
    pub fn classical(h: &OffspringLaw, law: &dyn Lifetime, grid: TimeGrid) -> Self {
        DiscreteOperator { h: h.clone(), grid, kind: Kind::Classical { lw: law.log_grid_weights(grid.dt, grid.last()) } }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Maps eta = 1 - phi to 1 - (T phi).
    pub fn apply_eta(&self, eta: &[f64], exec: Exec) -> Vec<f64> {
        let log_eta: Vec<f64> = eta.iter().map(|e| e.ln()).collect();
        self.apply_log(&log_eta, exec).into_iter().map(f64::exp).collect()
    }

    /// Same as [`Self::apply_eta`] with both sides stored as natural logs.
    pub fn apply_log(&self, le: &[f64], exec: Exec) -> Vec<f64> {
        let h = &self.h;
        // mid[k] = ln of the average of eta at k - 1 and k
        let mut mid = vec![f64::NEG_INFINITY; le.len()];
        for k in 1..le.len() {
            mid[k] = log_add_exp(le[k - 1], le[k]) - LN_2;
        }
        let mid = &mid;
        exec.map(le.len(), |j| {
            let smooth = |i: usize| if i == 0 { le[j] } else { mid[j - i + 1] };
            match &self.kind {
                Kind::Classical { lw } => {
                    let mut acc = LogSum::EMPTY;
                    for (i, w) in lw[..=j].iter().enumerate() {
                        acc.add(w + smooth(i));
                    }
                    h.log_co_pgf(acc.value())
                }
                Kind::ForwardContagious { lw, lc, lp, log_rest } => {
                    // x-integral over the contagious period, inner integral up to x
                    let mut acc = LogSum::EMPTY;
                    acc.add(lw[0] + le[j]);
                    let mut out = LogSum::EMPTY;
                    out.add(lc[0] + h.log_co_pgf(acc.value()));
                    for k in 1..=j {
                        if lc[k] != f64::NEG_INFINITY {
                            out.add(lc[k] + h.log_co_pgf(log_add_exp(acc.value(), lp[k] + smooth(k))));
                        }
                        acc.add(lw[k] + smooth(k));
                    }
                    out.add(log_rest[j] + h.log_co_pgf(acc.value()));
                    out.value()
                }
                Kind::ForwardIncubation { lw, li, lp } => {
                    // x-integral over the incubation period, inner integral from x to t
                    let mut acc = LogSum::EMPTY;
                    let mut out = LogSum::EMPTY;
                    for k in (1..=j).rev() {
                        if li[k] != f64::NEG_INFINITY {
                            out.add(li[k] + h.log_co_pgf(log_add_exp(acc.value(), lp[k] + smooth(k))));
                        }
                        acc.add(lw[k] + smooth(k));
                    }
                    out.add(li[0] + h.log_co_pgf(acc.value()));
                    out.value()
                }
            }
            .min(0.0)
        })
    }

    pub fn apply(&self, phi: &PhiTable, exec: Exec) -> Result<PhiTable, FpeError> {
        if phi.one_minus_phi.len() != self.grid.len() {
            return Err(FpeError::GridMismatch { got: phi.one_minus_phi.len(), expected: self.grid.len() });
        }
        Ok(PhiTable::from_eta(self.grid, self.apply_eta(&phi.one_minus_phi, exec)))
    }

    /// Iterates from phi = 0 until successive iterates differ by less than `tol`.
    pub fn iterate(&self, opts: &SolverOptions) -> Result<PhiTable, FpeError> {
        let mut le = vec![0.0; self.grid.len()];
        let mut residual = f64::INFINITY;
        let finish = |le: &[f64], k: usize, residual: f64| {
            let mut table = PhiTable::from_eta(self.grid, le.iter().map(|x| x.exp()).collect());
            table.iterations_used = k;
            table.sup_residual = residual;
            table
        };
        for k in 1..=opts.max_iters {
            let next = self.apply_log(&le, opts.exec);
            residual = 0.0;
            for (j, (&new, &old)) in next.iter().zip(&le).enumerate() {
                let (new, old) = (new.exp(), old.exp());
                if new > old + MONOTONE_SLACK {
                    return Err(FpeError::NonMonotone { iteration: k, index: j, excess: new - old });
                }
                residual = residual.max(old - new);
            }
            le = next;
            if residual < opts.tol {
                return Ok(finish(&le, k, residual));
            }
        }
        let mut table = finish(&le, opts.max_iters, residual);
        table.converged = false;
        Err(FpeError::NotConverged { table: Box::new(table) })
    }
}

pub fn apply_operator(spec: &ProcessSpec, phi: &PhiTable) -> Result<PhiTable, FpeError> {
    DiscreteOperator::new(spec, phi.grid).apply(phi, Exec::default())
}

/// Classical operator with an explicit lifetime law.
pub fn apply_with_law(h: &OffspringLaw, law: &dyn Lifetime, phi: &PhiTable) -> Result<PhiTable, FpeError> {
    DiscreteOperator::classical(h, law, phi.grid).apply(phi, Exec::default())
}

pub fn iterate_phi(spec: &ProcessSpec, grid: TimeGrid, opts: &SolverOptions) -> Result<PhiTable, FpeError> {
    DiscreteOperator::new(spec, grid).iterate(opts)
}

/// Classical iteration with an explicit lifetime law.
pub fn iterate_with_law(h: &OffspringLaw, law: &dyn Lifetime, grid: TimeGrid, opts: &SolverOptions) -> Result<PhiTable, FpeError> {
    DiscreteOperator::classical(h, law, grid).iterate(opts)
}

/// max_j (eta_f - T_b eta_f) for a forward solution, where T_b is the operator of
/// the backward partner. A forward solution is a supersolution of the backward
/// equation, so this should not exceed the solver tolerance by much.
pub fn backward_excess(spec_forward: &ProcessSpec, phi_forward: &PhiTable) -> Result<f64, FpeError> {
    let backward = match spec_forward.partner() {
        Some(b) if b.is_backward() => b,
        _ => return Err(FpeError::Unsupported(format!("{} has no backward partner", spec_forward.name()))),
    };
    let op = DiscreteOperator::new(&backward, phi_forward.grid);
    let tb = op.apply(phi_forward, Exec::default())?;
    Ok(phi_forward.one_minus_phi.iter().zip(&tb.one_minus_phi).map(|(e, t)| e - t).fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::LifetimeLaw;
    use approx::assert_abs_diff_eq;

    fn h() -> OffspringLaw {
        OffspringLaw::heavy_tail(0.5).unwrap()
    }

    #[test]
    fn constant_one_is_fixed() {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let specs = [
            ProcessSpec::Classical { offspring: h(), lifetime: LifetimeLaw::Exponential { lambda: 1.0 } },
            ProcessSpec::ForwardContagious { offspring: h(), lifetime: LifetimeLaw::Exponential { lambda: 1.0 }, contagious: LifetimeLaw::Uniform { a: 0.0, b: 0.5 } },
            ProcessSpec::ForwardIncubation { offspring: h(), lifetime: LifetimeLaw::Exponential { lambda: 1.0 }, incubation: LifetimeLaw::Uniform { a: 0.0, b: 0.5 } },
        ];
        for spec in &specs {
            let out = apply_operator(spec, &PhiTable::from_phi(grid, vec![1.0; grid.len()])).unwrap();
            assert!(out.values.iter().all(|&v| v == 1.0), "{}", spec.name());
        }
    }

    #[test]
    fn first_iterate_from_zero() {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let g = LifetimeLaw::Exponential { lambda: 2.0 };
        let spec = ProcessSpec::Classical { offspring: h(), lifetime: g.clone() };
        let out = apply_operator(&spec, &PhiTable::from_phi(grid, vec![0.0; grid.len()])).unwrap();
        for (j, v) in out.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, h().pgf(1.0 - g.cdf(grid.t(j))).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn contagious_point_mass_below_cut() {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let g = LifetimeLaw::Exponential { lambda: 1.0 };
        let spec = ProcessSpec::ForwardContagious { offspring: h(), lifetime: g.clone(), contagious: LifetimeLaw::Deterministic { c: 0.6 } };
        let out = apply_operator(&spec, &PhiTable::from_phi(grid, vec![0.0; grid.len()])).unwrap();
        for j in 0..55 {
            assert_abs_diff_eq!(out.values[j], h().pgf(1.0 - g.cdf(grid.t(j))).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_sum_matches_direct() {
        let xs = [-3.0, 0.5, f64::NEG_INFINITY, -700.0, 1.0];
        let mut acc = LogSum::EMPTY;
        xs.iter().for_each(|&x| acc.add(x));
        let direct: f64 = xs.iter().map(|x| x.exp()).sum();
        assert_abs_diff_eq!(acc.value(), direct.ln(), epsilon = 1e-14);
        assert_eq!(LogSum::EMPTY.value(), f64::NEG_INFINITY);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let spec = ProcessSpec::Classical { offspring: h(), lifetime: LifetimeLaw::Exponential { lambda: 1.0 } };
        let op = DiscreteOperator::new(&spec, grid);
        let short = PhiTable::from_phi(TimeGrid::new(0.01, 0.5).unwrap(), vec![1.0; 51]);
        assert!(matches!(op.apply(&short, Exec::Sequential), Err(FpeError::GridMismatch { .. })));
    }
}

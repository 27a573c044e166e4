//! Fixed-point equations for phi(t) = P(V > t), where V is the explosion time.
//!
//! Internally everything is carried in the complement eta = 1 - phi, so the
//! power-law pgf c^alpha never sees rounding noise from 1 - (1 - c).

mod certificate;
mod operator;
mod survival;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{thin_by_contagion, thin_by_incubation, DistError, ImproperLaw, LifetimeLaw, OffspringLaw, QuadratureOptions};
use crate::Exec;

pub use certificate::{scaled_certificate_from_classical, scaling_residual, verify_certificate, TestFunction};
pub use operator::{apply_operator, apply_with_law, backward_excess, iterate_phi, iterate_with_law, DiscreteOperator};
pub use survival::{survival_probability, SurvivalReport};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_THRESHOLD: f64 = 1e-2;
/// Allowed per-step increase of eta before an iterate counts as non-monotone.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Classical { offspring: OffspringLaw, lifetime: LifetimeLaw },
    ForwardContagious { offspring: OffspringLaw, lifetime: LifetimeLaw, contagious: LifetimeLaw },
    BackwardContagious { offspring: OffspringLaw, lifetime: LifetimeLaw, contagious: LifetimeLaw },
    ForwardIncubation { offspring: OffspringLaw, lifetime: LifetimeLaw, incubation: LifetimeLaw },
    BackwardIncubation { offspring: OffspringLaw, lifetime: LifetimeLaw, incubation: LifetimeLaw },
}

impl ProcessSpec {
    pub fn offspring(&self) -> &OffspringLaw {
        match self {
            ProcessSpec::Classical { offspring, .. }
            | ProcessSpec::ForwardContagious { offspring, .. }
            | ProcessSpec::BackwardContagious { offspring, .. }
            | ProcessSpec::ForwardIncubation { offspring, .. }
            | ProcessSpec::BackwardIncubation { offspring, .. } => offspring,
        }
    }

    pub fn lifetime(&self) -> &LifetimeLaw {
        match self {
            ProcessSpec::Classical { lifetime, .. }
            | ProcessSpec::ForwardContagious { lifetime, .. }
            | ProcessSpec::BackwardContagious { lifetime, .. }
            | ProcessSpec::ForwardIncubation { lifetime, .. }
            | ProcessSpec::BackwardIncubation { lifetime, .. } => lifetime,
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        self.offspring().validate()?;
        self.lifetime().validate()?;
        match self {
            ProcessSpec::ForwardContagious { contagious: p, .. }
            | ProcessSpec::BackwardContagious { contagious: p, .. }
            | ProcessSpec::ForwardIncubation { incubation: p, .. }
            | ProcessSpec::BackwardIncubation { incubation: p, .. } => p.validate(),
            ProcessSpec::Classical { .. } => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProcessSpec::Classical { .. } => "classical",
            ProcessSpec::ForwardContagious { .. } => "forward_contagious",
            ProcessSpec::BackwardContagious { .. } => "backward_contagious",
            ProcessSpec::ForwardIncubation { .. } => "forward_incubation",
            ProcessSpec::BackwardIncubation { .. } => "backward_incubation",
        }
    }

    pub fn is_backward(&self) -> bool {
        matches!(self, ProcessSpec::BackwardContagious { .. } | ProcessSpec::BackwardIncubation { .. })
    }

    /// The forward/backward counterpart with the same laws; None for the classical process.
    pub fn partner(&self) -> Option<ProcessSpec> {
        let (h, g) = (self.offspring().clone(), self.lifetime().clone());
        match self {
            ProcessSpec::Classical { .. } => None,
            ProcessSpec::ForwardContagious { contagious, .. } => {
                Some(ProcessSpec::BackwardContagious { offspring: h, lifetime: g, contagious: contagious.clone() })
            }
            ProcessSpec::BackwardContagious { contagious, .. } => {
                Some(ProcessSpec::ForwardContagious { offspring: h, lifetime: g, contagious: contagious.clone() })
            }
            ProcessSpec::ForwardIncubation { incubation, .. } => {
                Some(ProcessSpec::BackwardIncubation { offspring: h, lifetime: g, incubation: incubation.clone() })
            }
            ProcessSpec::BackwardIncubation { incubation, .. } => {
                Some(ProcessSpec::ForwardIncubation { offspring: h, lifetime: g, incubation: incubation.clone() })
            }
        }
    }

    /// For backward processes, the thinned lifetime law they reduce to.
    pub fn thinned_law(&self, opts: &QuadratureOptions) -> Option<ImproperLaw> {
        match self {
            ProcessSpec::BackwardContagious { lifetime, contagious, .. } => Some(thin_by_contagion(lifetime, contagious, opts)),
            ProcessSpec::BackwardIncubation { lifetime, incubation, .. } => Some(thin_by_incubation(lifetime, incubation, opts)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub dt: f64,
    pub horizon: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, horizon: f64) -> Result<Self, FpeError> {
        if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) {
            return Err(FpeError::InvalidGrid { dt, horizon });
        }
        Ok(TimeGrid { dt, horizon })
    }

    /// Index of the last grid point, J = ceil(T / dt).
    pub fn last(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil() as usize
    }

    pub fn len(&self) -> usize {
        self.last() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.t(j)).collect()
    }

    /// Quadrature options that tabulate thinned laws on this grid.
    pub fn quadrature(&self) -> QuadratureOptions {
        QuadratureOptions::on_grid(self.dt, self.horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTable {
    pub grid: TimeGrid,
    /// phi at each grid point.
    pub values: Vec<f64>,
    /// 1 - phi, carried separately to keep small values exact.
    pub one_minus_phi: Vec<f64>,
    pub iterations_used: usize,
    pub sup_residual: f64,
    pub converged: bool,
}

impl PhiTable {
    pub fn from_phi(grid: TimeGrid, values: Vec<f64>) -> Self {
        let one_minus_phi = values.iter().map(|v| 1.0 - v).collect();
        PhiTable { grid, values, one_minus_phi, iterations_used: 0, sup_residual: 0.0, converged: true }
    }

    pub fn from_eta(grid: TimeGrid, eta: Vec<f64>) -> Self {
        let values = eta.iter().map(|e| 1.0 - e).collect();
        PhiTable { grid, values, one_minus_phi: eta, iterations_used: 0, sup_residual: 0.0, converged: true }
    }

    /// 1 - phi(T).
    pub fn explosion_mass(&self) -> f64 {
        *self.one_minus_phi.last().unwrap_or(&0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,phi,one_minus_phi\n");
        for (j, (p, e)) in self.values.iter().zip(&self.one_minus_phi).enumerate() {
            out.push_str(&format!("{},{},{}\n", self.grid.t(j), p, e));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub threshold: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, threshold: DEFAULT_THRESHOLD, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Explosive,
    Conservative,
    Inconclusive,
}

/// Explosive when a converged table puts more than `threshold` mass on explosion by T;
/// conservative when a converged table is identically one within `tol`.
pub fn explosion_verdict(phi: &PhiTable, threshold: f64, tol: f64) -> Verdict {
    if !phi.converged || !(phi.sup_residual < tol) {
        return Verdict::Inconclusive;
    }
    if phi.explosion_mass() > threshold {
        Verdict::Explosive
    } else if phi.one_minus_phi.iter().all(|e| e.abs() <= tol) {
        Verdict::Conservative
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpeError {
    #[error("iterate {iteration} decreased phi at grid index {index} by {excess:e}")]
    NonMonotone { iteration: usize, index: usize, excess: f64 },
    #[error("no convergence after {} iterations (residual {:e})", .table.iterations_used, .table.sup_residual)]
    NotConverged { table: Box<PhiTable> },
    #[error("no scaling on the search grid produced a valid certificate")]
    CertificateNotFound,
    #[error("table does not match the operator grid ({got} points, expected {expected})")]
    GridMismatch { got: usize, expected: usize },
    #[error("invalid grid dt={dt}, horizon={horizon}")]
    InvalidGrid { dt: f64, horizon: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

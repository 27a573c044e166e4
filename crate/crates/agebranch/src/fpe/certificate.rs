use serde::{Deserialize, Serialize};

use super::operator::DiscreteOperator;
use super::{FpeError, PhiTable, ProcessSpec, TimeGrid};
use crate::dist::OffspringLaw;
use crate::Exec;

/// A certificate must dip below one by more than this multiple of the tolerance,
/// otherwise the tolerance alone would let it pass.
pub const NONTRIVIAL_FACTOR: f64 = 10.0;

/// Candidate test function Psi on [0, T], stored through its deficit 1 - Psi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub grid: TimeGrid,
    pub deficit: Vec<f64>,
    /// Scale applied to the classical solution, when built by scaling.
    pub scale: Option<f64>,
}

impl TestFunction {
    pub fn from_values(grid: TimeGrid, values: &[f64]) -> Self {
        TestFunction { grid, deficit: values.iter().map(|v| 1.0 - v).collect(), scale: None }
    }

    pub fn values(&self) -> Vec<f64> {
        self.deficit.iter().map(|d| 1.0 - d).collect()
    }
}

/// True when Psi >= T Psi - tol on the grid and Psi is not identically one.
pub fn verify_certificate(spec: &ProcessSpec, psi: &TestFunction, tol: f64) -> bool {
    if psi.deficit.len() != psi.grid.len() {
        return false;
    }
    let nontrivial = psi.deficit.iter().any(|&d| d > NONTRIVIAL_FACTOR * tol);
    if !nontrivial {
        return false;
    }
    let op = DiscreteOperator::new(spec, psi.grid);
    let image = op.apply_eta(&psi.deficit, Exec::default());
    psi.deficit.iter().zip(&image).all(|(&d, &td)| d <= td + tol)
}

/// Scales the explosion mass of a classical solution, Psi = 1 - A (1 - phi), halving A
/// from one until the forward operator maps Psi below itself.
pub fn scaled_certificate_from_classical(
    phi_classical: &PhiTable,
    alpha: f64,
    spec_forward: &ProcessSpec,
    tol: f64,
) -> Result<TestFunction, FpeError> {
    if spec_forward.offspring() != &(OffspringLaw::HeavyTailAlpha { alpha }) {
        return Err(FpeError::Unsupported(format!("scaled certificates need a heavy-tailed offspring law with alpha = {alpha}")));
    }
    let eta = &phi_classical.one_minus_phi;
    let peak = eta.iter().cloned().fold(0.0, f64::max);
    let mut scale = 1.0_f64;
    while scale * peak > NONTRIVIAL_FACTOR * tol {
        let psi = TestFunction { grid: phi_classical.grid, deficit: eta.iter().map(|e| scale * e).collect(), scale: Some(scale) };
        if verify_certificate(spec_forward, &psi, tol) {
            return Ok(psi);
        }
        scale *= 0.5;
    }
    Err(FpeError::CertificateNotFound)
}

/// For a classical heavy-tailed solution eta and c in (0, 1], the scaled function
/// A eta with A = c^(alpha/(1-alpha)) solves the equation for the lifetime law cG.
/// Returns the largest pointwise residual of that identity.
pub fn scaling_residual(spec_classical: &ProcessSpec, phi: &PhiTable, c: f64) -> Result<f64, FpeError> {
    let (alpha, law) = match spec_classical {
        ProcessSpec::Classical { offspring: OffspringLaw::HeavyTailAlpha { alpha }, lifetime } => (*alpha, lifetime),
        _ => return Err(FpeError::Unsupported("scaling identity needs a classical heavy-tailed spec".into())),
    };
    let grid = phi.grid;
    let w = crate::dist::Lifetime::grid_weights(law, grid.dt, grid.last());
    let a = c.powf(alpha / (1.0 - alpha));
    let scaled: Vec<f64> = phi.one_minus_phi.iter().map(|e| a * e).collect();
    let mut worst = 0.0_f64;
    for j in 0..scaled.len() {
        let smooth = |i: usize| if i == 0 { scaled[j] } else { 0.5 * (scaled[j - i] + scaled[j - i + 1]) };
        let s: f64 = (0..=j).map(|i| c * w[i] * smooth(i)).sum();
        worst = worst.max((scaled[j] - s.powf(alpha)).abs());
    }
    Ok(worst)
}

//! Measurement routines behind the `verify-*` commands: manufactured solutions,
//! convergence studies and scaling probes.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::elliptic::{helmholtz_operator, solve_poisson, solve_stream_helmholtz};
use crate::error::{EllipticError, FitError};
use crate::fields::{laplacian, norm_l2, seminorm_hk, ScalarField};
use crate::grid::{build_grid, ExteriorGrid, GridSpec};
use crate::rates::{fit_rate, RateFit};

/// Outcome of one tolerance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, target: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            measured,
            target: target.into(),
            pass: pass && measured.is_finite(),
        }
    }

    /// `|measured - expected| <= tol`
    pub fn within(name: impl Into<String>, measured: f64, expected: f64, tol: f64) -> Self {
        Self::new(name, measured, format!("{expected} +- {tol}"), (measured - expected).abs() <= tol)
    }

    /// `measured <= bound`
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, format!("<= {bound:e}"), measured <= bound)
    }

    /// `measured >= bound`
    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, format!(">= {bound}"), measured >= bound)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.6e} (target {})", self.name, self.measured, self.target)
    }
}

/// `(r^-1 - r^-3) cos(theta)`, harmonic-free dipole with `Delta = -8 r^-5 cos(theta)`.
pub fn dipole(r: f64, theta: f64) -> f64 {
    (1.0 / r - r.powi(-3)) * theta.cos()
}

/// Exact solution of `Delta phi = -8 r^-5 cos(theta)` on `1 < r < r_max` with
/// `phi(1) = 0` and the far-field Robin condition `d_r phi + phi / r = 0`:
/// the dipole minus the harmonic `r_max^-4 (r - 1/r) cos(theta)`.
pub fn truncated_dipole(r_max: f64) -> impl Fn(f64, f64) -> f64 {
    move |r, theta| dipole(r, theta) - r_max.powi(-4) * (r - 1.0 / r) * theta.cos()
}

/// Smooth stream function vanishing with its radial derivative near both ends.
pub fn compact_bump(r: f64, theta: f64) -> f64 {
    let x = (r - 2.5) / 1.2;
    let radial = if x.abs() < 1.0 { (1.0 - x * x).powi(4) } else { 0.0 };
    radial * (1.0 + 0.5 * theta.cos() - 0.3 * (3.0 * theta).sin() + 0.2 * (8.0 * theta).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderStudy {
    pub n_r: Vec<usize>,
    pub errors: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Error against radial spacing `h = ln(r_max) / (n_r - 1)`.
    pub fit: RateFit,
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Grid(#[from] crate::error::GridError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Field(#[from] crate::error::FieldError),
}

/// L2 error of the Poisson solve for the dipole source over a sequence of radial resolutions.
pub fn poisson_order_study(n_rs: &[usize], n_theta: usize, r_max: f64) -> Result<OrderStudy, StudyError> {
    let exact = truncated_dipole(r_max);
    let mut errors = Vec::new();
    let mut seconds = Vec::new();
    let mut pts = Vec::new();
    for &n in n_rs {
        let g = build_grid(GridSpec::new(n, n_theta, r_max))?;
        let start = Instant::now();
        let w = ScalarField::from_fn(g.clone(), |r, t| -8.0 * r.powi(-5) * t.cos())?;
        let phi = solve_poisson(&w)?;
        seconds.push(start.elapsed().as_secs_f64());
        let err = norm_l2(&phi.sub(&ScalarField::from_fn(g.clone(), &exact)?));
        errors.push(err);
        pts.push((g.h(), err));
    }
    Ok(OrderStudy {
        n_r: n_rs.to_vec(),
        errors,
        seconds,
        fit: fit_rate(&pts)?,
    })
}

/// `|phi - phi*| / |phi*|` after solving `(Delta - alpha^2 Delta^2) phi = q` for
/// `q` built from `phi*` with the same discrete operators.
pub fn stokes_chain_error(phi_star: &ScalarField, alpha: f64) -> Result<f64, StudyError> {
    let q = helmholtz_operator(phi_star, alpha);
    let sol = solve_stream_helmholtz(&q, alpha)?;
    Ok(norm_l2(&sol.phi.sub(phi_star)) / norm_l2(phi_star))
}

pub fn compact_bump_field(grid: Arc<ExteriorGrid>) -> Result<ScalarField, StudyError> {
    Ok(ScalarField::from_fn(grid, compact_bump)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingProbe {
    pub alphas: Vec<f64>,
    /// `|D^3 u|` of the no-slip velocity solving `u + alpha^2 A u = perp_grad(psi)`.
    pub d3: Vec<f64>,
    pub fit: RateFit,
}

/// Growth of `|D^3 u|` as `alpha` shrinks, for fixed input stream function `psi`.
pub fn stokes_d3_probe(psi: &ScalarField, alphas: &[f64]) -> Result<ScalingProbe, StudyError> {
    let q = laplacian(psi);
    let mut d3 = Vec::new();
    for &alpha in alphas {
        let sol = solve_stream_helmholtz(&q, alpha)?;
        d3.push(seminorm_hk(&sol.u, 3)?);
    }
    let pts: Vec<(f64, f64)> = alphas.iter().copied().zip(d3.iter().copied()).collect();
    Ok(ScalingProbe {
        alphas: alphas.to_vec(),
        d3,
        fit: fit_rate(&pts)?,
    })
}

//! Boundary-layer corrector `u_b = perp_grad(eta(rho / delta) psi_bar)`.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::CorrectorError;
use crate::fields::{norm_l2, perp_grad, seminorm_hk, ScalarField, VectorField};
use crate::rates::{fit_rate, RateFit};

/// Minimum number of radial cells inside `rho < delta` for a resolved entry.
pub const MIN_COLLAR_CELLS: usize = 4;

/// Quintic smoothstep cutoff: 1 on `[0, 1]`, 0 on `[2, inf)`, C^2 throughout.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cutoff;

impl Cutoff {
    pub fn eval(self, x: f64) -> f64 {
        eta(x)
    }

    pub fn derivative(self, x: f64) -> f64 {
        eta_prime(x)
    }

    /// The mirrored profile `1 - eta(x)`: 0 on `[0, 1]`, 1 on `[2, inf)`.
    pub fn reversed(self, x: f64) -> f64 {
        1.0 - eta(x)
    }
}

pub fn eta(x: f64) -> f64 {
    if x <= 1.0 {
        return 1.0;
    }
    if x >= 2.0 {
        return 0.0;
    }
    let y = 2.0 - x;
    y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)
}

pub fn eta_prime(x: f64) -> f64 {
    if x <= 1.0 || x >= 2.0 {
        return 0.0;
    }
    let y = 2.0 - x;
    -30.0 * y * y * (1.0 - y) * (1.0 - y)
}

fn check_delta(delta: f64) -> Result<(), CorrectorError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CorrectorError::BadWidth(delta));
    }
    Ok(())
}

fn check_boundary(psi_bar: &ScalarField) -> Result<(), CorrectorError> {
    let scale = psi_bar.max_abs().max(1.0);
    let on_wall = psi_bar.values().row(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if on_wall > 1e-12 * scale {
        return Err(CorrectorError::NonzeroOnBoundary(on_wall));
    }
    Ok(())
}

/// Builds `u_b` through the product rule
/// `u_b = eta(rho / delta) perp_grad(psi_bar) + delta^{-1} eta'(rho / delta) psi_bar e_theta`,
/// so that `u_b = perp_grad(psi_bar)` exactly where `rho <= delta` and
/// `u_b = 0` exactly where `rho >= 2 delta`.
pub fn build_corrector(psi_bar: &ScalarField, delta: f64) -> Result<VectorField, CorrectorError> {
    check_delta(delta)?;
    check_boundary(psi_bar)?;
    let g = psi_bar.grid();
    let u_bar = perp_grad(psi_bar);
    let mut ur = Array2::zeros(g.shape());
    let mut ut = Array2::zeros(g.shape());
    for i in 0..g.n_r() {
        let x = g.rho(i) / delta;
        let e = eta(x);
        let de = eta_prime(x) / delta;
        if e == 0.0 && de == 0.0 {
            continue;
        }
        for j in 0..g.n_theta() {
            ur[[i, j]] = e * u_bar.u_r()[[i, j]];
            ut[[i, j]] = e * u_bar.u_theta()[[i, j]] + de * psi_bar.values()[[i, j]];
        }
    }
    Ok(VectorField::new(g.clone(), ur, ut)?)
}

/// `eta(rho / delta) psi_bar` as a scalar field.
pub fn cutoff_stream(psi_bar: &ScalarField, delta: f64) -> ScalarField {
    psi_bar.mul_radial(|r| eta((r - 1.0) / delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorEntry {
    pub delta: f64,
    pub norm_ub: f64,
    pub seminorm_ub: f64,
    pub resolved_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorReport {
    pub entries: Vec<CorrectorEntry>,
    /// `|u_b|` against `delta`.
    pub norm_fit: RateFit,
    /// `|grad u_b|` against `delta`.
    pub seminorm_fit: RateFit,
}

impl CorrectorReport {
    pub fn all_resolved(&self) -> bool {
        self.entries.iter().all(|e| e.resolved_flag)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_entries_csv(&self.entries, out)
    }
}

pub fn write_entries_csv<W: Write>(entries: &[CorrectorEntry], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Norms of `u_b` for each width.
pub fn corrector_entries(psi_bar: &ScalarField, deltas: &[f64]) -> Result<Vec<CorrectorEntry>, CorrectorError> {
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CorrectorError::BadSequence);
    }
    let g = psi_bar.grid();
    deltas
        .iter()
        .map(|&delta| {
            let ub = build_corrector(psi_bar, delta)?;
            Ok(CorrectorEntry {
                delta,
                norm_ub: norm_l2(&ub),
                seminorm_ub: seminorm_hk(&ub, 1)?,
                resolved_flag: g.cells_within(delta) >= MIN_COLLAR_CELLS,
            })
        })
        .collect()
}

/// Fits `|u_b| ~ K delta^a` and `|grad u_b| ~ K delta^b` over `deltas`.
pub fn corrector_scaling_report(psi_bar: &ScalarField, deltas: &[f64]) -> Result<CorrectorReport, CorrectorError> {
    let entries = corrector_entries(psi_bar, deltas)?;
    let norm_pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.delta, e.norm_ub)).collect();
    let semi_pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.delta, e.seminorm_ub)).collect();
    Ok(CorrectorReport {
        norm_fit: fit_rate(&norm_pts)?,
        seminorm_fit: fit_rate(&semi_pts)?,
        entries,
    })
}

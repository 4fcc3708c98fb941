//! Initial data: canonical Euler stream functions and the no-slip family
//! `u0_alpha = perp_grad(phi(rho / alpha) psi0)` that approximates them.

use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::boundary_layer::{eta, eta_prime, MIN_COLLAR_CELLS};
use crate::error::InitialDataError;
use crate::fields::{norm_l2, perp_grad, seminorms_123, BoundaryTag, ScalarField, VectorField};
use crate::grid::ExteriorGrid;
use crate::rates::{fit_rate, RateFit};
use crate::snapshot::Snapshot;
use std::sync::Arc;

/// Relative mass of `psi0` allowed beyond `0.9 r_max`.
pub const SUPPORT_TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    #[default]
    RadialVortex,
    PerturbedVortex,
    File,
}

/// Behaviour of the canonical profile at `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryProfile {
    /// Factor `(1 - e^{1-r})^2`: `u0` already vanishes on the boundary.
    #[default]
    NoSlip,
    /// Factor `(1 - e^{1-r})`: `u0` slips tangentially along the boundary.
    NonPenetrating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialCase {
    pub name: CaseKind,
    pub amplitude: f64,
    pub r0: f64,
    pub sigma: f64,
    pub mode: u32,
    pub epsilon: f64,
    pub profile: BoundaryProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for InitialCase {
    fn default() -> Self {
        Self {
            name: CaseKind::RadialVortex,
            amplitude: 1.0,
            r0: 2.0,
            sigma: 0.4,
            mode: 2,
            epsilon: 0.1,
            profile: BoundaryProfile::NoSlip,
            path: None,
        }
    }
}

impl InitialCase {
    pub fn radial_vortex() -> Self {
        Self::default()
    }

    pub fn perturbed_vortex() -> Self {
        Self {
            name: CaseKind::PerturbedVortex,
            ..Self::default()
        }
    }

    pub fn from_file(path: impl Into<PathBuf>) -> Self {
        Self {
            name: CaseKind::File,
            path: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn with_profile(mut self, profile: BoundaryProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn validate(&self) -> Result<(), InitialDataError> {
        let bad = |name, value| Err(InitialDataError::BadParameter { name, value });
        if !self.amplitude.is_finite() || self.amplitude == 0.0 {
            return bad("amplitude", self.amplitude);
        }
        if !(self.r0.is_finite() && self.r0 >= 1.0) {
            return bad("r0", self.r0);
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma", self.sigma);
        }
        if !(self.epsilon.is_finite() && self.epsilon.abs() < 1.0) {
            return bad("epsilon", self.epsilon);
        }
        if self.name == CaseKind::File && self.path.is_none() {
            return Err(InitialDataError::MissingPath);
        }
        Ok(())
    }

    /// Radial factor of the canonical profile.
    pub fn radial_profile(&self, r: f64) -> f64 {
        let wall = 1.0 - (1.0 - r).exp();
        let wall = match self.profile {
            BoundaryProfile::NoSlip => wall * wall,
            BoundaryProfile::NonPenetrating => wall,
        };
        self.amplitude * wall * (-((r - self.r0) / self.sigma).powi(2)).exp()
    }
}

fn check_wall(psi: &ScalarField) -> Result<(), InitialDataError> {
    let scale = psi.max_abs().max(1.0);
    let on_wall = psi.values().row(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if on_wall > 1e-12 * scale {
        return Err(InitialDataError::BadParameter {
            name: "psi0 on the boundary",
            value: on_wall,
        });
    }
    Ok(())
}

fn check_support(psi: &ScalarField) -> Result<(), InitialDataError> {
    let total = norm_l2(psi);
    let tail = psi.norm_l2_from(psi.grid().tail_start(0.9));
    if total > 0.0 && tail > SUPPORT_TAIL_TOL * total {
        return Err(InitialDataError::SupportTooWide(tail / total));
    }
    Ok(())
}

/// Stream function `psi0` of the Euler initial velocity `u0 = perp_grad(psi0)`.
pub fn canonical_psi(case: &InitialCase, grid: Arc<ExteriorGrid>) -> Result<ScalarField, InitialDataError> {
    case.validate()?;
    let psi = match case.name {
        CaseKind::RadialVortex => ScalarField::from_fn(grid, |r, _| case.radial_profile(r))?,
        CaseKind::PerturbedVortex => {
            let m = case.mode as f64;
            ScalarField::from_fn(grid, |r, t| case.radial_profile(r) * (1.0 + case.epsilon * (m * t).cos()))?
        }
        CaseKind::File => {
            let path = case.path.as_ref().ok_or(InitialDataError::MissingPath)?;
            Snapshot::load(path)?.to_field(grid)?
        }
    };
    check_wall(&psi)?;
    check_support(&psi)?;
    Ok(psi)
}

fn check_alpha(grid: &ExteriorGrid, alpha: f64) -> Result<(), InitialDataError> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(InitialDataError::BadAlpha(alpha));
    }
    let cells = grid.cells_within(alpha);
    if cells < MIN_COLLAR_CELLS {
        return Err(InitialDataError::UnresolvedCollar { alpha, cells });
    }
    Ok(())
}

/// `phi(x) = 1 - eta(x)`: 0 on `[0, 1]`, 1 on `[2, inf)`.
fn lift(x: f64) -> f64 {
    1.0 - eta(x)
}

/// The stream function `phi(rho / alpha) psi0` of the no-slip initial velocity.
pub fn initial_stream(psi0: &ScalarField, alpha: f64) -> Result<ScalarField, InitialDataError> {
    check_alpha(psi0.grid(), alpha)?;
    check_wall(psi0)?;
    Ok(psi0.mul_radial(|r| lift((r - 1.0) / alpha)))
}

/// `u0_alpha = phi(rho / alpha) perp_grad(psi0) + alpha^{-1} phi'(rho / alpha) psi0 e_theta`.
///
/// The product rule is applied analytically, so `u0_alpha` is exactly zero on
/// `rho <= alpha` and exactly `perp_grad(psi0)` on `rho >= 2 alpha`.
pub fn make_initial(psi0: &ScalarField, alpha: f64) -> Result<VectorField, InitialDataError> {
    let g = psi0.grid();
    check_alpha(g, alpha)?;
    check_wall(psi0)?;
    let u0 = perp_grad(psi0);
    let mut ur = Array2::zeros(g.shape());
    let mut ut = Array2::zeros(g.shape());
    for i in 0..g.n_r() {
        let x = g.rho(i) / alpha;
        let p = lift(x);
        let dp = -eta_prime(x) / alpha;
        for j in 0..g.n_theta() {
            ur[[i, j]] = p * u0.u_r()[[i, j]];
            ut[[i, j]] = p * u0.u_theta()[[i, j]] + dp * psi0.values()[[i, j]];
        }
    }
    Ok(VectorField::new(g.clone(), ur, ut)?.with_tag(BoundaryTag::NoSlip)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub alpha: f64,
    /// `|u0_alpha - u0|`
    pub err0: f64,
    /// `|D^k u0_alpha|` for `k = 1, 2, 3`
    pub seminorms: [f64; 3],
    pub resolved: bool,
}

impl HypothesisEntry {
    /// `alpha^k |D^k u0_alpha|`
    pub fn scaled(&self, k: usize) -> f64 {
        self.alpha.powi(k as i32) * self.seminorms[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisEntry>,
    /// `|u0_alpha - u0|` against `alpha`.
    pub err_fit: RateFit,
    /// `|D^k u0_alpha|` against `alpha`, `k = 1, 2, 3`.
    pub seminorm_fits: [RateFit; 3],
}

impl HypothesisReport {
    /// `|u0_alpha - u0|` strictly decreases as `alpha` decreases.
    pub fn err_decreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].err0 < w[0].err0)
    }

    /// `alpha^k |D^k u0_alpha|` strictly decreases over the three smallest alphas.
    pub fn scaled_decreasing(&self, k: usize) -> bool {
        let n = self.entries.len();
        let tail = &self.entries[n.saturating_sub(3)..];
        tail.windows(2).all(|w| w[1].scaled(k) < w[0].scaled(k))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "err0", "d1", "d2", "d3", "alpha_d1", "alpha2_d2", "alpha3_d3", "resolved_flag"])?;
        for e in &self.entries {
            let mut row = vec![e.alpha.to_string(), e.err0.to_string()];
            row.extend(e.seminorms.iter().map(f64::to_string));
            row.extend((1..=3).map(|k| e.scaled(k).to_string()));
            row.push(e.resolved.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Measures `|u0_alpha - u0|` and `|D^k u0_alpha|` over `alphas` and fits their rates.
pub fn hypothesis_report(psi0: &ScalarField, alphas: &[f64]) -> Result<HypothesisReport, InitialDataError> {
    if alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(InitialDataError::BadSequence);
    }
    let u0 = perp_grad(psi0);
    let entries = alphas
        .iter()
        .map(|&alpha| {
            let ua = make_initial(psi0, alpha)?;
            Ok(HypothesisEntry {
                alpha,
                err0: norm_l2(&ua.sub(&u0)),
                seminorms: seminorms_123(&ua),
                resolved: true,
            })
        })
        .collect::<Result<Vec<_>, InitialDataError>>()?;
    let fit = |f: &dyn Fn(&HypothesisEntry) -> f64| {
        let pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.alpha, f(e))).collect();
        fit_rate(&pts)
    };
    let err_fit = fit(&|e| e.err0)?;
    let seminorm_fits = [fit(&|e| e.seminorms[0])?, fit(&|e| e.seminorms[1])?, fit(&|e| e.seminorms[2])?];
    Ok(HypothesisReport {
        entries,
        err_fit,
        seminorm_fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FitError;
    use crate::fields::{advect, curl_perp};
    use crate::grid::{build_grid, GridSpec};
    use std::f64::consts::PI;

    fn grid(n_r: usize, n_theta: usize) -> Arc<ExteriorGrid> {
        build_grid(GridSpec::new(n_r, n_theta, 8.0)).unwrap()
    }

    fn eta_second(x: f64) -> f64 {
        if x <= 1.0 || x >= 2.0 {
            return 0.0;
        }
        let y = 2.0 - x;
        60.0 * y * (1.0 - y) * (1.0 - 2.0 * y)
    }

    /// For radial `psi0 = f(r)`, `u0_alpha = g(r) e_theta` with
    /// `g = phi f' + phi' f / alpha`, so
    /// `|u0_alpha - u0|^2 = 2 pi int (g - f')^2 r dr` and
    /// `|grad u0_alpha|^2 = 2 pi int (g'^2 + g^2 / r^2) r dr`.
    /// Both integrals are evaluated by a fine trapezoid rule in `r`.
    fn collar_oracle(case: &InitialCase, alpha: f64) -> (f64, f64) {
        let f = |r: f64| case.radial_profile(r);
        let d = 1e-5;
        let f1 = |r: f64| (f(r + d) - f(r - d)) / (2.0 * d);
        let f2 = |r: f64| (f(r + d) - 2.0 * f(r) + f(r - d)) / (d * d);
        let n = 400_000;
        let b = 8.0;
        let h = (b - 1.0) / n as f64;
        let (mut e2, mut g2) = (0.0, 0.0);
        for k in 0..=n {
            let r = 1.0 + k as f64 * h;
            let x = (r - 1.0) / alpha;
            let p = 1.0 - eta(x);
            let p1 = -eta_prime(x) / alpha;
            let p2 = -eta_second(x) / (alpha * alpha);
            let g = p * f1(r) + p1 * f(r);
            let gp = p1 * f1(r) + p * f2(r) + p2 * f(r) + p1 * f1(r);
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            e2 += w * (g - f1(r)).powi(2) * r;
            g2 += w * (gp * gp + g * g / (r * r)) * r;
        }
        ((2.0 * PI * e2 * h).sqrt(), (2.0 * PI * g2 * h).sqrt())
    }

    #[test]
    fn radial_vortex_is_no_slip_and_steady() {
        let g = grid(128, 32);
        let psi = canonical_psi(&InitialCase::radial_vortex(), g).unwrap();
        let u0 = perp_grad(&psi);
        assert!(psi.values().row(0).iter().all(|v| *v == 0.0));
        // the squared wall factor makes u_theta vanish on the boundary up to the one-sided stencil error
        assert!(u0.u_theta().row(0).iter().all(|v| v.abs() < 1e-4));
        assert!(u0.u_r().row(0).iter().all(|v| *v == 0.0));
        let w0 = curl_perp(&u0);
        assert!(advect(&u0, &w0).max_abs() < 1e-12 * w0.max_abs());
        let mass = crate::fields::integrate(w0.grid(), &w0.values().mapv(f64::abs));
        // zero in the continuum; the discrete curl and quadrature leave an O(h^2) remainder
        assert!(w0.integral().abs() < 1e-5 * mass, "{} of {}", w0.integral(), mass);
    }

    #[test]
    fn zero_perturbation_is_radial_bit_exactly() {
        let g = grid(64, 16);
        let flat = InitialCase {
            epsilon: 0.0,
            ..InitialCase::perturbed_vortex()
        };
        let a = canonical_psi(&flat, g.clone()).unwrap();
        let b = canonical_psi(&InitialCase::radial_vortex(), g).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn parameter_and_support_errors() {
        let g = grid(64, 16);
        let bad = InitialCase { sigma: -1.0, ..InitialCase::default() };
        assert!(matches!(canonical_psi(&bad, g.clone()), Err(InitialDataError::BadParameter { name: "sigma", .. })));
        let wide = InitialCase { r0: 7.0, sigma: 1.0, ..InitialCase::default() };
        assert!(matches!(canonical_psi(&wide, g.clone()), Err(InitialDataError::SupportTooWide(_))));
        let file = InitialCase { path: None, ..InitialCase::from_file("x") };
        assert!(matches!(canonical_psi(&file, g.clone()), Err(InitialDataError::MissingPath)));
        let psi = canonical_psi(&InitialCase::default(), g.clone()).unwrap();
        assert!(matches!(make_initial(&psi, 0.6), Err(InitialDataError::BadAlpha(_))));
        assert!(matches!(make_initial(&psi, 0.01), Err(InitialDataError::UnresolvedCollar { .. })));
        assert!(matches!(hypothesis_report(&psi, &[0.1, 0.2, 0.3]), Err(InitialDataError::BadSequence)));
    }

    #[test]
    fn file_case_reads_snapshot() {
        let g = grid(32, 16);
        let psi = canonical_psi(&InitialCase::perturbed_vortex(), g.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi0.bin");
        Snapshot::from_field(&psi, 0.0, 0.0, 0.0)
            .save(&path, crate::snapshot::SnapshotFormat::Binary)
            .unwrap();
        let back = canonical_psi(&InitialCase::from_file(&path), g).unwrap();
        assert_eq!(back.values(), psi.values());
    }

    #[test]
    fn initial_velocity_structure() {
        let g = grid(256, 32);
        let case = InitialCase::perturbed_vortex().with_profile(BoundaryProfile::NonPenetrating);
        let psi = canonical_psi(&case, g.clone()).unwrap();
        let alpha = 0.1;
        let ua = make_initial(&psi, alpha).unwrap();
        assert_eq!(ua.tag(), BoundaryTag::NoSlip);
        let u0 = perp_grad(&psi);
        for i in 0..g.n_r() {
            let rho = g.rho(i);
            for j in 0..g.n_theta() {
                if rho <= alpha {
                    assert_eq!(ua.u_r()[[i, j]], 0.0);
                    assert_eq!(ua.u_theta()[[i, j]], 0.0);
                }
                if rho >= 2.0 * alpha {
                    assert_eq!(ua.u_r()[[i, j]], u0.u_r()[[i, j]]);
                    assert_eq!(ua.u_theta()[[i, j]], u0.u_theta()[[i, j]]);
                }
            }
        }
        // agrees with perp_grad of the lifted stream function up to the discrete product rule
        let direct = perp_grad(&initial_stream(&psi, alpha).unwrap());
        assert!(ua.sub(&direct).max_abs() < 5e-3 * ua.max_abs());
    }

    #[test]
    fn inactive_lift_gives_u0() {
        let g = grid(128, 16);
        let psi = ScalarField::from_fn(g, |r, t| {
            let x = (r - 3.0) / 0.5;
            if x.abs() < 1.0 { (1.0 - x * x).powi(3) * (1.0 + t.cos()) } else { 0.0 }
        })
        .unwrap();
        let ua = make_initial(&psi, 0.2).unwrap();
        assert_eq!(ua.sub(&perp_grad(&psi)).max_abs(), 0.0);
    }

    #[test]
    fn lift_error_matches_collar_oracle() {
        let g = grid(512, 16);
        let case = InitialCase::radial_vortex();
        let psi = canonical_psi(&case, g).unwrap();
        let ua = make_initial(&psi, 0.1).unwrap();
        let measured = norm_l2(&ua.sub(&perp_grad(&psi)));
        let (oracle, _) = collar_oracle(&case, 0.1);
        assert!((measured - oracle).abs() < 0.01 * oracle, "{measured} vs {oracle}");
    }

    #[test]
    fn degenerate_when_lift_is_inactive() {
        let g = grid(256, 16);
        let psi = ScalarField::from_fn(g, |r, _| {
            let x = (r - 3.0) / 0.5;
            if x.abs() < 1.0 { (1.0 - x * x).powi(3) } else { 0.0 }
        })
        .unwrap();
        let err = hypothesis_report(&psi, &[0.4, 0.2, 0.1]).unwrap_err();
        assert!(matches!(err, InitialDataError::Fit(FitError::NonPositive { .. })));
    }

    #[test]
    fn non_penetrating_rates_match_oracle() {
        // Slopes over this alpha range, frozen from the collar oracle.
        let case = InitialCase {
            r0: 1.0,
            sigma: 1.0,
            ..InitialCase::radial_vortex().with_profile(BoundaryProfile::NonPenetrating)
        };
        let alphas = [0.2, 0.1, 0.05, 0.025];
        let (e, d): (Vec<_>, Vec<_>) = alphas
            .iter()
            .map(|&a| {
                let (e, d) = collar_oracle(&case, a);
                ((a, e), (a, d))
            })
            .unzip();
        let oracle_err = fit_rate(&e).unwrap().slope;
        let oracle_grad = fit_rate(&d).unwrap().slope;
        assert!((oracle_err - 0.468).abs() < 5e-3, "{oracle_err}");
        assert!((oracle_grad + 0.542).abs() < 5e-3, "{oracle_grad}");

        let g = build_grid(GridSpec::new(1024, 16, 8.0)).unwrap();
        let psi = canonical_psi(&case, g).unwrap();
        let report = hypothesis_report(&psi, &alphas).unwrap();
        assert!((report.err_fit.slope - oracle_err).abs() < 0.01, "{}", report.err_fit.slope);
        // the gradient carries an O((h / alpha)^2) error: 4% at alpha = 0.025 with 12 collar cells
        for (entry, (_, o)) in report.entries.iter().zip(&d) {
            let gap = (entry.seminorms[0] - o).abs() / o;
            let cells = 0.025 / entry.alpha;
            assert!(gap < 0.05 * cells * cells * 4.0, "alpha {}: {gap}", entry.alpha);
        }
        assert!((report.seminorm_fits[0].slope - oracle_grad).abs() < 0.03, "{}", report.seminorm_fits[0].slope);
        assert!(report.err_decreasing());
        for k in 1..=3 {
            assert!(report.scaled_decreasing(k), "k = {k}");
        }
    }
}

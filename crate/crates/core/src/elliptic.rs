//! Per-mode elliptic inversions on the exterior grid.
//!
//! After an FFT along each ring, every angular mode `m` decouples into a
//! radial ODE in `s`. Both problems here are discretized with exactly the
//! rows that [`crate::fields::laplacian`] uses at interior nodes, so the
//! discrete operator applied to a returned solution reproduces the input.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::banded::{BandedLu, BandedMatrix};
use crate::error::EllipticError;
use crate::fields::{curl_perp, laplacian, laplacian_raw, perp_grad, ScalarField, VectorField};
use crate::grid::ExteriorGrid;

/// Default relative tolerance on `|int w| / int |w|` for the mode-0 Poisson problem.
pub const DEFAULT_CIRCULATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeBoundary {
    /// `phi(1) = 0`, decaying Robin condition at `r_max`.
    Euler,
    /// `phi = d_r phi = 0` on the obstacle; decaying Robin condition and
    /// `Delta phi = 0` at `r_max`.
    NoSlip,
}

/// Factorized radial operator for one angular mode.
#[derive(Debug, Clone)]
pub struct ModeSolver {
    mode: usize,
    boundary: ModeBoundary,
    alpha: f64,
    lu: BandedLu,
}

impl ModeSolver {
    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn boundary(&self) -> ModeBoundary {
        self.boundary
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.lu.solve_in_place(b);
    }
}

/// Coefficients of the discrete mode-`m` Laplacian at row `i` for columns `i-1, i, i+1`.
fn lap_row(grid: &ExteriorGrid, m: usize, i: usize) -> [f64; 3] {
    let h2 = grid.h() * grid.h();
    let e = 1.0 / (grid.r_nodes()[i] * grid.r_nodes()[i]);
    let mm = (m * m) as f64;
    [e / h2, e * (-2.0 / h2 - mm), e / h2]
}

fn poisson_matrix(grid: &ExteriorGrid, m: usize) -> BandedMatrix {
    let n = grid.n_r();
    let inv2h = 1.0 / (2.0 * grid.h());
    let mut a = BandedMatrix::zeros(n, 2, 1);
    a.set(0, 0, 1.0);
    for i in 1..n - 1 {
        let c = lap_row(grid, m, i);
        a.set(i, i - 1, c[0]);
        a.set(i, i, c[1]);
        a.set(i, i + 1, c[2]);
    }
    // d_s phi + m phi = 0, one-sided
    a.set(n - 1, n - 3, inv2h);
    a.set(n - 1, n - 2, -4.0 * inv2h);
    a.set(n - 1, n - 1, 3.0 * inv2h + m as f64);
    a
}

fn stream_matrix(grid: &ExteriorGrid, m: usize, alpha: f64) -> BandedMatrix {
    let n = grid.n_r();
    let h2 = grid.h() * grid.h();
    let mm = (m * m) as f64;
    let a2 = alpha * alpha;
    let mut a = BandedMatrix::zeros(n, 3, 2);
    for i in 2..n - 2 {
        let e = 1.0 / (grid.r_nodes()[i] * grid.r_nodes()[i]);
        let mut row = [0.0; 5];
        let center = lap_row(grid, m, i);
        // L_i
        for (t, c) in center.iter().enumerate() {
            row[t + 1] += c;
        }
        // -alpha^2 e_i [ (L_{i-1} - 2 L_i + L_{i+1}) / h^2 - m^2 L_i ]
        for (shift, weight) in [(-1i64, 1.0 / h2), (0, -2.0 / h2 - mm), (1, 1.0 / h2)] {
            let inner = lap_row(grid, m, (i as i64 + shift) as usize);
            for (t, c) in inner.iter().enumerate() {
                row[(t as i64 + 1 + shift) as usize] -= a2 * e * weight * c;
            }
        }
        for (t, v) in row.iter().enumerate() {
            a.set(i, i + t - 2, *v);
        }
    }
    // Boundary rows are scaled to the size of their neighbours so the
    // factorization's backward error is uniform across rows.
    let lo = a.get(2, 2).abs();
    let hi = a.get(n - 3, n - 3).abs();
    // no-slip on the obstacle: phi = 0, one-sided d_s phi = 0
    a.set(0, 0, lo);
    a.set(1, 0, -3.0 * lo);
    a.set(1, 1, 4.0 * lo);
    a.set(1, 2, -lo);
    // far field: the same decaying Robin condition as the Poisson problem,
    // plus zero vorticity with the one-sided Laplacian of `fields`
    a.set(n - 2, n - 3, hi);
    a.set(n - 2, n - 2, -4.0 * hi);
    a.set(n - 2, n - 1, (3.0 + 2.0 * grid.h() * m as f64) * hi);
    let c = hi * h2;
    a.set(n - 1, n - 4, -c / h2);
    a.set(n - 1, n - 3, 4.0 * c / h2);
    a.set(n - 1, n - 2, -5.0 * c / h2);
    a.set(n - 1, n - 1, c * (2.0 / h2 - mm));
    a
}

/// Solves every FFT bin of `rhs` with the mode solver for `|m|`, keeping only
/// the rows selected by `active` from the right-hand side.
fn solve_spectral(
    grid: &ExteriorGrid,
    rhs: &Array2<f64>,
    solvers: &[ModeSolver],
    active: impl Fn(usize) -> bool + Sync,
) -> Array2<f64> {
    let (n_r, n_t) = grid.shape();
    let fft = grid.fft();
    let mut spectra: Vec<Vec<Complex64>> = Vec::with_capacity(n_r);
    let mut ring = vec![0.0; n_t];
    for i in 0..n_r {
        let mut buf = Vec::with_capacity(n_t);
        if active(i) {
            ring.iter_mut().zip(rhs.row(i).iter()).for_each(|(d, s)| *d = *s);
            fft.forward(&ring, &mut buf);
        } else {
            buf.resize(n_t, Complex64::new(0.0, 0.0));
        }
        spectra.push(buf);
    }
    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..n_t)
        .into_par_iter()
        .map(|k| {
            let solver = &solvers[fft.mode(k)];
            let mut re: Vec<f64> = spectra.iter().map(|s| s[k].re).collect();
            let mut im: Vec<f64> = spectra.iter().map(|s| s[k].im).collect();
            solver.solve_in_place(&mut re);
            solver.solve_in_place(&mut im);
            (re, im)
        })
        .collect();
    let mut out = Array2::zeros((n_r, n_t));
    let mut tmp = vec![0.0; n_t];
    for i in 0..n_r {
        let buf = &mut spectra[i];
        for (k, (re, im)) in columns.iter().enumerate() {
            buf[k] = Complex64::new(re[i], im[i]);
        }
        fft.inverse(buf, &mut tmp);
        out.row_mut(i).iter_mut().zip(tmp.iter()).for_each(|(d, s)| *d = *s);
    }
    out
}

fn factor_all(
    grid: &ExteriorGrid,
    boundary: ModeBoundary,
    alpha: f64,
    build: impl Fn(usize) -> BandedMatrix,
) -> Result<Vec<ModeSolver>, EllipticError> {
    (0..=grid.n_theta() / 2)
        .map(|m| {
            build(m)
                .factorize()
                .map(|lu| ModeSolver {
                    mode: m,
                    boundary,
                    alpha,
                    lu,
                })
                .map_err(|_| EllipticError::Singular { mode: m })
        })
        .collect()
}

/// Poisson solver `Delta phi = w` with `phi = 0` on the obstacle.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: Arc<ExteriorGrid>,
    modes: Vec<ModeSolver>,
    circulation_tol: f64,
}

impl PoissonSolver {
    pub fn new(grid: Arc<ExteriorGrid>) -> Result<Self, EllipticError> {
        let modes = factor_all(&grid, ModeBoundary::Euler, 0.0, |m| poisson_matrix(&grid, m))?;
        Ok(Self {
            grid,
            modes,
            circulation_tol: DEFAULT_CIRCULATION_TOL,
        })
    }

    pub fn with_circulation_tol(mut self, tol: f64) -> Self {
        self.circulation_tol = tol;
        self
    }

    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }

    pub fn modes(&self) -> &[ModeSolver] {
        &self.modes
    }

    pub fn solve(&self, w: &ScalarField) -> Result<ScalarField, EllipticError> {
        w.check_finite()?;
        let total = w.integral();
        let size = crate::fields::integrate(&self.grid, &w.values().mapv(f64::abs));
        let tolerance = self.circulation_tol * size;
        if total.abs() > tolerance {
            return Err(EllipticError::NonzeroCirculation {
                integral: total,
                tolerance,
            });
        }
        let n = self.grid.n_r();
        let mut phi = solve_spectral(&self.grid, w.values(), &self.modes, |i| i > 0 && i < n - 1);
        phi.row_mut(0).fill(0.0);
        Ok(ScalarField::from_raw(self.grid.clone(), phi))
    }
}

/// Output of the fourth-order stream solve.
#[derive(Debug, Clone)]
pub struct StreamSolution {
    pub phi: ScalarField,
    pub w: ScalarField,
    pub u: VectorField,
}

/// Solver for `(Delta - alpha^2 Delta^2) phi = q` with no-slip conditions
/// `phi = d_r phi = 0` on the obstacle. At `r_max` the solution is matched to
/// a decaying potential flow: `d_r phi + (m / r) phi = 0` and `Delta phi = 0`.
#[derive(Debug, Clone)]
pub struct StreamSolver {
    grid: Arc<ExteriorGrid>,
    alpha: f64,
    modes: Vec<ModeSolver>,
}

impl StreamSolver {
    pub fn new(grid: Arc<ExteriorGrid>, alpha: f64) -> Result<Self, EllipticError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(EllipticError::AlphaNotPositive(alpha));
        }
        let modes = factor_all(&grid, ModeBoundary::NoSlip, alpha, |m| stream_matrix(&grid, m, alpha))?;
        Ok(Self { grid, alpha, modes })
    }

    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn modes(&self) -> &[ModeSolver] {
        &self.modes
    }

    pub fn solve_phi(&self, q: &ScalarField) -> ScalarField {
        let n = self.grid.n_r();
        let mut phi = solve_spectral(&self.grid, q.values(), &self.modes, |i| i >= 2 && i < n - 2);
        // Re-impose the no-slip rows in nodal space so the one-sided
        // derivative stencil sees them exactly (x/4 * 4 == x in binary).
        phi.row_mut(0).fill(0.0);
        let quarter = phi.row(2).mapv(|v| v / 4.0);
        phi.row_mut(1).assign(&quarter);
        ScalarField::from_raw(self.grid.clone(), phi)
    }

    pub fn solve(&self, q: &ScalarField) -> Result<StreamSolution, EllipticError> {
        q.check_finite()?;
        let phi = self.solve_phi(q);
        let w = laplacian(&phi);
        let u = perp_grad(&phi).with_tag(crate::fields::BoundaryTag::NoSlip)?;
        Ok(StreamSolution { phi, w, u })
    }
}

/// One-shot Poisson solve; builds the factorizations on every call.
pub fn solve_poisson(w: &ScalarField) -> Result<ScalarField, EllipticError> {
    PoissonSolver::new(w.grid().clone())?.solve(w)
}

/// One-shot fourth-order stream solve; builds the factorizations on every call.
pub fn solve_stream_helmholtz(q: &ScalarField, alpha: f64) -> Result<StreamSolution, EllipticError> {
    StreamSolver::new(q.grid().clone(), alpha)?.solve(q)
}

/// `q = w - alpha^2 Delta w` with `w = curl_perp(u)`.
pub fn recover_q(u: &VectorField, alpha: f64) -> ScalarField {
    let w = curl_perp(u);
    q_from_w(&w, alpha)
}

pub fn q_from_w(w: &ScalarField, alpha: f64) -> ScalarField {
    if alpha == 0.0 {
        return w.clone();
    }
    w.lin_comb(1.0, &laplacian(w), -alpha * alpha)
}

/// `(Delta - alpha^2 Delta^2) phi` with the discrete operators of [`crate::fields`].
pub fn helmholtz_operator(phi: &ScalarField, alpha: f64) -> ScalarField {
    let g = phi.grid();
    let lap = laplacian_raw(g, phi.values());
    let lap2 = laplacian_raw(g, &lap);
    ScalarField::from_raw(g.clone(), lap - lap2 * (alpha * alpha))
}

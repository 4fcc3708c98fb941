//! Nodal scalar and vector fields on the exterior grid, with the discrete
//! differential operators and norms used throughout the crate.
//!
//! Angular derivatives are spectral (FFT along each ring). Radial derivatives
//! are second-order finite differences in `s = ln r`, centered in the interior
//! and one-sided at `r = 1` and `r = r_max`.

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use rustfft::num_complex::Complex64;

use crate::error::FieldError;
use crate::grid::ExteriorGrid;

/// Boundary condition a vector field is known to satisfy on `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Free,
    /// Both components vanish on the boundary ring.
    NoSlip,
    /// The radial component vanishes on the boundary ring.
    NonPenetration,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Free => "free",
            BoundaryTag::NoSlip => "no-slip",
            BoundaryTag::NonPenetration => "non-penetration",
        }
    }
}

/// Absolute tolerance for boundary tags, relative to `max(1, max |u|)`.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<ExteriorGrid>,
    values: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<ExteriorGrid>,
    u_r: Array2<f64>,
    u_theta: Array2<f64>,
    tag: BoundaryTag,
}

fn check_shape(grid: &ExteriorGrid, a: &Array2<f64>) -> Result<(), FieldError> {
    if a.dim() != grid.shape() {
        return Err(FieldError::Shape {
            expected: grid.shape(),
            found: a.dim(),
        });
    }
    Ok(())
}

fn check_finite(a: &Array2<f64>) -> Result<(), FieldError> {
    match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((i, j), _)) => Err(FieldError::NonFinite(i, j)),
        None => Ok(()),
    }
}

impl ScalarField {
    pub fn new(grid: Arc<ExteriorGrid>, values: Array2<f64>) -> Result<Self, FieldError> {
        check_shape(&grid, &values)?;
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<ExteriorGrid>, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.shape());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<ExteriorGrid>) -> Self {
        let values = Array2::zeros(grid.shape());
        Self { grid, values }
    }

    /// Samples `f(r, theta)` at every node.
    pub fn from_fn(grid: Arc<ExteriorGrid>, f: impl Fn(f64, f64) -> f64) -> Result<Self, FieldError> {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| {
            f(grid.r_nodes()[i], grid.theta_nodes()[j])
        });
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<(), FieldError> {
        check_finite(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        let mut out = self.values.clone();
        Zip::from(&mut out)
            .and(&other.values)
            .for_each(|x, &y| *x = a * *x + b * y);
        Self::from_raw(self.grid.clone(), out)
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        Self::from_raw(self.grid.clone(), &self.values * a)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.lin_comb(1.0, other, -1.0)
    }

    /// Pointwise product with a radial profile `g(r_i)`.
    pub fn mul_radial(&self, g: impl Fn(f64) -> f64) -> ScalarField {
        let mut out = self.values.clone();
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let gi = g(self.grid.r_nodes()[i]);
            row.mapv_inplace(|v| v * gi);
        }
        Self::from_raw(self.grid.clone(), out)
    }

    /// Total integral `int f dx`.
    pub fn integral(&self) -> f64 {
        integrate(&self.grid, &self.values)
    }

    /// L2 norm restricted to the rings `i >= start`.
    pub fn norm_l2_from(&self, start: usize) -> f64 {
        let mut total = 0.0;
        for i in start..self.grid.n_r() {
            let ring: f64 = self.values.row(i).iter().map(|v| v * v).sum();
            total += self.grid.weight(i) * ring;
        }
        total.sqrt()
    }
}

impl VectorField {
    pub fn new(
        grid: Arc<ExteriorGrid>,
        u_r: Array2<f64>,
        u_theta: Array2<f64>,
    ) -> Result<Self, FieldError> {
        check_shape(&grid, &u_r)?;
        check_shape(&grid, &u_theta)?;
        check_finite(&u_r)?;
        check_finite(&u_theta)?;
        Ok(Self {
            grid,
            u_r,
            u_theta,
            tag: BoundaryTag::Free,
        })
    }

    pub(crate) fn from_raw(grid: Arc<ExteriorGrid>, u_r: Array2<f64>, u_theta: Array2<f64>) -> Self {
        Self {
            grid,
            u_r,
            u_theta,
            tag: BoundaryTag::Free,
        }
    }

    pub fn zeros(grid: Arc<ExteriorGrid>) -> Self {
        let z = Array2::zeros(grid.shape());
        Self::from_raw(grid, z.clone(), z)
    }

    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }

    pub fn u_r(&self) -> &Array2<f64> {
        &self.u_r
    }

    pub fn u_theta(&self) -> &Array2<f64> {
        &self.u_theta
    }

    pub fn tag(&self) -> BoundaryTag {
        self.tag
    }

    /// Attaches a boundary tag after checking the field satisfies it.
    pub fn with_tag(mut self, tag: BoundaryTag) -> Result<Self, FieldError> {
        self.check_tag(tag)?;
        self.tag = tag;
        Ok(self)
    }

    pub fn check_tag(&self, tag: BoundaryTag) -> Result<(), FieldError> {
        let scale = self
            .u_r
            .iter()
            .chain(self.u_theta.iter())
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = BOUNDARY_TOL * scale;
        let ring_max = |a: &Array2<f64>| a.row(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let max_abs = match tag {
            BoundaryTag::Free => return Ok(()),
            BoundaryTag::NoSlip => ring_max(&self.u_r).max(ring_max(&self.u_theta)),
            BoundaryTag::NonPenetration => ring_max(&self.u_r),
        };
        if max_abs > tol {
            return Err(FieldError::BoundaryTag {
                tag: tag.name(),
                max_abs,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.u_r.iter().chain(self.u_theta.iter()).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u_r
            .iter()
            .chain(self.u_theta.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a * self + b * other`; the tag is dropped.
    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> VectorField {
        let comb = |x: &Array2<f64>, y: &Array2<f64>| {
            let mut out = x.clone();
            Zip::from(&mut out).and(y).for_each(|p, &q| *p = a * *p + b * q);
            out
        };
        Self::from_raw(
            self.grid.clone(),
            comb(&self.u_r, &other.u_r),
            comb(&self.u_theta, &other.u_theta),
        )
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.lin_comb(1.0, other, -1.0)
    }

    /// Cartesian components `(u_x, u_y)` at every node.
    pub fn cartesian(&self) -> [Array2<f64>; 2] {
        let g = &self.grid;
        let mut ux = Array2::zeros(g.shape());
        let mut uy = Array2::zeros(g.shape());
        for ((i, j), x) in ux.indexed_iter_mut() {
            let (c, s) = (g.cos_theta()[j], g.sin_theta()[j]);
            let (ur, ut) = (self.u_r[[i, j]], self.u_theta[[i, j]]);
            *x = c * ur - s * ut;
            uy[[i, j]] = s * ur + c * ut;
        }
        [ux, uy]
    }

    /// Inverse of [`VectorField::cartesian`].
    pub fn from_cartesian(grid: Arc<ExteriorGrid>, ux: &Array2<f64>, uy: &Array2<f64>) -> VectorField {
        let mut ur = Array2::zeros(grid.shape());
        let mut ut = Array2::zeros(grid.shape());
        for ((i, j), x) in ur.indexed_iter_mut() {
            let (c, s) = (grid.cos_theta()[j], grid.sin_theta()[j]);
            *x = c * ux[[i, j]] + s * uy[[i, j]];
            ut[[i, j]] = -s * ux[[i, j]] + c * uy[[i, j]];
        }
        Self::from_raw(grid, ur, ut)
    }

    /// Circulation `oint u . tau` around ring `i`.
    pub fn circulation(&self, i: usize) -> f64 {
        let r = self.grid.r_nodes()[i];
        let mean = self.u_theta.row(i).sum() / self.grid.n_theta() as f64;
        2.0 * std::f64::consts::PI * r * mean
    }
}

/// Anything that can be viewed as a list of Cartesian components for norms.
pub trait Components {
    fn grid(&self) -> &Arc<ExteriorGrid>;
    fn components(&self) -> Vec<Array2<f64>>;
}

impl Components for ScalarField {
    fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }
    fn components(&self) -> Vec<Array2<f64>> {
        vec![self.values.clone()]
    }
}

impl Components for VectorField {
    fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }
    fn components(&self) -> Vec<Array2<f64>> {
        self.cartesian().to_vec()
    }
}

// ---------------------------------------------------------------------------
// Raw array kernels

/// `int a dx` with the grid quadrature, summed ring by ring in a fixed order.
pub fn integrate(grid: &ExteriorGrid, a: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (i, row) in a.axis_iter(Axis(0)).enumerate() {
        total += grid.weight(i) * row.sum();
    }
    total
}

/// Weighted inner product of two component lists.
pub fn inner_components(grid: &ExteriorGrid, a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..grid.n_r() {
        let mut ring = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            ring += x.row(i).iter().zip(y.row(i).iter()).map(|(p, q)| p * q).sum::<f64>();
        }
        total += grid.weight(i) * ring;
    }
    total
}

fn spectral_map(grid: &ExteriorGrid, a: &Array2<f64>, f: impl Fn(i64, usize) -> Complex64) -> Array2<f64> {
    let fft = grid.fft();
    let n = grid.n_theta();
    let mut out = Array2::zeros(a.dim());
    let mut buf = Vec::with_capacity(n);
    let mut ring = vec![0.0; n];
    for (row_in, mut row_out) in a.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        ring.iter_mut().zip(row_in.iter()).for_each(|(d, s)| *d = *s);
        fft.forward(&ring, &mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= f(fft.wavenumber(k), k);
        }
        let mut tmp = vec![0.0; n];
        fft.inverse(&mut buf, &mut tmp);
        row_out.iter_mut().zip(tmp).for_each(|(d, s)| *d = s);
    }
    out
}

/// Spectral `d/dtheta`; the Nyquist bin is dropped.
pub fn d_theta(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    let nyq = grid.n_theta() / 2;
    spectral_map(grid, a, |m, k| {
        if k == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, m as f64)
        }
    })
}

/// Spectral `d^2/dtheta^2`, multiplying mode `m` by `-m^2` (Nyquist included).
pub fn d_theta2(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    spectral_map(grid, a, |m, _| Complex64::new(-(m * m) as f64, 0.0))
}

/// Zeroes angular modes with `|m| > n_theta / 3`.
pub fn dealias(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    let cut = (grid.n_theta() / 3) as i64;
    spectral_map(grid, a, |m, _| {
        if m.abs() > cut {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Second-order `d/ds`, one-sided at both radial ends.
pub fn d_s(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    let n = grid.n_r();
    let inv = 1.0 / (2.0 * grid.h());
    let mut out = Array2::zeros(a.dim());
    for j in 0..grid.n_theta() {
        out[[0, j]] = (-3.0 * a[[0, j]] + 4.0 * a[[1, j]] - a[[2, j]]) * inv;
        for i in 1..n - 1 {
            out[[i, j]] = (a[[i + 1, j]] - a[[i - 1, j]]) * inv;
        }
        out[[n - 1, j]] = (3.0 * a[[n - 1, j]] - 4.0 * a[[n - 2, j]] + a[[n - 3, j]]) * inv;
    }
    out
}

/// Second-order `d^2/ds^2`, one-sided at both radial ends.
pub fn d_ss(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    let n = grid.n_r();
    let inv = 1.0 / (grid.h() * grid.h());
    let mut out = Array2::zeros(a.dim());
    for j in 0..grid.n_theta() {
        out[[0, j]] = (2.0 * a[[0, j]] - 5.0 * a[[1, j]] + 4.0 * a[[2, j]] - a[[3, j]]) * inv;
        for i in 1..n - 1 {
            out[[i, j]] = (a[[i + 1, j]] - 2.0 * a[[i, j]] + a[[i - 1, j]]) * inv;
        }
        out[[n - 1, j]] =
            (2.0 * a[[n - 1, j]] - 5.0 * a[[n - 2, j]] + 4.0 * a[[n - 3, j]] - a[[n - 4, j]]) * inv;
    }
    out
}

fn scale_rows(grid: &ExteriorGrid, a: &mut Array2<f64>, g: impl Fn(f64) -> f64) {
    for (i, mut row) in a.axis_iter_mut(Axis(0)).enumerate() {
        let gi = g(grid.r_nodes()[i]);
        row.mapv_inplace(|v| v * gi);
    }
}

/// `d/dr = e^{-s} d/ds`.
pub fn d_r(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    let mut out = d_s(grid, a);
    scale_rows(grid, &mut out, |r| 1.0 / r);
    out
}

/// Cartesian `(d/dx, d/dy)` of a nodal array.
pub fn d_xy(grid: &ExteriorGrid, a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let ar = d_r(grid, a);
    let at = d_theta(grid, a);
    let mut dx = Array2::zeros(a.dim());
    let mut dy = Array2::zeros(a.dim());
    for ((i, j), x) in dx.indexed_iter_mut() {
        let (c, s) = (grid.cos_theta()[j], grid.sin_theta()[j]);
        let inv_r = 1.0 / grid.r_nodes()[i];
        *x = c * ar[[i, j]] - s * inv_r * at[[i, j]];
        dy[[i, j]] = s * ar[[i, j]] + c * inv_r * at[[i, j]];
    }
    (dx, dy)
}

/// `e^{-2s} (d_ss + d_theta^2)` on a raw array.
pub fn laplacian_raw(grid: &ExteriorGrid, a: &Array2<f64>) -> Array2<f64> {
    let mut out = d_ss(grid, a);
    out += &d_theta2(grid, a);
    scale_rows(grid, &mut out, |r| 1.0 / (r * r));
    out
}

// ---------------------------------------------------------------------------
// Field operators

pub fn rho_field(grid: &Arc<ExteriorGrid>) -> ScalarField {
    let values = Array2::from_shape_fn(grid.shape(), |(i, _)| grid.rho(i));
    ScalarField::from_raw(grid.clone(), values)
}

/// `u = (-d2 psi, d1 psi)`: `u_r = -(1/r) d_theta psi`, `u_theta = d_r psi`.
pub fn perp_grad(psi: &ScalarField) -> VectorField {
    let g = psi.grid();
    let mut u_r = d_theta(g, psi.values());
    scale_rows(g, &mut u_r, |r| -1.0 / r);
    let u_theta = d_r(g, psi.values());
    VectorField::from_raw(g.clone(), u_r, u_theta)
}

/// `w = -d2 u1 + d1 u2 = (1/r)(d_r(r u_theta) - d_theta u_r)`.
pub fn curl_perp(u: &VectorField) -> ScalarField {
    let g = u.grid();
    let mut r_ut = u.u_theta().clone();
    scale_rows(g, &mut r_ut, |r| r);
    let mut w = d_r(g, &r_ut);
    w -= &d_theta(g, u.u_r());
    scale_rows(g, &mut w, |r| 1.0 / r);
    ScalarField::from_raw(g.clone(), w)
}

/// `(1/r)(d_r(r u_r) + d_theta u_theta)`.
pub fn divergence(u: &VectorField) -> ScalarField {
    let g = u.grid();
    let mut r_ur = u.u_r().clone();
    scale_rows(g, &mut r_ur, |r| r);
    let mut d = d_r(g, &r_ur);
    d += &d_theta(g, u.u_theta());
    scale_rows(g, &mut d, |r| 1.0 / r);
    ScalarField::from_raw(g.clone(), d)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    ScalarField::from_raw(f.grid().clone(), laplacian_raw(f.grid(), f.values()))
}

/// `u . grad q = u_r d_r q + (u_theta / r) d_theta q`.
pub fn advect(u: &VectorField, q: &ScalarField) -> ScalarField {
    let g = q.grid();
    let qr = d_r(g, q.values());
    let qt = d_theta(g, q.values());
    let mut out = Array2::zeros(g.shape());
    Zip::indexed(&mut out)
        .and(&qr)
        .and(&qt)
        .and(u.u_r())
        .and(u.u_theta())
        .for_each(|(i, _), o, &dr, &dt, &ur, &ut| {
            *o = ur * dr + ut / g.r_nodes()[i] * dt;
        });
    ScalarField::from_raw(g.clone(), out)
}

/// [`advect`] followed by 2/3-rule truncation of the product.
pub fn advect_dealiased(u: &VectorField, q: &ScalarField) -> ScalarField {
    let a = advect(u, q);
    ScalarField::from_raw(q.grid().clone(), dealias(q.grid(), a.values()))
}

pub fn norm_l2<F: Components + ?Sized>(f: &F) -> f64 {
    let comps = f.components();
    inner_components(f.grid(), &comps, &comps).sqrt()
}

/// Squared L2 norms of all `k`-th Cartesian derivative tensors for `k = 1..=max_k`.
pub fn seminorms_squared(grid: &ExteriorGrid, comps: &[Array2<f64>], max_k: usize) -> Vec<f64> {
    let mut level: Vec<Array2<f64>> = comps.to_vec();
    let mut out = Vec::with_capacity(max_k);
    for _ in 0..max_k {
        let mut next = Vec::with_capacity(level.len() * 2);
        for a in &level {
            let (dx, dy) = d_xy(grid, a);
            next.push(dx);
            next.push(dy);
        }
        out.push(inner_components(grid, &next, &next));
        level = next;
    }
    out
}

/// `|D^k f|_{L2}` with `k` nested Cartesian first-derivative stencils.
pub fn seminorm_hk<F: Components + ?Sized>(f: &F, k: usize) -> Result<f64, FieldError> {
    if !(1..=3).contains(&k) {
        return Err(FieldError::BadOrder(k));
    }
    let s = seminorms_squared(f.grid(), &f.components(), k);
    Ok(s[k - 1].sqrt())
}

/// `[|D f|, |D^2 f|, |D^3 f|]` in one pass.
pub fn seminorms_123<F: Components + ?Sized>(f: &F) -> [f64; 3] {
    let s = seminorms_squared(f.grid(), &f.components(), 3);
    [s[0].sqrt(), s[1].sqrt(), s[2].sqrt()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExteriorGrid, GridSpec};
    use std::f64::consts::PI;

    fn grid(n_r: usize, n_theta: usize, r_max: f64) -> Arc<ExteriorGrid> {
        Arc::new(ExteriorGrid::new(GridSpec::new(n_r, n_theta, r_max)).unwrap())
    }

    // psi = (r^-1 - r^-3) cos(theta) and its closed-form derivatives
    fn dipole(r: f64, t: f64) -> f64 {
        (1.0 / r - r.powi(-3)) * t.cos()
    }
    fn dipole_dr(r: f64, t: f64) -> f64 {
        (-r.powi(-2) + 3.0 * r.powi(-4)) * t.cos()
    }
    fn dipole_lap(r: f64, t: f64) -> f64 {
        -8.0 * r.powi(-5) * t.cos()
    }

    fn interior_max(a: &Array2<f64>) -> f64 {
        let n = a.nrows();
        a.slice(ndarray::s![1..n - 1, ..]).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        let g = grid(16, 8, 8.0);
        let mut a = Array2::zeros(g.shape());
        a[[3, 2]] = f64::NAN;
        assert!(matches!(ScalarField::new(g.clone(), a), Err(FieldError::NonFinite(3, 2))));
        assert!(matches!(
            ScalarField::new(g, Array2::zeros((3, 3))),
            Err(FieldError::Shape { .. })
        ));
    }

    #[test]
    fn perp_grad_of_radial_psi_is_azimuthal() {
        let g = grid(64, 16, 8.0);
        let psi = ScalarField::from_fn(g.clone(), |r, _| (-(r - 2.0).powi(2)).exp()).unwrap();
        let u = perp_grad(&psi);
        assert!(u.u_r().iter().all(|v| v.abs() < 1e-13));
        let exact = |r: f64| -2.0 * (r - 2.0) * (-(r - 2.0).powi(2)).exp();
        for i in 1..g.n_r() - 1 {
            let r = g.r_nodes()[i];
            assert!((u.u_theta()[[i, 0]] - exact(r)).abs() < 5e-3);
        }
    }

    #[test]
    fn perp_grad_dipole_on_boundary() {
        let g = grid(256, 16, 8.0);
        let psi = ScalarField::from_fn(g.clone(), dipole).unwrap();
        let u = perp_grad(&psi);
        for j in 0..g.n_theta() {
            let t = g.theta_nodes()[j];
            assert!(u.u_r()[[0, j]].abs() < 1e-14);
            assert!((u.u_theta()[[0, j]] - 2.0 * t.cos()).abs() < 2e-3);
        }
        assert!(u.clone().with_tag(BoundaryTag::NonPenetration).is_ok());
        assert!(u.with_tag(BoundaryTag::NoSlip).is_err());
        let zero = perp_grad(&ScalarField::zeros(g));
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn laplacian_of_dipole_and_harmonics() {
        let mut errs = Vec::new();
        for &n in &[64usize, 128, 256] {
            let g = grid(n, 16, 8.0);
            let f = ScalarField::from_fn(g.clone(), dipole).unwrap();
            let exact = ScalarField::from_fn(g.clone(), dipole_lap).unwrap();
            errs.push(interior_max(laplacian(&f).sub(&exact).values()));

            let c = ScalarField::from_fn(g.clone(), |_, _| 3.5).unwrap();
            assert!(interior_max(laplacian(&c).values()) < 1e-10);
            let lnr = ScalarField::from_fn(g.clone(), |r, _| r.ln()).unwrap();
            assert!(interior_max(laplacian(&lnr).values()) < 1e-9);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order} from {errs:?}");
    }

    #[test]
    fn rigid_rotation_curl_is_two() {
        let g = grid(64, 16, 8.0);
        let ut = Array2::from_shape_fn(g.shape(), |(i, _)| g.r_nodes()[i]);
        let u = VectorField::new(g.clone(), Array2::zeros(g.shape()), ut).unwrap();
        let w = curl_perp(&u);
        // centered d/ds of e^{2s} carries the factor sinh(2h)/(2h)
        let h = g.h();
        let expected = 2.0 * (2.0 * h).sinh() / (2.0 * h);
        for i in 1..g.n_r() - 1 {
            assert!((w.values()[[i, 3]] - expected).abs() < 1e-12);
        }
        // the point vortex is irrotational
        let ut = Array2::from_shape_fn(g.shape(), |(i, _)| 1.0 / g.r_nodes()[i]);
        let u = VectorField::new(g.clone(), Array2::zeros(g.shape()), ut).unwrap();
        assert!(curl_perp(&u).max_abs() < 1e-12);
        assert_eq!(curl_perp(&VectorField::zeros(g)).max_abs(), 0.0);
    }

    #[test]
    fn curl_of_perp_grad_matches_laplacian_at_second_order() {
        let mut errs = Vec::new();
        let mut divs = Vec::new();
        for &n in &[64usize, 128, 256] {
            let g = grid(n, 16, 8.0);
            let psi = ScalarField::from_fn(g.clone(), dipole).unwrap();
            let u = perp_grad(&psi);
            let w = curl_perp(&u);
            let lap = laplacian(&psi);
            let m = n - 1;
            let gap = w.sub(&lap).into_values();
            errs.push(gap.slice(ndarray::s![2..m - 1, ..]).iter().fold(0.0_f64, |a, v| a.max(v.abs())));
            let d = divergence(&u).into_values();
            divs.push(d.slice(ndarray::s![1..m, ..]).iter().fold(0.0_f64, |a, v| a.max(v.abs())));
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 2.0).abs() < 0.25, "curl/lap order {order}, {errs:?}");
        // spectral theta and linear radial stencils: the divergence cancels exactly
        assert!(divs.iter().all(|&d| d < 1e-10), "{divs:?}");
    }

    #[test]
    fn advection_identities() {
        let g = grid(64, 32, 8.0);
        let q = ScalarField::from_fn(g.clone(), |r, _| (-(r - 2.0).powi(2)).exp()).unwrap();
        let ut = Array2::from_shape_fn(g.shape(), |(i, _)| 1.0 / g.r_nodes()[i]);
        let u = VectorField::new(g.clone(), Array2::zeros(g.shape()), ut).unwrap();
        assert!(advect(&u, &q).max_abs() < 1e-13);
        assert_eq!(advect(&VectorField::zeros(g.clone()), &q).max_abs(), 0.0);

        // u = perp_grad(psi) is tangent to the level sets of psi, and the
        // discrete product cancels node by node since both use the same stencils
        for &n in &[32usize, 64] {
            let g = grid(n, 16, 8.0);
            let psi = ScalarField::from_fn(g.clone(), |r, t| {
                (1.0 - 1.0 / r) * (-(r - 2.5).powi(2)).exp() * (1.0 + 0.3 * (2.0 * t).cos())
            })
            .unwrap();
            assert!(advect(&perp_grad(&psi), &psi).max_abs() < 1e-14);
        }
    }

    #[test]
    fn norms_basic() {
        let g = grid(64, 32, 8.0);
        assert_eq!(norm_l2(&ScalarField::zeros(g.clone())), 0.0);
        let one = ScalarField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        let n2 = norm_l2(&one).powi(2);
        assert!((n2 - PI * 63.0).abs() / (PI * 63.0) < 1e-12);
        assert!(matches!(seminorm_hk(&one, 0), Err(FieldError::BadOrder(0))));
        assert!(matches!(seminorm_hk(&one, 4), Err(FieldError::BadOrder(4))));
        assert!(seminorm_hk(&one, 2).unwrap() < 1e-9);
    }

    #[test]
    fn parseval_consistency() {
        let g = grid(32, 16, 6.0);
        let f = ScalarField::from_fn(g.clone(), |r, t| (1.0 / r) * (t.cos() + 0.5 * (3.0 * t).sin() + 0.2)).unwrap();
        let nodal = norm_l2(&f).powi(2);
        let mut modal = 0.0;
        let mut buf = Vec::new();
        for i in 0..g.n_r() {
            let ring: Vec<f64> = f.values().row(i).to_vec();
            g.fft().forward(&ring, &mut buf);
            let power: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / g.n_theta() as f64;
            modal += g.weight(i) * power;
        }
        assert!((nodal - modal).abs() / nodal < 1e-10);
    }

    #[test]
    fn h1_seminorm_of_dipole_matches_radial_quadrature() {
        // oracle: |grad psi|^2 = f'(r)^2 cos^2 + (f/r)^2 sin^2, integrated by composite Simpson in r
        let f = |r: f64| 1.0 / r - r.powi(-3);
        let fp = |r: f64| -r.powi(-2) + 3.0 * r.powi(-4);
        let n = 20000;
        let (a, b) = (1.0, 8.0);
        let hh = (b - a) / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let r = a + k as f64 * hh;
            let wk = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += wk * PI * (fp(r).powi(2) + (f(r) / r).powi(2)) * r;
        }
        let oracle = (acc * hh / 3.0).sqrt();
        let g = grid(256, 16, 8.0);
        let psi = ScalarField::from_fn(g, dipole).unwrap();
        let h1 = seminorm_hk(&psi, 1).unwrap();
        assert!((h1 - oracle).abs() / oracle < 0.01, "{h1} vs {oracle}");
        let exact_dr = ScalarField::from_fn(psi.grid().clone(), dipole_dr).unwrap();
        assert!(perp_grad(&psi).u_theta().iter().zip(exact_dr.values().iter()).all(|(a, b)| (a - b).abs() < 0.05));
    }

    #[test]
    fn cartesian_round_trip() {
        let g = grid(16, 8, 5.0);
        let ur = Array2::from_shape_fn(g.shape(), |(i, j)| (i as f64 * 0.1).sin() + j as f64);
        let ut = Array2::from_shape_fn(g.shape(), |(i, j)| (j as f64 * 0.3).cos() - i as f64);
        let u = VectorField::new(g.clone(), ur.clone(), ut.clone()).unwrap();
        let [ux, uy] = u.cartesian();
        let back = VectorField::from_cartesian(g, &ux, &uy);
        assert!(back.u_r().iter().zip(ur.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(back.u_theta().iter().zip(ut.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn operators_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in 0.5f64..2.0, m in 1usize..4) {
                let g = grid(24, 16, 5.0);
                let f = ScalarField::from_fn(g.clone(), |r, t| (-(r - 2.0).powi(2) * p).exp() * (m as f64 * t).cos()).unwrap();
                let h = ScalarField::from_fn(g.clone(), |r, t| (1.0 - 1.0 / r) * (t + p).sin()).unwrap();
                let combo = f.lin_comb(a, &h, b);
                let lhs = laplacian(&combo);
                let rhs = laplacian(&f).lin_comb(a, &laplacian(&h), b);
                let scale = 1.0 + lhs.max_abs();
                prop_assert!(lhs.sub(&rhs).max_abs() / scale < 1e-12);
                let u1 = perp_grad(&combo);
                let u2 = perp_grad(&f).lin_comb(a, &perp_grad(&h), b);
                prop_assert!(u1.sub(&u2).max_abs() / (1.0 + u1.max_abs()) < 1e-12);
                let c1 = curl_perp(&u1);
                let c2 = curl_perp(&perp_grad(&f)).lin_comb(a, &curl_perp(&perp_grad(&h)), b);
                prop_assert!(c1.sub(&c2).max_abs() / (1.0 + c1.max_abs()) < 1e-11);
            }
        }
    }
}

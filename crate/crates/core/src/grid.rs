//! Log-polar tensor grid on the exterior of the unit disk.
//!
//! Nodes are uniform in `s = ln r` on `[0, ln r_max]` and uniform in `theta`
//! on `[0, 2pi)`. The boundary ring `r = 1` is radial index 0.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::GridError;

pub const MIN_RADIAL_NODES: usize = 8;
pub const MIN_ANGULAR_NODES: usize = 8;
pub const MIN_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_max: f64,
}

impl GridSpec {
    pub fn new(n_r: usize, n_theta: usize, r_max: f64) -> Self {
        Self { n_r, n_theta, r_max }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_r < MIN_RADIAL_NODES {
            return Err(GridError::TooFewRadialNodes(self.n_r));
        }
        if self.n_theta % 2 != 0 {
            return Err(GridError::OddAngularNodes(self.n_theta));
        }
        if self.n_theta < MIN_ANGULAR_NODES {
            return Err(GridError::TooFewAngularNodes(self.n_theta));
        }
        if !self.r_max.is_finite() || self.r_max <= 1.0 {
            return Err(GridError::RadiusNotExterior(self.r_max));
        }
        if self.r_max < MIN_RADIUS {
            return Err(GridError::RadiusTooSmall(self.r_max));
        }
        Ok(())
    }
}

/// Forward/inverse FFT plans along the angular direction.
#[derive(Clone)]
pub struct AngularTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AngularTransform {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform of one real ring.
    pub fn forward(&self, ring: &[f64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(ring.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward.process(out);
    }

    /// Inverse transform including the `1/n` normalization; returns real parts.
    pub fn inverse(&self, spectrum: &mut [Complex64], ring: &mut [f64]) {
        self.inverse.process(spectrum);
        let scale = 1.0 / self.n as f64;
        for (dst, c) in ring.iter_mut().zip(spectrum.iter()) {
            *dst = c.re * scale;
        }
    }

    /// Signed wavenumber of FFT bin `k`. The Nyquist bin reports `+n/2`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        if k <= self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Absolute angular mode index `m` of FFT bin `k`.
    pub fn mode(&self, k: usize) -> usize {
        self.wavenumber(k).unsigned_abs() as usize
    }
}

impl fmt::Debug for AngularTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngularTransform").field("n", &self.n).finish()
    }
}

#[derive(Debug, Clone)]
pub struct ExteriorGrid {
    spec: GridSpec,
    /// Uniform spacing in `s`.
    h: f64,
    s_nodes: Vec<f64>,
    theta_nodes: Vec<f64>,
    r_nodes: Vec<f64>,
    radial_weights: Vec<f64>,
    d_theta: f64,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    fft: AngularTransform,
}

impl PartialEq for ExteriorGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.s_nodes == other.s_nodes
            && self.theta_nodes == other.theta_nodes
            && self.r_nodes == other.r_nodes
            && self.radial_weights == other.radial_weights
    }
}

/// Builds the grid, returning it behind an `Arc` since fields share it.
pub fn build_grid(spec: GridSpec) -> Result<Arc<ExteriorGrid>, GridError> {
    ExteriorGrid::new(spec).map(Arc::new)
}

impl ExteriorGrid {
    pub fn new(spec: GridSpec) -> Result<Self, GridError> {
        spec.validate()?;
        let n_r = spec.n_r;
        let s_max = spec.r_max.ln();
        let h = s_max / (n_r - 1) as f64;
        let mut s_nodes: Vec<f64> = (0..n_r).map(|i| i as f64 * h).collect();
        s_nodes[n_r - 1] = s_max;
        let mut r_nodes: Vec<f64> = s_nodes.iter().map(|s| s.exp()).collect();
        r_nodes[0] = 1.0;
        r_nodes[n_r - 1] = spec.r_max;

        let d_theta = 2.0 * PI / spec.n_theta as f64;
        let theta_nodes: Vec<f64> = (0..spec.n_theta).map(|j| j as f64 * d_theta).collect();
        let cos_theta = theta_nodes.iter().map(|t| t.cos()).collect();
        let sin_theta = theta_nodes.iter().map(|t| t.sin()).collect();

        let radial_weights = radial_weights(&s_nodes, h);

        Ok(Self {
            spec,
            h,
            s_nodes,
            theta_nodes,
            r_nodes,
            radial_weights,
            d_theta,
            cos_theta,
            sin_theta,
            fft: AngularTransform::new(spec.n_theta),
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn n_r(&self) -> usize {
        self.spec.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.spec.n_theta
    }

    pub fn r_max(&self) -> f64 {
        self.spec.r_max
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn d_theta(&self) -> f64 {
        self.d_theta
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    pub fn r_nodes(&self) -> &[f64] {
        &self.r_nodes
    }

    pub fn theta_nodes(&self) -> &[f64] {
        &self.theta_nodes
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_theta
    }

    /// Radial part of the area weights: `int g(r) r dr ~ sum_i radial_weights[i] g(r_i)`.
    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn fft(&self) -> &AngularTransform {
        &self.fft
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.radial_weights[i] * self.d_theta
    }

    /// Full per-node quadrature weights, shape `(n_r, n_theta)`.
    pub fn weights(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_r(), self.n_theta()), |(i, _)| self.weight(i))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_r(), self.n_theta())
    }

    /// Distance to the obstacle boundary, `rho = r - 1`.
    pub fn rho(&self, i: usize) -> f64 {
        self.r_nodes[i] - 1.0
    }

    /// Physical radial spacing associated with node `i` (distance to the nearer neighbour).
    pub fn radial_spacing(&self, i: usize) -> f64 {
        let n = self.n_r();
        let up = if i + 1 < n { self.r_nodes[i + 1] - self.r_nodes[i] } else { f64::INFINITY };
        let down = if i > 0 { self.r_nodes[i] - self.r_nodes[i - 1] } else { f64::INFINITY };
        up.min(down)
    }

    /// Smallest physical spacing in either direction anywhere on the grid.
    pub fn min_spacing(&self) -> f64 {
        let radial = self.r_nodes[1] - self.r_nodes[0];
        radial.min(self.d_theta * self.r_nodes[0])
    }

    /// Number of radial nodes strictly inside the collar `rho < width`, not counting `rho = 0`.
    pub fn cells_within(&self, width: f64) -> usize {
        self.r_nodes.iter().skip(1).take_while(|&&r| r - 1.0 < width).count()
    }

    /// First radial index whose radius exceeds `fraction * r_max`.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let cut = fraction * self.r_max();
        self.r_nodes.iter().position(|&r| r > cut).unwrap_or(self.n_r())
    }
}

/// Weights from integrating the piecewise-linear interpolant of `g(s)` against
/// the exact Jacobian `e^{2s}` on every cell. Constants are integrated exactly,
/// so the weights sum to `(r_max^2 - 1) / 2` up to round-off.
fn radial_weights(s_nodes: &[f64], h: f64) -> Vec<f64> {
    let n = s_nodes.len();
    let mut w = vec![0.0; n];
    let a = 2.0 * h;
    // int_0^h e^{2t} dt and int_0^h (t/h) e^{2t} dt
    let full = a.exp_m1() / 2.0;
    let right = a.exp() / 2.0 - a.exp_m1() / (2.0 * a);
    let left = full - right;
    for i in 0..n - 1 {
        let base = (2.0 * s_nodes[i]).exp();
        w[i] += base * left;
        w[i + 1] += base * right;
    }
    w
}

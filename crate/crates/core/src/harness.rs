//! Sweeps over `(alpha, nu)`, error measurement against the Euler reference,
//! bound-shape checks and the energy-decomposition audit.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FlowModel, FlowState, ModelParams, RunOptions, SnapshotSchedule, Trajectory};
use crate::error::{FieldError, HarnessError};
use crate::fields::{d_xy, integrate, laplacian_raw, norm_l2, perp_grad, seminorm_hk, seminorms_123};
use crate::grid::{build_grid, GridSpec};
use crate::initial_data::{canonical_psi, initial_stream, make_initial, CaseKind, InitialCase};
use crate::rates::{fit_rate, NamedFit};

/// Tolerance for matching snapshot times of two trajectories.
const TIME_TOL: f64 = 1e-9;

/// `nu = c * alpha^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuLaw {
    pub c: f64,
    pub gamma: f64,
}

impl NuLaw {
    pub fn inviscid() -> Self {
        Self { c: 0.0, gamma: 2.0 }
    }

    pub fn nu(&self, alpha: f64) -> f64 {
        if self.c == 0.0 {
            0.0
        } else {
            self.c * alpha.powf(self.gamma)
        }
    }

    /// `nu = o(alpha^{4/3})`.
    pub fn conforming(&self) -> bool {
        self.c == 0.0 || self.gamma > 4.0 / 3.0
    }
}

impl Default for NuLaw {
    fn default() -> Self {
        Self::inviscid()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub nu_law: NuLaw,
    pub t_final: f64,
    pub case: InitialCase,
    pub grid: GridSpec,
    /// Corrector width `delta = alpha^delta_exponent` unless `delta` is set.
    pub delta_exponent: f64,
    pub delta: Option<f64>,
    pub cfl: f64,
    pub dt_max: f64,
    pub snapshot_interval: f64,
    pub tail_threshold: f64,
}

impl SweepConfig {
    pub fn new(alphas: Vec<f64>, grid: GridSpec, t_final: f64) -> Self {
        Self {
            alphas,
            nu_law: NuLaw::inviscid(),
            t_final,
            case: InitialCase::radial_vortex(),
            grid,
            delta_exponent: 4.0 / 3.0,
            delta: None,
            cfl: 0.5,
            dt_max: 0.05,
            snapshot_interval: 0.05,
            tail_threshold: 1e-8,
        }
    }

    pub fn delta(&self, alpha: f64) -> f64 {
        self.delta.unwrap_or_else(|| alpha.powf(self.delta_exponent))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            cfl: self.cfl,
            dt_max: self.dt_max,
            schedule: SnapshotSchedule::Interval(self.snapshot_interval),
            tail_threshold: self.tail_threshold,
            ..RunOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::BadConfig(m));
        if self.alphas.is_empty() {
            return bad("alphas is empty".into());
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 0.5)) {
            return bad(format!("alphas {:?} must lie in (0, 0.5]", self.alphas));
        }
        if self.alphas.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("alphas {:?} must be strictly decreasing", self.alphas));
        }
        if !(self.nu_law.c >= 0.0 && self.nu_law.c.is_finite() && self.nu_law.gamma.is_finite()) {
            return bad(format!("nu law c = {}, gamma = {} needs c >= 0", self.nu_law.c, self.nu_law.gamma));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final = {} must be positive", self.t_final));
        }
        if !(self.snapshot_interval > 0.0 && self.snapshot_interval <= self.t_final) {
            return bad(format!("snapshot_interval = {} must lie in (0, t_final]", self.snapshot_interval));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("delta = {d} must lie in (0, 1)"));
            }
        }
        let grid = build_grid(self.grid)?;
        for &alpha in &self.alphas {
            let cells = grid.cells_within(alpha);
            if cells < crate::boundary_layer::MIN_COLLAR_CELLS {
                return bad(format!("alpha = {alpha} leaves only {cells} radial cells in the collar"));
            }
        }
        self.case.validate()?;
        Ok(())
    }
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub nu: f64,
    pub delta: f64,
    /// `max_t |u(t) - u_euler(t)|`
    pub sup_err_l2: f64,
    pub final_err_l2: f64,
    /// `|u0_alpha - u0|`
    pub err0: f64,
    /// `alpha |grad u0_alpha|`
    pub alpha_grad_u0: f64,
    /// `max_t alpha^k |D^k u(t)|`
    pub apriori_max_1: f64,
    pub apriori_max_2: f64,
    pub apriori_max_3: f64,
    /// `max_t |E(t) + 2 nu int |grad u|^2 - E(0)| / E(0)`; the plain energy drift when `nu = 0`.
    pub energy_drift: f64,
    pub runtime_s: f64,
    pub status: String,
}

impl SweepRecord {
    fn failed(alpha: f64, nu: f64, delta: f64, runtime_s: f64, reason: String) -> Self {
        Self {
            alpha,
            nu,
            delta,
            sup_err_l2: f64::NAN,
            final_err_l2: f64::NAN,
            err0: f64::NAN,
            alpha_grad_u0: f64::NAN,
            apriori_max_1: f64::NAN,
            apriori_max_2: f64::NAN,
            apriori_max_3: f64::NAN,
            energy_drift: f64::NAN,
            runtime_s,
            status: format!("failed: {reason}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn apriori_max(&self) -> [f64; 3] {
        [self.apriori_max_1, self.apriori_max_2, self.apriori_max_3]
    }

    /// `nu^{1/2} alpha^{-2/3}`
    pub fn viscous_term(&self) -> f64 {
        self.nu.sqrt() * self.alpha.powf(-2.0 / 3.0)
    }

    /// `err0 + alpha |grad u0_alpha| + alpha^{1/3}`, plus `nu^{1/2} alpha^{-2/3}` when requested.
    pub fn bound_shape(&self, with_viscous: bool) -> f64 {
        let base = self.err0 + self.alpha_grad_u0 + self.alpha.cbrt();
        if with_viscous {
            base + self.viscous_term()
        } else {
            base
        }
    }
}

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `max` over shared snapshot times of `|u_a(t) - u_b(t)|`.
pub fn sup_error(a: &Trajectory, b: &Trajectory) -> Result<f64, HarnessError> {
    Ok(errors_in_time(a, b)?.into_iter().fold(0.0, f64::max))
}

/// `|u_a(t) - u_b(t)|` at every snapshot time.
pub fn errors_in_time(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>, HarnessError> {
    check_matching(a, b)?;
    Ok(a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| norm_l2(&x.u.sub(&y.u)))
        .collect())
}

fn check_matching(a: &Trajectory, b: &Trajectory) -> Result<(), HarnessError> {
    if a.snapshots.len() != b.snapshots.len()
        || a.snapshots.iter().zip(&b.snapshots).any(|(x, y)| (x.time - y.time).abs() > TIME_TOL)
    {
        return Err(HarnessError::TimeMismatch);
    }
    if let (Some(x), Some(y)) = (a.snapshots.first(), b.snapshots.first()) {
        if x.grid().spec() != y.grid().spec() {
            return Err(FieldError::GridMismatch.into());
        }
    }
    Ok(())
}

/// Euler reference trajectory: the frozen initial state for radial data,
/// otherwise a numerical Euler run on the same grid and snapshot schedule.
pub fn euler_reference(cfg: &SweepConfig) -> Result<Trajectory, HarnessError> {
    let grid = build_grid(cfg.grid)?;
    let psi0 = canonical_psi(&cfg.case, grid.clone())?;
    let model = FlowModel::new(grid, ModelParams::euler())?;
    let initial = model.state_from_stream(&psi0, 0.0)?;
    if cfg.case.name == CaseKind::RadialVortex {
        let times = snapshot_times(cfg.t_final, cfg.snapshot_interval);
        let mut frozen = Trajectory::frozen(&initial, &times);
        // the reference velocity is exactly perp_grad(psi0)
        for s in frozen.snapshots.iter_mut() {
            s.u = perp_grad(&psi0);
        }
        return Ok(frozen);
    }
    Ok(model.run_from(initial, cfg.t_final, &cfg.run_options(), &mut [])?)
}

/// Times produced by an interval snapshot schedule on `[0, t_final]`.
pub fn snapshot_times(t_final: f64, interval: f64) -> Vec<f64> {
    let eps = 1e-12 * t_final.max(1.0);
    let mut times = vec![0.0];
    let mut k = 1usize;
    loop {
        let t = k as f64 * interval;
        if t >= t_final - eps {
            times.push(t_final);
            break;
        }
        times.push(t);
        k += 1;
    }
    times
}

fn sweep_entry(cfg: &SweepConfig, alpha: f64, reference: &Trajectory) -> Result<SweepRecord, HarnessError> {
    let start = Instant::now();
    let grid = build_grid(cfg.grid)?;
    let nu = cfg.nu_law.nu(alpha);
    let params = if nu > 0.0 {
        ModelParams::second_grade(alpha, nu)
    } else {
        ModelParams::euler_alpha(alpha)
    };
    let psi0 = canonical_psi(&cfg.case, grid.clone())?;
    let u0 = perp_grad(&psi0);
    let u0_alpha = make_initial(&psi0, alpha)?;
    let err0 = norm_l2(&u0_alpha.sub(&u0));
    let alpha_grad_u0 = alpha * seminorm_hk(&u0_alpha, 1)?;

    let model = FlowModel::new(grid, params)?;
    let initial = model.state_from_stream(&initial_stream(&psi0, alpha)?, 0.0)?;
    let traj = model.run_from(initial, cfg.t_final, &cfg.run_options(), &mut [])?;
    let errors = errors_in_time(&traj, reference)?;
    let mut apriori = [0.0_f64; 3];
    for s in &traj.snapshots {
        for (k, v) in seminorms_123(&s.u).iter().enumerate() {
            apriori[k] = apriori[k].max(alpha.powi(k as i32 + 1) * v);
        }
    }
    Ok(SweepRecord {
        alpha,
        nu,
        delta: cfg.delta(alpha),
        sup_err_l2: errors.iter().copied().fold(0.0, f64::max),
        final_err_l2: *errors.last().unwrap_or(&0.0),
        err0,
        alpha_grad_u0,
        apriori_max_1: apriori[0],
        apriori_max_2: apriori[1],
        apriori_max_3: apriori[2],
        energy_drift: traj.energy_balance_error(),
        runtime_s: start.elapsed().as_secs_f64(),
        status: "ok".into(),
    })
}

/// Runs every `alpha` of the sweep concurrently; records come back in input order.
/// A failing entry is marked in its status and does not stop the others.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>, HarnessError> {
    cfg.validate()?;
    let reference = euler_reference(cfg)?;
    Ok(cfg
        .alphas
        .par_iter()
        .map(|&alpha| {
            let start = Instant::now();
            sweep_entry(cfg, alpha, &reference).unwrap_or_else(|e| {
                SweepRecord::failed(alpha, cfg.nu_law.nu(alpha), cfg.delta(alpha), start.elapsed().as_secs_f64(), e.to_string())
            })
        })
        .collect())
}

/// Log-log fits of the successful records against `alpha`.
pub fn sweep_fits(records: &[SweepRecord]) -> Vec<NamedFit> {
    let ok: Vec<&SweepRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let quantities: [(&str, fn(&SweepRecord) -> f64); 6] = [
        ("sup_err_l2", |r| r.sup_err_l2),
        ("final_err_l2", |r| r.final_err_l2),
        ("err0", |r| r.err0),
        ("apriori_max_1", |r| r.apriori_max_1),
        ("apriori_max_2", |r| r.apriori_max_2),
        ("apriori_max_3", |r| r.apriori_max_3),
    ];
    quantities
        .iter()
        .filter_map(|(name, f)| {
            let pts: Vec<(f64, f64)> = ok.iter().map(|r| (r.alpha, f(r))).collect();
            fit_rate(&pts).ok().map(|fit| NamedFit::new(*name, &fit))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `C = sup_err / shape` at the coarsest alpha.
    pub constant: f64,
    /// `sup_err / (C shape)` per record.
    pub ratios: Vec<f64>,
}

impl BoundCheck {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fits `C` at the first record and measures every record against `C * bound_shape`.
pub fn bound_check(records: &[SweepRecord], with_viscous: bool) -> Option<BoundCheck> {
    let first = records.first()?;
    let constant = first.sup_err_l2 / first.bound_shape(with_viscous);
    Some(bound_check_with(records, constant, with_viscous))
}

/// Measures every record against a given constant.
pub fn bound_check_with(records: &[SweepRecord], constant: f64, with_viscous: bool) -> BoundCheck {
    BoundCheck {
        constant,
        ratios: records
            .iter()
            .map(|r| r.sup_err_l2 / (constant * r.bound_shape(with_viscous)))
            .collect(),
    }
}

/// `max over records of apriori_max_k / apriori_max_k(coarsest alpha)`, for `k = 1, 2, 3`.
pub fn apriori_spread(records: &[SweepRecord]) -> [f64; 3] {
    let mut out = [f64::NAN; 3];
    if let Some(first) = records.first() {
        let base = first.apriori_max();
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = records
                .iter()
                .map(|r| r.apriori_max()[k] / base[k])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

// ---------------------------------------------------------------------------
// Energy audit

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub t: f64,
    /// `|w(t)|^2 / 2 - |w(0)|^2 / 2`
    pub lhs: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub alpha: f64,
    pub nu: f64,
    pub delta: f64,
    pub rows: Vec<AuditRow>,
    /// `|u0|^2 + alpha^2 |grad u0|^2` of the second-grade run.
    pub energy0: f64,
    pub max_residual: f64,
    /// `max_residual / max(max |lhs|, max |sum I|, energy0)`
    pub relative_residual: f64,
    /// `(nu + alpha^2)(alpha^{-2} delta^{1/2} + delta^{-1}) + alpha^2` with unit constants.
    pub g_shape: f64,
}

impl AuditReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

type Pair = [Array2<f64>; 2];

fn vector_laplacian(g: &crate::grid::ExteriorGrid, u: &Pair) -> Pair {
    [laplacian_raw(g, &u[0]), laplacian_raw(g, &u[1])]
}

fn gradients(g: &crate::grid::ExteriorGrid, u: &Pair) -> [[Array2<f64>; 2]; 2] {
    // grads[i][j] = d_j u_i
    let (a, b) = d_xy(g, &u[0]);
    let (c, d) = d_xy(g, &u[1]);
    [[a, b], [c, d]]
}

fn dot(g: &crate::grid::ExteriorGrid, a: &Pair, b: &Pair) -> f64 {
    let mut prod = &a[0] * &b[0];
    Zip::from(&mut prod).and(&a[1]).and(&b[1]).for_each(|p, &x, &y| *p += x * y);
    integrate(g, &prod)
}

/// `-int ((w . grad) u_bar) . w`
pub(crate) fn convective_term(g: &crate::grid::ExteriorGrid, w: &Pair, u_bar: &Pair) -> f64 {
    let gb = gradients(g, u_bar);
    let mut conv: Pair = [Array2::zeros(g.shape()), Array2::zeros(g.shape())];
    for i in 0..2 {
        Zip::from(&mut conv[i])
            .and(&w[0])
            .and(&w[1])
            .and(&gb[i][0])
            .and(&gb[i][1])
            .for_each(|c, &w0, &w1, &dx, &dy| *c = w0 * dx + w1 * dy);
    }
    -dot(g, &conv, w)
}

/// Weights of the three-point derivative at `t[k]` using nodes `t[k0..k0 + 3]`.
fn derivative_weights(t: &[f64], k0: usize, k: usize) -> [f64; 3] {
    let (a, b, c) = (t[k0], t[k0 + 1], t[k0 + 2]);
    let x = t[k];
    [
        ((x - b) + (x - c)) / ((a - b) * (a - c)),
        ((x - a) + (x - c)) / ((b - a) * (b - c)),
        ((x - a) + (x - b)) / ((c - a) * (c - b)),
    ]
}

/// Evaluates `|w(t)|^2 / 2 - |w(0)|^2 / 2 = I1 + I2 + I3 + I4` for
/// `w = u - u_euler`, with
/// `I1 = nu int (Delta u . w)`, `I2 = -int ((w . grad) u_euler . w)`,
/// `I3 = alpha^2 int (d_t Delta u . w)` and
/// `I4 = alpha^2 int ((u . grad) Delta u + (grad u)^T Delta u) . w`,
/// each integrated in time by the trapezoid rule over the snapshots.
pub fn energy_audit(sg: &Trajectory, euler: &Trajectory, delta: f64) -> Result<AuditReport, HarnessError> {
    check_matching(sg, euler)?;
    let n = sg.snapshots.len();
    if n < 3 {
        return Err(HarnessError::TooFewSnapshots(n));
    }
    let alpha = sg.params.alpha;
    let nu = sg.params.nu;
    let a2 = alpha * alpha;
    let g = sg.snapshots[0].grid().clone();
    let times: Vec<f64> = sg.snapshots.iter().map(|s| s.time).collect();

    let cart: Vec<Pair> = sg.snapshots.iter().map(|s| s.u.cartesian()).collect();
    let lap: Vec<Pair> = cart.par_iter().map(|u| vector_laplacian(&g, u)).collect();

    let integrands: Vec<(f64, [f64; 4])> = (0..n)
        .into_par_iter()
        .map(|k| {
            let u = &cart[k];
            let ub = euler.snapshots[k].u.cartesian();
            let w: Pair = [&u[0] - &ub[0], &u[1] - &ub[1]];
            let half_w2 = 0.5 * dot(&g, &w, &w);

            let i1 = nu * dot(&g, &lap[k], &w);

            let i2 = convective_term(&g, &w, &ub);

            let k0 = k.saturating_sub(1).min(n - 3);
            let cw = derivative_weights(&times, k0, k);
            let dt_lap: Pair = std::array::from_fn(|c| {
                &lap[k0][c] * cw[0] + &lap[k0 + 1][c] * cw[1] + &lap[k0 + 2][c] * cw[2]
            });
            let i3 = a2 * dot(&g, &dt_lap, &w);

            let gl = gradients(&g, &lap[k]);
            let gu = gradients(&g, u);
            let mut stretch: Pair = [Array2::zeros(g.shape()), Array2::zeros(g.shape())];
            for i in 0..2 {
                // (u . grad) Delta u_i + sum_j d_i u_j Delta u_j
                Zip::from(&mut stretch[i])
                    .and(&u[0])
                    .and(&u[1])
                    .and(&gl[i][0])
                    .and(&gl[i][1])
                    .for_each(|s, &u0, &u1, &dx, &dy| *s = u0 * dx + u1 * dy);
                Zip::from(&mut stretch[i])
                    .and(&gu[0][i])
                    .and(&gu[1][i])
                    .and(&lap[k][0])
                    .and(&lap[k][1])
                    .for_each(|s, &d0, &d1, &l0, &l1| *s += d0 * l0 + d1 * l1);
            }
            let i4 = a2 * dot(&g, &stretch, &w);
            (half_w2, [i1, i2, i3, i4])
        })
        .collect();

    let mut rows = Vec::with_capacity(n);
    let mut acc = [0.0_f64; 4];
    for k in 0..n {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            for (m, a) in acc.iter_mut().enumerate() {
                *a += 0.5 * dt * (integrands[k - 1].1[m] + integrands[k].1[m]);
            }
        }
        let lhs = integrands[k].0 - integrands[0].0;
        rows.push(AuditRow {
            t: times[k],
            lhs,
            i1: acc[0],
            i2: acc[1],
            i3: acc[2],
            i4: acc[3],
            residual: (lhs - acc.iter().sum::<f64>()).abs(),
        });
    }

    let first = &sg.snapshots[0];
    let energy0 = state_energy(first);
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let max_lhs = rows.iter().map(|r| r.lhs.abs()).fold(0.0, f64::max);
    let max_sum = rows.iter().map(|r| (r.i1 + r.i2 + r.i3 + r.i4).abs()).fold(0.0, f64::max);
    let scale = max_lhs.max(max_sum).max(energy0);
    Ok(AuditReport {
        alpha,
        nu,
        delta,
        rows,
        energy0,
        max_residual,
        relative_residual: if scale > 0.0 { max_residual / scale } else { 0.0 },
        g_shape: g_shape(nu, alpha, delta),
    })
}

/// `|u|^2 + alpha^2 |grad u|^2`
pub fn state_energy(state: &FlowState) -> f64 {
    let a = state.params.alpha;
    let grad = seminorm_hk(&state.u, 1).unwrap_or(0.0);
    norm_l2(&state.u).powi(2) + a * a * grad * grad
}

/// `(nu + alpha^2)(alpha^{-2} delta^{1/2} + delta^{-1}) + alpha^2`
pub fn g_shape(nu: f64, alpha: f64, delta: f64) -> f64 {
    (nu + alpha * alpha) * (delta.sqrt() / (alpha * alpha) + 1.0 / delta) + alpha * alpha
}

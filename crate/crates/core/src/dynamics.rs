//! Time evolution in potential-vorticity form.
//!
//! The evolved scalar is `q = w - alpha^2 Delta w`, transported by `u` with
//! the diffusive source `nu Delta w`:
//!
//! ```text
//! d_t q + u . grad q = nu Delta w
//! ```
//!
//! For the Euler model `q = w` and the velocity comes from a Poisson solve;
//! otherwise it comes from the fourth-order no-slip stream problem.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::elliptic::{helmholtz_operator, PoissonSolver, StreamSolver};
use crate::error::{DynamicsError, EllipticError};
use crate::fields::{
    advect, advect_dealiased, curl_perp, laplacian, norm_l2, perp_grad, seminorms_squared, BoundaryTag,
    Components, ScalarField, VectorField,
};
use crate::grid::ExteriorGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SecondGrade,
    EulerAlpha,
    Euler,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SecondGrade => "second_grade",
            ModelKind::EulerAlpha => "euler_alpha",
            ModelKind::Euler => "euler",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub alpha: f64,
    pub nu: f64,
}

impl ModelParams {
    pub fn second_grade(alpha: f64, nu: f64) -> Self {
        Self {
            kind: ModelKind::SecondGrade,
            alpha,
            nu,
        }
    }

    pub fn euler_alpha(alpha: f64) -> Self {
        Self {
            kind: ModelKind::EulerAlpha,
            alpha,
            nu: 0.0,
        }
    }

    pub fn euler() -> Self {
        Self {
            kind: ModelKind::Euler,
            alpha: 0.0,
            nu: 0.0,
        }
    }

    /// Second-grade when `nu > 0`, Euler-alpha otherwise.
    pub fn regularized(alpha: f64, nu: f64) -> Self {
        if nu > 0.0 {
            Self::second_grade(alpha, nu)
        } else {
            Self::euler_alpha(alpha)
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidParams(msg));
        if !self.alpha.is_finite() || !self.nu.is_finite() || self.alpha < 0.0 || self.nu < 0.0 {
            return bad(format!("alpha = {}, nu = {} must be finite and >= 0", self.alpha, self.nu));
        }
        match self.kind {
            ModelKind::SecondGrade if self.alpha <= 0.0 || self.nu <= 0.0 => {
                bad("second_grade requires alpha > 0 and nu > 0".into())
            }
            ModelKind::EulerAlpha if self.alpha <= 0.0 || self.nu != 0.0 => {
                bad("euler_alpha requires alpha > 0 and nu = 0".into())
            }
            ModelKind::Euler if self.alpha != 0.0 || self.nu != 0.0 => {
                bad("euler requires alpha = 0 and nu = 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn required_tag(&self) -> BoundaryTag {
        match self.kind {
            ModelKind::Euler => BoundaryTag::NonPenetration,
            _ => BoundaryTag::NoSlip,
        }
    }
}

/// One time slice of a simulation.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub time: f64,
    pub q: ScalarField,
    pub w: ScalarField,
    pub phi: ScalarField,
    pub u: VectorField,
    pub params: ModelParams,
}

impl FlowState {
    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        self.q.grid()
    }
}

/// Scalar diagnostics recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub dt: f64,
    /// `|u|^2 + alpha^2 |grad u|^2`
    pub energy: f64,
    /// `|w|^2`
    pub enstrophy: f64,
    /// `|q|` restricted to `r > 0.9 r_max`
    pub tail_mass: f64,
    /// `|grad u|^2`
    pub dissipation: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub snapshots: Vec<FlowState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> Option<&FlowState> {
        self.snapshots.last()
    }

    /// Trajectory holding `state` unchanged at each of `times`.
    pub fn frozen(state: &FlowState, times: &[f64]) -> Trajectory {
        let snapshots = times
            .iter()
            .map(|&t| FlowState {
                time: t,
                ..state.clone()
            })
            .collect();
        Trajectory {
            params: state.params,
            snapshots,
            diagnostics: Vec::new(),
        }
    }

    /// `max_t |E(t) + 2 nu int_0^t |grad u|^2 - E(0)| / E(0)` with trapezoid time integration.
    pub fn energy_balance_error(&self) -> f64 {
        let Some(first) = self.diagnostics.first() else {
            return 0.0;
        };
        let nu = self.params.nu;
        let mut dissipated = 0.0;
        let mut worst: f64 = 0.0;
        for pair in self.diagnostics.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            dissipated += 0.5 * (b.t - a.t) * (a.dissipation + b.dissipation);
            let gap = b.energy + 2.0 * nu * dissipated - first.energy;
            worst = worst.max(gap.abs());
        }
        worst / first.energy
    }

    /// `max_t |E(t) - E(0)| / E(0)`.
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.diagnostics.first() else {
            return 0.0;
        };
        self.diagnostics
            .iter()
            .map(|d| (d.energy - first.energy).abs())
            .fold(0.0, f64::max)
            / first.energy
    }
}

/// Callback invoked after the initial state and after every accepted step.
pub trait Observer {
    fn observe(&mut self, state: &FlowState, diag: &StepDiagnostics, is_snapshot: bool) -> Result<(), DynamicsError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotSchedule {
    /// Keep every `n`-th step.
    Steps(usize),
    /// Keep states at multiples of this time interval; steps are shortened to land on them.
    Interval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub cfl: f64,
    pub dt_max: f64,
    pub schedule: SnapshotSchedule,
    /// Tail-mass threshold relative to `|q(0)|`.
    pub tail_threshold: f64,
    /// Radii above `tail_fraction * r_max` count towards the tail mass.
    pub tail_fraction: f64,
    pub keep_snapshots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dt_max: 0.05,
            schedule: SnapshotSchedule::Steps(1),
            tail_threshold: 1e-8,
            tail_fraction: 0.9,
            keep_snapshots: true,
        }
    }
}

#[derive(Debug, Clone)]
enum Inverter {
    Stream(StreamSolver),
    Poisson(PoissonSolver),
}

/// A configured model: parameters plus cached elliptic factorizations.
#[derive(Debug, Clone)]
pub struct FlowModel {
    grid: Arc<ExteriorGrid>,
    params: ModelParams,
    inverter: Inverter,
    dealias: bool,
}

/// Classical 4-stage Runge-Kutta step for `dy/dt = f(y)`.
pub fn rk4_step<F>(y: &ScalarField, dt: f64, mut f: F) -> Result<ScalarField, DynamicsError>
where
    F: FnMut(&ScalarField, usize) -> Result<ScalarField, DynamicsError>,
{
    let k1 = f(y, 1)?;
    let k2 = f(&y.lin_comb(1.0, &k1, 0.5 * dt), 2)?;
    let k3 = f(&y.lin_comb(1.0, &k2, 0.5 * dt), 3)?;
    let k4 = f(&y.lin_comb(1.0, &k3, dt), 4)?;
    let incr = k1.lin_comb(1.0, &k2, 2.0).lin_comb(1.0, &k3, 2.0).lin_comb(1.0, &k4, 1.0);
    Ok(y.lin_comb(1.0, &incr, dt / 6.0))
}

impl FlowModel {
    pub fn new(grid: Arc<ExteriorGrid>, params: ModelParams) -> Result<Self, DynamicsError> {
        params.validate()?;
        let inverter = match params.kind {
            ModelKind::Euler => Inverter::Poisson(PoissonSolver::new(grid.clone())?),
            _ => Inverter::Stream(StreamSolver::new(grid.clone(), params.alpha)?),
        };
        Ok(Self {
            grid,
            params,
            inverter,
            dealias: false,
        })
    }

    /// Enables 2/3-rule truncation of the advection product.
    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    /// Builds the consistent state for evolved scalar `q` (equal to `w` for Euler).
    pub fn state_from_q(&self, q: ScalarField, time: f64) -> Result<FlowState, DynamicsError> {
        match &self.inverter {
            Inverter::Stream(s) => {
                let sol = s.solve(&q)?;
                // The two rows at each radial end carry boundary conditions
                // instead of the equation. On the obstacle q is reset to the
                // value the solved stream function implies; in the far field
                // it is zero by the support assumption.
                let implied = sol.w.lin_comb(1.0, &laplacian(&sol.w), -self.params.alpha * self.params.alpha);
                let n = self.grid.n_r();
                let mut qv = q.into_values();
                for i in [0, 1] {
                    qv.row_mut(i).assign(&implied.values().row(i));
                }
                for i in [n - 2, n - 1] {
                    qv.row_mut(i).fill(0.0);
                }
                let q = ScalarField::from_raw(self.grid.clone(), qv);
                Ok(FlowState {
                    time,
                    q,
                    w: sol.w,
                    phi: sol.phi,
                    u: sol.u,
                    params: self.params,
                })
            }
            Inverter::Poisson(p) => {
                let phi = p.solve(&q)?;
                let u = perp_grad(&phi).with_tag(BoundaryTag::NonPenetration)?;
                Ok(FlowState {
                    time,
                    w: q.clone(),
                    q,
                    phi,
                    u,
                    params: self.params,
                })
            }
        }
    }

    /// Builds the state whose velocity is `perp_grad(psi)`, with `q` computed
    /// by the same discrete operators the solver inverts.
    pub fn state_from_stream(&self, psi: &ScalarField, time: f64) -> Result<FlowState, DynamicsError> {
        let q = match self.params.kind {
            ModelKind::Euler => laplacian(psi),
            _ => helmholtz_operator(psi, self.params.alpha),
        };
        self.state_from_q(q, time)
    }

    /// Builds the state from a velocity field after checking its boundary tag
    /// and zero circulation.
    pub fn state_from_velocity(&self, u0: &VectorField, time: f64) -> Result<FlowState, DynamicsError> {
        let tag = self.params.required_tag();
        u0.check_tag(tag).map_err(|_| DynamicsError::BoundaryCondition(tag.name()))?;
        let w = curl_perp(u0);
        let total = w.integral();
        let tolerance = crate::elliptic::DEFAULT_CIRCULATION_TOL
            * crate::fields::integrate(&self.grid, &w.values().mapv(f64::abs));
        if total.abs() > tolerance {
            return Err(DynamicsError::Circulation {
                circulation: total,
                tolerance,
            });
        }
        let q = crate::elliptic::q_from_w(&w, self.params.alpha);
        self.state_from_q(q, time)
    }

    /// `-u . grad q + nu Delta w`, or `-u . grad w` for Euler.
    pub fn rhs(&self, state: &FlowState) -> ScalarField {
        let adv = if self.dealias {
            advect_dealiased(&state.u, &state.q)
        } else {
            advect(&state.u, &state.q)
        };
        if self.params.nu > 0.0 {
            adv.lin_comb(-1.0, &laplacian(&state.w), self.params.nu)
        } else {
            adv.scale(-1.0)
        }
    }

    fn stage(&self, q: &ScalarField, time: f64, stage: usize) -> Result<ScalarField, DynamicsError> {
        if !q.is_finite() {
            return Err(DynamicsError::NumericalFailure { time, stage });
        }
        let state = self.state_from_q(q.clone(), time).map_err(|e| match e {
            DynamicsError::Elliptic(EllipticError::Field(_)) | DynamicsError::Field(_) => {
                DynamicsError::NumericalFailure { time, stage }
            }
            other => other,
        })?;
        let r = self.rhs(&state);
        if !r.is_finite() {
            return Err(DynamicsError::NumericalFailure { time, stage });
        }
        Ok(r)
    }

    /// One RK4 step of size `dt`; `dt` must not exceed the `cfl = 1` bound.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState, DynamicsError> {
        let limit = self.cfl_dt(state, 1.0, f64::INFINITY);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(DynamicsError::CflViolation {
                time: state.time,
                dt,
                limit,
            });
        }
        let t = state.time;
        let q = rk4_step(&state.q, dt, |y, stage| {
            if stage == 1 {
                Ok(self.rhs(state))
            } else {
                self.stage(y, t, stage)
            }
        })?;
        if !q.is_finite() {
            return Err(DynamicsError::NumericalFailure { time: t + dt, stage: 4 });
        }
        self.state_from_q(q, t + dt)
    }

    /// `cfl * min(dr_i / |u_r|, r_i dtheta / |u_theta|)`, capped by the explicit
    /// diffusion bound `h_min^2 / (4 nu)` and by `dt_max`.
    pub fn cfl_dt(&self, state: &FlowState, cfl: f64, dt_max: f64) -> f64 {
        cfl_dt(&state.u, self.params.nu, cfl, dt_max)
    }

    pub fn diagnostics(&self, state: &FlowState, dt: f64, opts: &RunOptions) -> StepDiagnostics {
        let g = &self.grid;
        let u2 = norm_l2(&state.u).powi(2);
        let grad2 = seminorms_squared(g, &state.u.components(), 1)[0];
        let a2 = self.params.alpha * self.params.alpha;
        let tail = state.q.norm_l2_from(g.tail_start(opts.tail_fraction));
        StepDiagnostics {
            t: state.time,
            dt,
            energy: u2 + a2 * grad2,
            enstrophy: norm_l2(&state.w).powi(2),
            tail_mass: tail,
            dissipation: grad2,
        }
    }

    /// Integrates from `initial` to `t_final`.
    pub fn run_from(
        &self,
        initial: FlowState,
        t_final: f64,
        opts: &RunOptions,
        observers: &mut [&mut dyn Observer],
    ) -> Result<Trajectory, DynamicsError> {
        if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
            return Err(DynamicsError::InvalidParams(format!("cfl = {} outside (0, 1]", opts.cfl)));
        }
        if !(t_final >= initial.time) || !t_final.is_finite() {
            return Err(DynamicsError::InvalidParams(format!("t_final = {t_final} precedes the start time")));
        }
        if let SnapshotSchedule::Interval(iv) = opts.schedule {
            if !(iv > 0.0) {
                return Err(DynamicsError::InvalidParams(format!("snapshot interval {iv} must be positive")));
            }
        }
        if let SnapshotSchedule::Steps(0) = opts.schedule {
            return Err(DynamicsError::InvalidParams("snapshot stride must be positive".into()));
        }
        let q0_norm = norm_l2(&initial.q);
        let threshold = opts.tail_threshold * q0_norm;
        let eps = 1e-12 * t_final.abs().max(1.0);

        let mut traj = Trajectory {
            params: self.params,
            snapshots: Vec::new(),
            diagnostics: Vec::new(),
        };
        let d0 = self.diagnostics(&initial, 0.0, opts);
        for obs in observers.iter_mut() {
            obs.observe(&initial, &d0, true)?;
        }
        traj.diagnostics.push(d0);
        let mut next_snap = match opts.schedule {
            SnapshotSchedule::Interval(iv) => initial.time + iv,
            SnapshotSchedule::Steps(_) => f64::INFINITY,
        };
        let start = initial.time;
        let mut snap_index = 1usize;
        let mut state = initial;
        if opts.keep_snapshots {
            traj.snapshots.push(state.clone());
        }
        let mut steps = 0usize;
        while state.time < t_final - eps {
            let mut dt = self.cfl_dt(&state, opts.cfl, opts.dt_max);
            let mut target = t_final;
            if next_snap < target {
                target = next_snap;
            }
            let mut lands = false;
            if state.time + dt >= target - eps {
                dt = target - state.time;
                lands = true;
            }
            let mut next = self.step(&state, dt)?;
            if lands {
                next.time = target;
            }
            steps += 1;
            let diag = self.diagnostics(&next, dt, opts);
            if !(diag.energy.is_finite() && diag.enstrophy.is_finite()) {
                return Err(DynamicsError::NumericalFailure { time: next.time, stage: 4 });
            }
            if diag.tail_mass > threshold {
                return Err(DynamicsError::TailMass {
                    time: next.time,
                    mass: diag.tail_mass,
                    threshold,
                });
            }
            let at_end = next.time >= t_final - eps;
            let is_snapshot = match opts.schedule {
                SnapshotSchedule::Steps(n) => steps % n == 0 || at_end,
                SnapshotSchedule::Interval(iv) => {
                    if lands && (next.time - next_snap).abs() <= eps {
                        snap_index += 1;
                        next_snap = start + snap_index as f64 * iv;
                        true
                    } else {
                        at_end
                    }
                }
            };
            for obs in observers.iter_mut() {
                obs.observe(&next, &diag, is_snapshot)?;
            }
            traj.diagnostics.push(diag);
            if is_snapshot && opts.keep_snapshots {
                traj.snapshots.push(next.clone());
            }
            state = next;
        }
        if !opts.keep_snapshots {
            traj.snapshots.push(state);
        }
        Ok(traj)
    }
}

/// Stability bound for velocity `u` and viscosity `nu`.
pub fn cfl_dt(u: &VectorField, nu: f64, cfl: f64, dt_max: f64) -> f64 {
    let g = u.grid();
    let mut adv = f64::INFINITY;
    for i in 0..g.n_r() {
        let dr = g.radial_spacing(i);
        let arc = g.r_nodes()[i] * g.d_theta();
        for j in 0..g.n_theta() {
            let ur = u.u_r()[[i, j]].abs();
            let ut = u.u_theta()[[i, j]].abs();
            if ur > 0.0 {
                adv = adv.min(dr / ur);
            }
            if ut > 0.0 {
                adv = adv.min(arc / ut);
            }
        }
    }
    let mut dt = (cfl * adv).min(dt_max);
    if nu > 0.0 {
        let h = g.min_spacing();
        dt = dt.min(h * h / (4.0 * nu));
    }
    dt
}

/// Runs `params` from velocity `u0`.
pub fn run(
    grid: Arc<ExteriorGrid>,
    params: ModelParams,
    u0: &VectorField,
    t_final: f64,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory, DynamicsError> {
    let model = FlowModel::new(grid, params)?;
    let initial = model.state_from_velocity(u0, 0.0)?;
    model.run_from(initial, t_final, opts, observers)
}

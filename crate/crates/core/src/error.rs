use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("n_r = {0} is below the minimum of 8 radial nodes")]
    TooFewRadialNodes(usize),
    #[error("n_theta = {0} must be even")]
    OddAngularNodes(usize),
    #[error("n_theta = {0} is below the minimum of 8 angular nodes")]
    TooFewAngularNodes(usize),
    #[error("r_max = {0} must exceed the obstacle radius 1")]
    RadiusNotExterior(f64),
    #[error("r_max = {0} is below the minimum truncation radius 4")]
    RadiusTooSmall(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field contains a non-finite value at node ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("array shape {found:?} does not match grid shape {expected:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("seminorm order k = {0} outside 1..=3")]
    BadOrder(usize),
    #[error("{tag} condition violated on the boundary ring: max |value| = {max_abs:e}")]
    BoundaryTag { tag: &'static str, max_abs: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("alpha = {0} must be positive for the no-slip stream problem")]
    AlphaNotPositive(f64),
    #[error("singular factorization for angular mode {mode}")]
    Singular { mode: usize },
    #[error("mode-0 Poisson problem is ill-posed: |total vorticity| = {integral:e} exceeds {tolerance:e}")]
    NonzeroCirculation { integral: f64, tolerance: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("rate fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("rate fit needs positive finite data, got ({x}, {y})")]
    NonPositive { x: f64, y: f64 },
    #[error("rate fit abscissae are not distinct")]
    DuplicateAbscissa,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite value at t = {time} in Runge-Kutta stage {stage}")]
    NumericalFailure { time: f64, stage: usize },
    #[error("time step {dt:e} violates the stability bound {limit:e} at t = {time}")]
    CflViolation { time: f64, dt: f64, limit: f64 },
    #[error("tail mass {mass:e} exceeds {threshold:e} at t = {time}: vorticity reached the truncation radius")]
    TailMass { time: f64, mass: f64, threshold: f64 },
    #[error("initial velocity does not satisfy the {0} boundary condition")]
    BoundaryCondition(&'static str),
    #[error("initial circulation {circulation:e} is not zero (tolerance {tolerance:e})")]
    Circulation { circulation: f64, tolerance: f64 },
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl DynamicsError {
    /// Numerical failures as opposed to precondition problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DynamicsError::NumericalFailure { .. }
                | DynamicsError::CflViolation { .. }
                | DynamicsError::TailMass { .. }
                | DynamicsError::Elliptic(EllipticError::Singular { .. })
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectorError {
    #[error("corrector width delta = {0} must lie in (0, 1)")]
    BadWidth(f64),
    #[error("stream function does not vanish on the boundary: max |psi| = {0:e}")]
    NonzeroOnBoundary(f64),
    #[error("corrector widths must be distinct, positive and decreasing")]
    BadSequence,
    #[error("rate fit rejected: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialDataError {
    #[error("invalid initial-case parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("initial stream function support reaches the truncation radius (tail fraction {0:e})")]
    SupportTooWide(f64),
    #[error("alpha = {0} outside (0, 0.5]")]
    BadAlpha(f64),
    #[error("collar rho < {alpha} holds only {cells} radial cells (need 4)")]
    UnresolvedCollar { alpha: f64, cells: usize },
    #[error("alpha sequence must be distinct, positive and decreasing")]
    BadSequence,
    #[error("rate fit rejected: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("file case requires a path")]
    MissingPath,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl Clone for SnapshotError {
    fn clone(&self) -> Self {
        match self {
            SnapshotError::Io(e) => SnapshotError::Io(std::io::Error::new(e.kind(), e.to_string())),
            SnapshotError::Format(s) => SnapshotError::Format(s.clone()),
            SnapshotError::Grid(g) => SnapshotError::Grid(g.clone()),
            SnapshotError::Field(f) => SnapshotError::Field(f.clone()),
        }
    }
}

impl PartialEq for SnapshotError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("snapshot times of the two trajectories do not match")]
    TimeMismatch,
    #[error("energy audit needs at least 3 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("invalid sweep configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Initial(#[from] InitialDataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

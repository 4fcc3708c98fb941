//! Command-line front end: JSON run configuration, subcommands and exit codes.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration or precondition
//! error, 3 numerical failure (non-finite values, step-size violation, tail
//! mass), 4 a verification check outside tolerance.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_layer::corrector_scaling_report;
use crate::dynamics::{FlowModel, FlowState, ModelKind, ModelParams, Observer, RunOptions, SnapshotSchedule, StepDiagnostics};
use crate::error::{DynamicsError, HarnessError, InitialDataError};
use crate::fields::ScalarField;
use crate::grid::{build_grid, GridSpec};
use crate::harness::{
    apriori_spread, bound_check, energy_audit, euler_reference, run_sweep, sweep_fits, write_sweep_csv, NuLaw,
    SweepConfig,
};
use crate::initial_data::{canonical_psi, hypothesis_report, initial_stream, InitialCase};
use crate::rates::NamedFit;
use crate::snapshot::{Snapshot, SnapshotFormat};
use crate::verify::{
    compact_bump_field, dipole, poisson_order_study, stokes_chain_error, stokes_d3_probe, Check, StudyError,
};

// ---------------------------------------------------------------------------
// Configuration

fn default_n_theta() -> usize {
    128
}
fn default_r_max() -> f64 {
    8.0
}
fn default_cfl() -> f64 {
    0.5
}
fn default_dt_max() -> f64 {
    0.05
}
fn default_stride() -> usize {
    10
}
fn default_tail() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_r: usize,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.n_r, self.n_theta, self.r_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub nu_c: f64,
    pub nu_gamma: f64,
    pub delta_exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub snapshot_interval: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.4, 0.2, 0.1, 0.05],
            nu_c: 0.0,
            nu_gamma: 2.0,
            delta_exponent: 4.0 / 3.0,
            delta: None,
            snapshot_interval: 0.05,
        }
    }
}

/// Where `verify-corrector` takes the Euler stream function from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiBarSource {
    /// The configured initial case.
    #[default]
    Case,
    /// `(r^-1 - r^-3) cos(theta)`.
    Dipole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySection {
    pub order_n_r: Vec<usize>,
    pub order_n_theta: usize,
    pub order_tol: f64,
    pub chain_n_r: usize,
    pub chain_alphas: Vec<f64>,
    pub chain_tol: f64,
    pub d3_alphas: Vec<f64>,
    pub d3_min_slope: f64,
    pub deltas: Vec<f64>,
    pub psi_bar: PsiBarSource,
    pub corrector_tol: f64,
    pub hypothesis_alphas: Vec<f64>,
    pub hypothesis_tol: f64,
    pub audit_snapshot_interval: f64,
    pub audit_tol: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            order_n_r: vec![32, 64, 128, 256],
            order_n_theta: 16,
            order_tol: 0.2,
            chain_n_r: 128,
            chain_alphas: vec![0.05, 0.2],
            chain_tol: 1e-9,
            d3_alphas: vec![0.4, 0.2, 0.1, 0.05],
            d3_min_slope: -2.1,
            deltas: vec![0.4, 0.2, 0.1, 0.05],
            psi_bar: PsiBarSource::Case,
            corrector_tol: 0.05,
            hypothesis_alphas: vec![0.2, 0.1, 0.05, 0.025],
            hypothesis_tol: 0.1,
            audit_snapshot_interval: 0.01,
            audit_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub nu: f64,
    pub grid: GridConfig,
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Keep every `snapshot_stride`-th step unless `snapshot_interval` is set.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    #[serde(default)]
    pub snapshot_format: SnapshotFormat,
    #[serde(default)]
    pub case: InitialCase,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default = "default_tail")]
    pub tail_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown config key(s): {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("config key `{key}` = {value} violates: {constraint}")]
    Range { key: String, value: String, constraint: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn range<T: std::fmt::Debug>(key: &str, value: T, constraint: &str) -> ConfigError {
    ConfigError::Range {
        key: key.into(),
        value: format!("{value:?}"),
        constraint: constraint.into(),
    }
}

fn check_alphas(key: &str, alphas: &[f64]) -> Result<(), ConfigError> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a <= 0.5)) || alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(range(key, alphas, "non-empty, strictly decreasing, each in (0, 0.5]"));
    }
    Ok(())
}

fn check_positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(range(key, v, "finite and > 0"));
    }
    Ok(())
}

impl RunConfig {
    pub fn params(&self) -> ModelParams {
        match self.model {
            ModelKind::SecondGrade => ModelParams::second_grade(self.alpha, self.nu),
            ModelKind::EulerAlpha => ModelParams::euler_alpha(self.alpha),
            ModelKind::Euler => ModelParams::euler(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(range("alpha", self.alpha, "finite and >= 0"));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(range("nu", self.nu, "finite and >= 0"));
        }
        match self.model {
            ModelKind::SecondGrade | ModelKind::EulerAlpha if !(self.alpha > 0.0 && self.alpha <= 0.5) => {
                return Err(range("alpha", self.alpha, "in (0, 0.5] for second_grade and euler_alpha"));
            }
            ModelKind::SecondGrade if self.nu <= 0.0 => {
                return Err(range("nu", self.nu, "> 0 for second_grade"));
            }
            ModelKind::EulerAlpha | ModelKind::Euler if self.nu != 0.0 => {
                return Err(range("nu", self.nu, "= 0 for inviscid models"));
            }
            _ => {}
        }
        let g = &self.grid;
        if g.n_r < crate::grid::MIN_RADIAL_NODES {
            return Err(range("grid.n_r", g.n_r, ">= 8"));
        }
        if g.n_theta < crate::grid::MIN_ANGULAR_NODES || !g.n_theta.is_multiple_of(2) {
            return Err(range("grid.n_theta", g.n_theta, "even and >= 8"));
        }
        if !(g.r_max.is_finite() && g.r_max >= crate::grid::MIN_RADIUS) {
            return Err(range("grid.r_max", g.r_max, ">= 4"));
        }
        check_positive("t_final", self.t_final)?;
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(range("cfl", self.cfl, "in (0, 1]"));
        }
        check_positive("dt_max", self.dt_max)?;
        if self.snapshot_stride == 0 {
            return Err(range("snapshot_stride", self.snapshot_stride, ">= 1"));
        }
        if let Some(iv) = self.snapshot_interval {
            check_positive("snapshot_interval", iv)?;
        }
        check_positive("tail_threshold", self.tail_threshold)?;
        self.case.validate().map_err(|e| match e {
            InitialDataError::BadParameter { name, value } => range(&format!("case.{name}"), value, "valid case parameter"),
            InitialDataError::MissingPath => range("case.path", "null", "required for the file case"),
            other => range("case", other.to_string(), "valid initial case"),
        })?;

        let s = &self.sweep;
        check_alphas("sweep.alphas", &s.alphas)?;
        if !(s.nu_c.is_finite() && s.nu_c >= 0.0) {
            return Err(range("sweep.nu_c", s.nu_c, "finite and >= 0"));
        }
        if !s.nu_gamma.is_finite() {
            return Err(range("sweep.nu_gamma", s.nu_gamma, "finite"));
        }
        check_positive("sweep.delta_exponent", s.delta_exponent)?;
        if let Some(d) = s.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(range("sweep.delta", d, "in (0, 1)"));
            }
        }
        check_positive("sweep.snapshot_interval", s.snapshot_interval)?;

        let v = &self.verify;
        if v.order_n_r.len() < 3 || v.order_n_r.iter().any(|&n| n < crate::grid::MIN_RADIAL_NODES) {
            return Err(range("verify.order_n_r", &v.order_n_r, "at least 3 resolutions, each >= 8"));
        }
        if v.order_n_theta < 8 || !v.order_n_theta.is_multiple_of(2) {
            return Err(range("verify.order_n_theta", v.order_n_theta, "even and >= 8"));
        }
        if v.chain_n_r < crate::grid::MIN_RADIAL_NODES {
            return Err(range("verify.chain_n_r", v.chain_n_r, ">= 8"));
        }
        if v.chain_alphas.is_empty() || v.chain_alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(range("verify.chain_alphas", &v.chain_alphas, "non-empty, each > 0"));
        }
        check_alphas("verify.d3_alphas", &v.d3_alphas)?;
        if v.deltas.len() < 3 || v.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) || v.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(range("verify.deltas", &v.deltas, "at least 3, strictly decreasing, each in (0, 1)"));
        }
        check_alphas("verify.hypothesis_alphas", &v.hypothesis_alphas)?;
        for (key, val) in [
            ("verify.order_tol", v.order_tol),
            ("verify.chain_tol", v.chain_tol),
            ("verify.corrector_tol", v.corrector_tol),
            ("verify.hypothesis_tol", v.hypothesis_tol),
            ("verify.audit_snapshot_interval", v.audit_snapshot_interval),
            ("verify.audit_tol", v.audit_tol),
        ] {
            check_positive(key, val)?;
        }
        if !v.d3_min_slope.is_finite() {
            return Err(range("verify.d3_min_slope", v.d3_min_slope, "finite"));
        }
        Ok(())
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            cfl: self.cfl,
            dt_max: self.dt_max,
            schedule: match self.snapshot_interval {
                Some(iv) => SnapshotSchedule::Interval(iv),
                None => SnapshotSchedule::Steps(self.snapshot_stride),
            },
            tail_threshold: self.tail_threshold,
            ..RunOptions::default()
        }
    }

    /// Sweep configuration with optional command-line overrides.
    pub fn sweep_config(&self, overrides: &SweepOverrides) -> SweepConfig {
        let s = &self.sweep;
        let mut cfg = SweepConfig::new(overrides.alphas.clone().unwrap_or_else(|| s.alphas.clone()), self.grid.spec(), self.t_final);
        cfg.nu_law = NuLaw {
            c: overrides.nu_c.unwrap_or(s.nu_c),
            gamma: overrides.nu_gamma.unwrap_or(s.nu_gamma),
        };
        cfg.case = self.case.clone();
        cfg.delta_exponent = s.delta_exponent;
        cfg.delta = s.delta;
        cfg.cfl = self.cfl;
        cfg.dt_max = self.dt_max;
        cfg.snapshot_interval = s.snapshot_interval.min(self.t_final);
        cfg.tail_threshold = self.tail_threshold;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Unknown keys are an error.
    Strict,
    /// Unknown keys are reported and ignored.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    /// Unknown keys skipped in lenient mode.
    pub ignored: Vec<String>,
}

/// Parses and validates a strict configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, Strictness::Strict).map(|p| p.config)
}

pub fn parse_config_with(text: &str, strictness: Strictness) -> Result<ParsedConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let mut ignored = Vec::new();
    let config: RunConfig = {
        let mut record = |path: serde_ignored::Path<'_>| ignored.push(path.to_string());
        let tracked = serde_ignored::Deserializer::new(&mut de, &mut record);
        serde_path_to_error::deserialize(tracked).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?
    };
    de.end().map_err(|e| ConfigError::Schema {
        path: ".".into(),
        message: e.to_string(),
    })?;
    if strictness == Strictness::Strict && !ignored.is_empty() {
        return Err(ConfigError::UnknownKeys(ignored));
    }
    config.validate()?;
    Ok(ParsedConfig { config, ignored })
}

pub fn load_config(path: &Path, strictness: Strictness) -> Result<ParsedConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_with(&text, strictness)
}

// ---------------------------------------------------------------------------
// Errors and exit codes

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {}", .0.join("; "))]
    Verification(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(ConfigError::Io { .. }) => 1,
            CliError::Config(_) | CliError::Precondition(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Precondition(e.to_string())
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Dynamics(d) => d.into(),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<InitialDataError> for CliError {
    fn from(e: InitialDataError) -> Self {
        match e {
            InitialDataError::Snapshot(crate::error::SnapshotError::Io(io)) => CliError::Io(io),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Elliptic(crate::error::EllipticError::Singular { .. }) => CliError::Numerical(e.to_string()),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

macro_rules! precondition_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Precondition(e.to_string())
            }
        }
    )*};
}
precondition_from!(
    crate::error::GridError,
    crate::error::FieldError,
    crate::error::CorrectorError,
    crate::error::FitError
);

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<crate::error::SnapshotError> for CliError {
    fn from(e: crate::error::SnapshotError) -> Self {
        match e {
            crate::error::SnapshotError::Io(io) => CliError::Io(io),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "sglab", version, about = "Second-grade and Euler-alpha flow past a disk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for output files; overrides `output_dir` in the configuration.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Reject unknown configuration keys (default).
    #[arg(long, overrides_with = "lenient")]
    pub strict: bool,
    /// Warn about unknown configuration keys and continue.
    #[arg(long, overrides_with = "strict")]
    pub lenient: bool,
}

impl CommonArgs {
    fn strictness(&self) -> Strictness {
        if self.lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepOverrides {
    /// Comma-separated alphas, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Viscosity law prefactor in `nu = c alpha^gamma`.
    #[arg(long)]
    pub nu_c: Option<f64>,
    /// Viscosity law exponent in `nu = c alpha^gamma`.
    #[arg(long)]
    pub nu_gamma: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One run: diagnostics CSV and stream-function snapshots.
    Simulate(CommonArgs),
    /// Sweep over alpha: sweep CSV and rate-fit JSON.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        overrides: SweepOverrides,
    },
    /// Poisson convergence order, fourth-order inverse consistency and the D^3 scaling probe.
    VerifyElliptic(CommonArgs),
    /// Boundary-layer corrector norms against delta.
    VerifyCorrector(CommonArgs),
    /// Rates of the no-slip initial-data family against alpha.
    VerifyInitialData(CommonArgs),
    /// Energy-decomposition audit of a second-grade run against the Euler reference.
    EnergyAudit(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c)
            | Command::VerifyElliptic(c)
            | Command::VerifyCorrector(c)
            | Command::VerifyInitialData(c)
            | Command::EnergyAudit(c) => c,
            Command::Sweep { common, .. } => common,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    let common = command.common();
    if common.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global();
    }
    let parsed = load_config(&common.config, common.strictness())?;
    for key in &parsed.ignored {
        eprintln!("warning: ignoring unknown config key `{key}`");
    }
    let cfg = parsed.config;
    let out = common
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    match command {
        Command::Simulate(_) => simulate(&cfg, &out),
        Command::Sweep { overrides, .. } => sweep(&cfg, overrides, &out),
        Command::VerifyElliptic(_) => verify_elliptic(&cfg, &out),
        Command::VerifyCorrector(_) => verify_corrector(&cfg, &out),
        Command::VerifyInitialData(_) => verify_initial_data(&cfg, &out),
        Command::EnergyAudit(_) => audit(&cfg, &out),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn finish(checks: &[Check]) -> Result<(), CliError> {
    for c in checks {
        println!("{c}");
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed))
    }
}

// ---------------------------------------------------------------------------
// simulate

/// Streams per-step diagnostics to CSV and snapshots of the stream function to files.
pub struct DiagnosticsWriter {
    diagnostics: csv::Writer<BufWriter<fs::File>>,
    dir: PathBuf,
    format: SnapshotFormat,
    written: usize,
    failure: Option<CliError>,
}

impl DiagnosticsWriter {
    pub fn create(dir: &Path, format: SnapshotFormat) -> Result<Self, CliError> {
        let file = BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?);
        let mut diagnostics = csv::Writer::from_writer(file);
        diagnostics.write_record(["t", "dt", "energy", "enstrophy", "tail_mass"])?;
        fs::create_dir_all(dir.join("snapshots"))?;
        Ok(Self {
            diagnostics,
            dir: dir.to_path_buf(),
            format,
            written: 0,
            failure: None,
        })
    }

    fn record(&mut self, state: &FlowState, d: &StepDiagnostics, is_snapshot: bool) -> Result<(), CliError> {
        self.diagnostics.write_record(&[
            d.t.to_string(),
            d.dt.to_string(),
            d.energy.to_string(),
            d.enstrophy.to_string(),
            d.tail_mass.to_string(),
        ])?;
        if is_snapshot {
            let name = format!("psi_{:05}.{}", self.written, self.format.extension());
            Snapshot::from_field(&state.phi, state.time, state.params.alpha, state.params.nu)
                .save(&self.dir.join("snapshots").join(name), self.format)?;
            self.written += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize, CliError> {
        if let Some(e) = self.failure.take() {
            return Err(e);
        }
        self.diagnostics.flush()?;
        Ok(self.written)
    }
}

impl Observer for DiagnosticsWriter {
    fn observe(&mut self, state: &FlowState, diag: &StepDiagnostics, is_snapshot: bool) -> Result<(), DynamicsError> {
        if self.failure.is_none() {
            if let Err(e) = self.record(state, diag, is_snapshot) {
                self.failure = Some(e);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    model: ModelKind,
    alpha: f64,
    nu: f64,
    t_final: f64,
    steps: usize,
    snapshots: usize,
    energy_initial: f64,
    energy_final: f64,
    energy_drift: f64,
    energy_balance_error: f64,
}

fn initial_state(cfg: &RunConfig, model: &FlowModel, psi0: &ScalarField) -> Result<FlowState, CliError> {
    Ok(match cfg.model {
        ModelKind::Euler => model.state_from_stream(psi0, 0.0)?,
        _ => model.state_from_stream(&initial_stream(psi0, cfg.alpha)?, 0.0)?,
    })
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = build_grid(cfg.grid.spec())?;
    let psi0 = canonical_psi(&cfg.case, grid.clone())?;
    let model = FlowModel::new(grid, cfg.params())?.with_dealias(cfg.dealias);
    let initial = initial_state(cfg, &model, &psi0)?;
    let mut writer = DiagnosticsWriter::create(out, cfg.snapshot_format)?;
    let opts = RunOptions {
        keep_snapshots: false,
        ..cfg.run_options()
    };
    let result = model.run_from(initial, cfg.t_final, &opts, &mut [&mut writer]);
    let snapshots = writer.finish()?;
    let traj = result?;
    let first = traj.diagnostics.first().map(|d| d.energy).unwrap_or(0.0);
    let last = traj.diagnostics.last().map(|d| d.energy).unwrap_or(0.0);
    let summary = RunSummary {
        model: cfg.model,
        alpha: cfg.params().alpha,
        nu: cfg.params().nu,
        t_final: cfg.t_final,
        steps: traj.diagnostics.len().saturating_sub(1),
        snapshots,
        energy_initial: first,
        energy_final: last,
        energy_drift: traj.energy_drift(),
        energy_balance_error: traj.energy_balance_error(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{} steps, {} snapshots, energy {:.10e} -> {:.10e}, balance error {:.3e}",
        summary.steps, summary.snapshots, summary.energy_initial, summary.energy_final, summary.energy_balance_error
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Serialize)]
struct SweepSummary {
    conforming: bool,
    bound_constant: Option<f64>,
    bound_ratios: Vec<f64>,
    apriori_spread: [f64; 3],
}

fn sweep(cfg: &RunConfig, overrides: &SweepOverrides, out: &Path) -> Result<(), CliError> {
    let sweep_cfg = cfg.sweep_config(overrides);
    if let Some(a) = &overrides.alphas {
        check_alphas("--alphas", a)?;
    }
    if !(sweep_cfg.nu_law.c >= 0.0) {
        return Err(range("--nu-c", sweep_cfg.nu_law.c, ">= 0").into());
    }
    let records = run_sweep(&sweep_cfg)?;
    write_sweep_csv(&records, BufWriter::new(fs::File::create(out.join("sweep.csv"))?))?;
    let fits: Vec<NamedFit> = sweep_fits(&records);
    write_json(&out.join("rates.json"), &fits)?;
    let conforming = sweep_cfg.nu_law.conforming();
    let with_viscous = sweep_cfg.nu_law.c > 0.0;
    let check = if records.iter().all(|r| r.is_ok()) {
        bound_check(&records, with_viscous)
    } else {
        None
    };
    let summary = SweepSummary {
        conforming,
        bound_constant: check.as_ref().map(|c| c.constant),
        bound_ratios: check.map(|c| c.ratios).unwrap_or_default(),
        apriori_spread: apriori_spread(&records),
    };
    write_json(&out.join("sweep_summary.json"), &summary)?;
    for r in &records {
        println!(
            "alpha {:<8} nu {:<10.3e} sup_err {:<12.5e} err0 {:<12.5e} {}",
            r.alpha, r.nu, r.sup_err_l2, r.err0, r.status
        );
    }
    if !conforming {
        println!("note: nu law violates nu = o(alpha^(4/3)); report only");
    }
    let failed: Vec<&str> = records.iter().filter(|r| !r.is_ok()).map(|r| r.status.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Numerical(failed.join("; ")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify-*

#[derive(Debug, Serialize)]
struct EllipticReport {
    order: crate::verify::OrderStudy,
    chain_errors: Vec<(f64, f64)>,
    d3_probe: crate::verify::ScalingProbe,
    checks: Vec<Check>,
}

fn verify_elliptic(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let v = &cfg.verify;
    let mut checks = Vec::new();
    let order = poisson_order_study(&v.order_n_r, v.order_n_theta, cfg.grid.r_max)?;
    checks.push(Check::within("poisson order", order.fit.slope, 2.0, v.order_tol));

    let chain_grid = build_grid(GridSpec::new(v.chain_n_r, cfg.grid.n_theta, cfg.grid.r_max))?;
    let phi_star = compact_bump_field(chain_grid)?;
    let mut chain_errors = Vec::new();
    for &alpha in &v.chain_alphas {
        let err = stokes_chain_error(&phi_star, alpha)?;
        checks.push(Check::at_most(format!("stokes chain alpha={alpha}"), err, v.chain_tol));
        chain_errors.push((alpha, err));
    }

    let grid = build_grid(cfg.grid.spec())?;
    let psi = canonical_psi(&cfg.case, grid)?;
    let d3_probe = stokes_d3_probe(&psi, &v.d3_alphas)?;
    checks.push(Check::at_least("D3 slope", d3_probe.fit.slope, v.d3_min_slope));

    let report = EllipticReport {
        order,
        chain_errors,
        d3_probe,
        checks: checks.clone(),
    };
    write_json(&out.join("elliptic.json"), &report)?;
    finish(&checks)
}

fn verify_corrector(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let v = &cfg.verify;
    let grid = build_grid(cfg.grid.spec())?;
    let psi_bar = match v.psi_bar {
        PsiBarSource::Case => canonical_psi(&cfg.case, grid)?,
        PsiBarSource::Dipole => ScalarField::from_fn(grid, dipole)?,
    };
    let report = corrector_scaling_report(&psi_bar, &v.deltas)?;
    report.write_csv(BufWriter::new(fs::File::create(out.join("corrector.csv"))?))?;
    let fits = vec![
        NamedFit::new("norm_ub", &report.norm_fit),
        NamedFit::new("seminorm_ub", &report.seminorm_fit),
    ];
    write_json(&out.join("corrector_rates.json"), &fits)?;
    for e in report.entries.iter().filter(|e| !e.resolved_flag) {
        println!("note: delta = {} is under-resolved", e.delta);
    }
    finish(&[
        Check::within("corrector norm slope", report.norm_fit.slope, 0.5, v.corrector_tol),
        Check::within("corrector gradient slope", report.seminorm_fit.slope, -0.5, v.corrector_tol),
    ])
}

fn verify_initial_data(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let v = &cfg.verify;
    let grid = build_grid(cfg.grid.spec())?;
    let psi0 = canonical_psi(&cfg.case, grid)?;
    let report = hypothesis_report(&psi0, &v.hypothesis_alphas)?;
    report.write_csv(BufWriter::new(fs::File::create(out.join("hypothesis.csv"))?))?;
    let mut fits = vec![NamedFit::new("err0", &report.err_fit)];
    for (k, f) in report.seminorm_fits.iter().enumerate() {
        fits.push(NamedFit::new(format!("d{}", k + 1), f));
    }
    write_json(&out.join("hypothesis_rates.json"), &fits)?;
    let mut checks = vec![
        Check::within("initial error slope", report.err_fit.slope, 0.5, v.hypothesis_tol),
        Check::within("D1 slope", report.seminorm_fits[0].slope, -0.5, v.hypothesis_tol),
        Check::new("initial error decreasing", report.entries.last().map_or(f64::NAN, |e| e.err0), "strictly decreasing", report.err_decreasing()),
    ];
    for k in 1..=3 {
        let last = report.entries.last().map_or(f64::NAN, |e| e.scaled(k));
        checks.push(Check::new(format!("alpha^{k} D{k} decreasing"), last, "strictly decreasing", report.scaled_decreasing(k)));
    }
    finish(&checks)
}

fn audit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if cfg.model == ModelKind::Euler {
        return Err(range("model", "euler", "second_grade or euler_alpha for the energy audit").into());
    }
    let v = &cfg.verify;
    let grid = build_grid(cfg.grid.spec())?;
    let psi0 = canonical_psi(&cfg.case, grid.clone())?;
    let model = FlowModel::new(grid, cfg.params())?.with_dealias(cfg.dealias);
    let initial = initial_state(cfg, &model, &psi0)?;
    let interval = v.audit_snapshot_interval.min(cfg.t_final);
    let opts = RunOptions {
        schedule: SnapshotSchedule::Interval(interval),
        ..cfg.run_options()
    };
    let traj = model.run_from(initial, cfg.t_final, &opts, &mut [])?;
    let mut sweep_cfg = cfg.sweep_config(&SweepOverrides::default());
    sweep_cfg.snapshot_interval = interval;
    let reference = euler_reference(&sweep_cfg)?;
    let delta = sweep_cfg.delta(cfg.alpha);
    let report = energy_audit(&traj, &reference, delta)?;
    report.write_csv(BufWriter::new(fs::File::create(out.join("audit.csv"))?))?;
    write_json(&out.join("audit.json"), &report)?;
    finish(&[Check::at_most("audit residual", report.relative_residual, v.audit_tol)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{"model": "euler_alpha", "alpha": 0.2, "grid": {"n_r": 64}, "t_final": 1.0}"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.cfl, 0.5);
        assert_eq!(cfg.grid.n_theta, 128);
        assert_eq!(cfg.grid.r_max, 8.0);
        assert_eq!(cfg.case, InitialCase::radial_vortex());
        assert_eq!(cfg.nu, 0.0);
    }

    #[test]
    fn range_errors_name_the_key() {
        let text = MINIMAL.replace("0.2", "-1");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Range { key, .. } if key == "alpha"), "{err}");
        assert!(err.to_string().contains("alpha"));
        let text = MINIMAL.replace("64", "63").replace("\"n_r\"", "\"n_theta\": 9, \"n_r\"");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("grid.n_theta"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_or_reported() {
        let text = MINIMAL.replace("\"alpha\"", "\"alpha_\": 1, \"alpha\"");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKeys(k) if k == &vec!["alpha_".to_string()]));
        assert!(err.to_string().contains("alpha_"));
        let parsed = parse_config_with(&text, Strictness::Lenient).unwrap();
        assert_eq!(parsed.ignored, vec!["alpha_".to_string()]);
        let nested = MINIMAL.replace("\"n_r\": 64", "\"n_r\": 64, \"nr\": 3");
        let err = parse_config(&nested).unwrap_err();
        assert!(err.to_string().contains("grid.nr"), "{err}");
    }

    #[test]
    fn schema_errors_carry_the_path() {
        let err = parse_config(r#"{"model": "euler_alpha", "alpha": 0.2, "grid": {"n_r": "x"}, "t_final": 1}"#).unwrap_err();
        assert!(matches!(&err, ConfigError::Schema { path, .. } if path == "grid.n_r"), "{err}");
        let err = parse_config(r#"{"model": "euler_alpha", "alpha": 0.2, "t_final": 1}"#).unwrap_err();
        assert!(err.to_string().contains("grid"), "{err}");
        let err = parse_config(r#"{"model": "navier", "alpha": 0.2, "grid": {"n_r": 64}, "t_final": 1}"#).unwrap_err();
        assert!(err.to_string().contains("model"), "{err}");
    }

    #[test]
    fn model_specific_ranges() {
        let sg = MINIMAL.replace("euler_alpha", "second_grade");
        assert!(matches!(parse_config(&sg), Err(ConfigError::Range { key, .. }) if key == "nu"));
        let viscous_alpha = MINIMAL.replace("\"alpha\"", "\"nu\": 0.1, \"alpha\"");
        assert!(matches!(parse_config(&viscous_alpha), Err(ConfigError::Range { key, .. }) if key == "nu"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Precondition("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(DynamicsError::NumericalFailure { time: 0.0, stage: 1 }).exit_code(), 3);
        assert_eq!(CliError::from(DynamicsError::InvalidParams("x".into())).exit_code(), 2);
        assert_eq!(CliError::Verification(vec!["a".into()]).exit_code(), 4);
        assert_eq!(CliError::Io(io::Error::other("x")).exit_code(), 1);
        assert_eq!(run(["sglab", "simulate"]), 2);
        assert_eq!(run(["sglab", "--help"]), 0);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop_oneof![Just(ModelKind::SecondGrade), Just(ModelKind::EulerAlpha), Just(ModelKind::Euler)],
            0.01f64..0.5,
            1e-6f64..1.0,
            8usize..512,
            (4usize..64).prop_map(|n| 2 * n),
            4.0f64..20.0,
            0.01f64..10.0,
            0.01f64..1.0,
            proptest::option::of(0.001f64..1.0),
            any::<bool>(),
            prop_oneof![Just(SnapshotFormat::Csv), Just(SnapshotFormat::Binary)],
        )
            .prop_map(|(model, alpha, nu, n_r, n_theta, r_max, t_final, cfl, interval, dealias, fmt)| {
                let (alpha, nu) = match model {
                    ModelKind::SecondGrade => (alpha, nu),
                    ModelKind::EulerAlpha => (alpha, 0.0),
                    ModelKind::Euler => (0.0, 0.0),
                };
                RunConfig {
                    model,
                    alpha,
                    nu,
                    grid: GridConfig { n_r, n_theta, r_max },
                    t_final,
                    cfl,
                    dt_max: 0.05,
                    snapshot_stride: 3,
                    snapshot_interval: interval,
                    snapshot_format: fmt,
                    case: InitialCase::perturbed_vortex(),
                    dealias,
                    tail_threshold: 1e-8,
                    output_dir: Some(PathBuf::from("out")),
                    sweep: SweepSection::default(),
                    verify: VerifySection::default(),
                }
            })
    }

    proptest! {
        #[test]
        fn config_round_trip(cfg in arb_config()) {
            let text = serde_json::to_string(&cfg).unwrap();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}

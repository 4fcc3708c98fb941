//! Energy decomposition of the error `u - u_euler` for a second-grade run.
//!
//! cargo run --release --example energy_audit

use sglab::dynamics::{FlowModel, ModelParams, RunOptions, SnapshotSchedule};
use sglab::grid::{build_grid, GridSpec};
use sglab::harness::{energy_audit, euler_reference, SweepConfig};
use sglab::initial_data::{canonical_psi, initial_stream, InitialCase};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (alpha, nu) = (0.2, 1e-4);
    let grid = build_grid(GridSpec::new(128, 128, 8.0))?;
    let psi0 = canonical_psi(&InitialCase::radial_vortex(), grid.clone())?;
    let model = FlowModel::new(grid.clone(), ModelParams::second_grade(alpha, nu))?;
    let start = model.state_from_stream(&initial_stream(&psi0, alpha)?, 0.0)?;
    let opts = RunOptions {
        schedule: SnapshotSchedule::Interval(0.01),
        ..RunOptions::default()
    };
    let traj = model.run_from(start, 1.0, &opts, &mut [])?;

    let mut cfg = SweepConfig::new(vec![alpha], grid.spec(), 1.0);
    cfg.snapshot_interval = 0.01;
    let reference = euler_reference(&cfg)?;
    let report = energy_audit(&traj, &reference, cfg.delta(alpha))?;

    println!("{:>5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}", "t", "lhs", "I1", "I2", "I3", "I4", "residual");
    for r in report.rows.iter().step_by(10) {
        println!("{:>5.2} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.2e}", r.t, r.lhs, r.i1, r.i2, r.i3, r.i4, r.residual);
    }
    println!("relative residual {:.3e}, g shape {:.4}", report.relative_residual, report.g_shape);
    Ok(())
}

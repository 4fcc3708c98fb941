//! Boundary-layer corrector norms against the collar width, printed as CSV.
//!
//! cargo run --release --example corrector_scaling

use sglab::boundary_layer::corrector_scaling_report;
use sglab::fields::ScalarField;
use sglab::grid::{build_grid, GridSpec};
use sglab::verify::dipole;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = build_grid(GridSpec::new(1024, 32, 8.0))?;
    let psi_bar = ScalarField::from_fn(grid, dipole)?;
    let report = corrector_scaling_report(&psi_bar, &[0.4, 0.2, 0.1, 0.05, 0.025, 0.0125])?;
    report.write_csv(std::io::stdout())?;
    eprintln!("|u_b| slope {:.3}, |grad u_b| slope {:.3}", report.norm_fit.slope, report.seminorm_fit.slope);
    for w in report.entries.windows(2) {
        let r = (w[0].delta / w[1].delta).ln();
        eprintln!(
            "delta {:<7} -> {:<7} local slopes {:.3} {:.3}",
            w[0].delta,
            w[1].delta,
            (w[0].norm_ub / w[1].norm_ub).ln() / r,
            (w[0].seminorm_ub / w[1].seminorm_ub).ln() / r
        );
    }
    Ok(())
}

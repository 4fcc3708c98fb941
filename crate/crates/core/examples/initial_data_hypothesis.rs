//! Rates of the lifted initial data `perp_grad(phi(rho / alpha) psi0)` against alpha,
//! for a profile that slips along the wall.
//!
//! cargo run --release --example initial_data_hypothesis

use sglab::grid::{build_grid, GridSpec};
use sglab::initial_data::{canonical_psi, hypothesis_report, BoundaryProfile, InitialCase};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = build_grid(GridSpec::new(1024, 16, 8.0))?;
    let case = InitialCase {
        r0: 1.0,
        sigma: 1.0,
        ..InitialCase::radial_vortex().with_profile(BoundaryProfile::NonPenetrating)
    };
    let psi0 = canonical_psi(&case, grid)?;
    let report = hypothesis_report(&psi0, &[0.2, 0.1, 0.05, 0.025])?;
    report.write_csv(std::io::stdout())?;
    eprintln!("|u0_alpha - u0| slope {:.3}", report.err_fit.slope);
    for (k, f) in report.seminorm_fits.iter().enumerate() {
        eprintln!("|D^{} u0_alpha| slope {:.3}, alpha^k scaling decreasing: {}", k + 1, f.slope, report.scaled_decreasing(k + 1));
    }
    Ok(())
}

//! Second-order convergence of the Poisson solve and exactness of the fourth-order chain.
//!
//! cargo run --release --example poisson_convergence

use sglab::grid::{build_grid, GridSpec};
use sglab::verify::{compact_bump_field, poisson_order_study, stokes_chain_error};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let study = poisson_order_study(&[32, 64, 128, 256, 512], 16, 8.0)?;
    println!("{:>6} {:>14} {:>10}", "n_r", "L2 error", "seconds");
    for ((n, e), s) in study.n_r.iter().zip(&study.errors).zip(&study.seconds) {
        println!("{n:>6} {e:>14.6e} {s:>10.2e}");
    }
    println!("fitted order {:.4}", study.fit.slope);

    let phi_star = compact_bump_field(build_grid(GridSpec::new(128, 64, 8.0))?)?;
    for alpha in [0.4, 0.2, 0.05, 0.01] {
        println!("alpha {alpha:<5} chain error {:.3e}", stokes_chain_error(&phi_star, alpha)?);
    }
    Ok(())
}

//! Sweep over alpha with `nu = c alpha^gamma`, compared with the Euler solution.
//!
//! cargo run --release --example singular_limit_sweep -- [c] [gamma]

use sglab::grid::GridSpec;
use sglab::harness::{apriori_spread, bound_check, run_sweep, sweep_fits, write_sweep_csv, NuLaw, SweepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let c: f64 = args.next().map_or(Ok(0.0), |a| a.parse())?;
    let gamma: f64 = args.next().map_or(Ok(2.0), |a| a.parse())?;

    let mut cfg = SweepConfig::new(vec![0.4, 0.2, 0.1, 0.05], GridSpec::new(192, 64, 8.0), 1.0);
    cfg.nu_law = NuLaw { c, gamma };
    if c > 0.0 {
        cfg.tail_threshold = 1e-6;
    }
    let records = run_sweep(&cfg)?;
    write_sweep_csv(&records, std::io::stdout())?;

    for fit in sweep_fits(&records) {
        eprintln!("{:<16} slope {:>7.3}", fit.quantity, fit.slope);
    }
    if let Some(check) = bound_check(&records, c > 0.0) {
        eprintln!("C = {:.4e}, ratios {:?}", check.constant, check.ratios);
    }
    eprintln!("a priori growth over the coarsest alpha: {:?}", apriori_spread(&records));
    if !cfg.nu_law.conforming() {
        eprintln!("nu law is outside nu = o(alpha^(4/3))");
    }
    Ok(())
}

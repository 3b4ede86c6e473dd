//! Growth of `‖φ(2^{-k}H) e^{-itH}‖_{L^1→L^1}` for the free Laplacian,
//! fitted against `1 + 4^k |t|`.

use spectral_lab::estimates::{run_scenario, ScenarioKind, ScenarioSpec};
use spectral_lab::grid::make_grid;
use spectral_lab::operators::{OperatorKind, OperatorSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 256, 64.0)?;
    let mut spec = ScenarioSpec::new(ScenarioKind::FreeGrowth, Some(OperatorSpec::new(OperatorKind::Laplacian, grid)));
    spec.name = Some("free_laplacian".into());
    spec.k_sweep = vec![2, 3, 4, 5];
    spec.u_sweep = vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
    let report = run_scenario(&spec)?;
    println!("{:>3} {:>8} {:>12} {:>12}", "k", "u", "lower", "upper");
    for r in &report.rows {
        println!("{:>3} {:>8.2} {:>12.5} {:>12.5}", r.k, r.u, r.lower, r.upper);
    }
    println!("{}", report.summary_line());
    Ok(())
}

//! `sup_k ‖φ(2^k H)‖_{L^1→L^1}` over a range of scales and a family of
//! cutoffs with different sharpness.

use spectral_lab::estimates::{run_scenario, ScenarioKind, ScenarioSpec};
use spectral_lab::grid::make_grid;
use spectral_lab::operators::{OperatorKind, OperatorSpec, PotentialSpec};

fn main() -> spectral_lab::Result<()> {
    // a smaller grid than the CLI default so the example runs in seconds
    let grid = make_grid(1, 512, 128.0)?;
    let kind = OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth: 1.0, width: 1.0 } };
    let mut spec = ScenarioSpec::new(ScenarioKind::MultiplierUniformity, Some(OperatorSpec::new(kind, grid)));
    spec.k_sweep = (-3..=3).collect();
    spec.family = vec![1.0, 2.0];
    spec.thresholds.tail_max = 5e-2;
    let report = run_scenario(&spec)?;
    for r in &report.rows {
        println!("k = {:>2}: norm in [{:.4}, {:.4}]", r.k, r.lower, r.upper);
    }
    for s in &report.skipped {
        println!("k = {:>2}: skipped ({})", s.k, s.reason);
    }
    println!("{}", report.summary_line());
    Ok(())
}

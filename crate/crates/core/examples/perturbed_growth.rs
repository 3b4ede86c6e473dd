//! The same growth measurement for a Schrödinger operator with an attractive
//! Gaussian well, where every cell needs a dense spectral function.

use spectral_lab::estimates::{run_scenario, ScenarioKind, ScenarioSpec};
use spectral_lab::grid::make_grid;
use spectral_lab::operators::{OperatorKind, OperatorSpec, PotentialSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 128, 32.0)?;
    let kind = OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth: 1.0, width: 1.0 } };
    let mut spec = ScenarioSpec::new(ScenarioKind::MainGrowth, Some(OperatorSpec::new(kind, grid)));
    spec.name = Some("gaussian_well".into());
    spec.k_sweep = vec![2, 3, 4, 5];
    spec.u_sweep = vec![1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
    let report = run_scenario(&spec)?;
    for s in &report.skipped {
        println!("skipped k={} t={:.3}: {}", s.k, s.t, s.reason);
    }
    println!("{}", report.summary_line());
    if report.provenance.shift > 0.0 {
        println!("spectrum shifted by {:.4}", report.provenance.shift);
    }
    Ok(())
}

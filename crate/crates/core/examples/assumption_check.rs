//! Off-diagonal block decay of the heat semigroup of the Laplacian: the
//! normalized ratios should stay bounded and flat in `t`.

use spectral_lab::grid::make_grid;
use spectral_lab::operators::{build_operator, OperatorKind, OperatorSpec};
use spectral_lab::verify::{check_assumption, AssumptionParams};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 1024, 32.0)?;
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?;
    let report = check_assumption(&h, &AssumptionParams::new(1.0, 2.0, 1))?;
    for r in &report.rows {
        println!("t = {:>8.4} j = {:>2}: ratio_uno {:?} ratio_due {:?}", r.t, r.j, r.ratio_uno, r.ratio_due);
    }
    for s in &report.skipped {
        println!("t = {:.4} skipped: {}", s.t, s.reason);
    }
    println!("pass: {}", report.pass());
    report.write_csv(std::io::stdout())?;
    Ok(())
}

//! Heat semigroups of `(-Δ)^α` at fixed spacing on growing tori: the
//! weighted Schur sum of the heat-kernel blocks settles when the kernel
//! decays fast enough and keeps growing otherwise.

use spectral_lab::operators::OperatorKind;
use spectral_lab::verify::due_refinement;

fn main() -> spectral_lab::Result<()> {
    let ns = [128, 256, 512, 1024];
    for alpha in [0.25, 0.75, 1.0, 2.0] {
        let rows = due_refinement(&OperatorKind::Fractional { alpha }, 1, &ns, 0.25, 1.0)?;
        let first = rows[0].1;
        let last = rows[rows.len() - 1].1;
        print!("alpha = {alpha:<5}");
        for (n, v) in &rows {
            print!("  n={n}: {v:.3}");
        }
        println!("  growth x{:.2}", last / first);
    }
    Ok(())
}

//! Operator norm brackets for a non-translation-invariant operator across
//! exponents: exact at `p ∈ {1, 2, ∞}`, probe and interpolation otherwise.

use spectral_lab::grid::make_grid;
use spectral_lab::normest::norm_bracket_with;
use spectral_lab::operators::{build_operator, heat_semigroup, OperatorKind, OperatorSpec, PotentialSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 128, 32.0)?;
    let kind = OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth: 2.0, width: 1.0 } };
    let h = build_operator(&OperatorSpec::new(kind, grid))?;
    let heat = heat_semigroup(&h, 0.5)?;
    for p in [1.0, 1.25, 1.5, 2.0, 3.0, 6.0, f64::INFINITY] {
        let b = norm_bracket_with(&heat, p, 16, 1)?;
        println!(
            "p = {p:<4}: [{:.6}, {:.6}] width {:.2e} ({} / {})",
            b.lower,
            b.upper,
            b.relative_width(),
            b.lower_method,
            b.upper_method
        );
    }
    Ok(())
}

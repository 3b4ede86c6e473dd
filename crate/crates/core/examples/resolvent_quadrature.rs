//! `(I + H)^{-β}` two ways: direct spectral evaluation and the Laguerre
//! quadrature of the heat semigroup.

use spectral_lab::grid::make_grid;
use spectral_lab::operators::{
    build_operator, relative_max_distance, resolvent_power, resolvent_power_quadrature_with, OperatorKind,
    OperatorSpec, ResolventQuadratureOptions,
};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 128, 32.0)?;
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?;
    for beta in [0.5, 1.0, 1.7, 3.0] {
        let direct = resolvent_power(&h, beta)?;
        let quad = resolvent_power_quadrature_with(&h, beta, &ResolventQuadratureOptions::default())?;
        println!(
            "beta = {beta}: {} nodes, relative distance {:.2e}",
            quad.nodes,
            relative_max_distance(&direct, &quad.operator)
        );
    }
    Ok(())
}

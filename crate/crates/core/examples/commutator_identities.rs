//! Commutator identities with position, checked to round-off, and the
//! growth of the resolvent propagator on an amalgam space.

use spectral_lab::commutators::{
    commutator_norms, propagator_growth, verify_duhamel_with, verify_expansion_base_with, CriterionOptions,
    IdentityOptions,
};
use spectral_lab::grid::make_grid;
use spectral_lab::operators::{build_operator, heat_semigroup, resolvent_power, OperatorKind, OperatorSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 64, 16.0)?;
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?;
    let opts = IdentityOptions { centre: 8.0, ..IdentityOptions::default() };
    let e = verify_expansion_base_with(&h, 0.5, &opts)?;
    println!("expansion residual {:.2e}, resolvent residual {:.2e}", e.expansion_residual, e.resolvent_residual);
    let r = resolvent_power(&h, 1.0)?;
    let d = verify_duhamel_with(&r, 2.0, &opts)?;
    println!("Duhamel residual {:.2e} with {} panels", d.residual, d.panels);

    let c = commutator_norms(&heat_semigroup(&h, 1.0)?, 0, 4)?;
    println!("heat commutator norms {:?}, fitted m {:.3}", c.norms, c.fitted_m);

    let grid = make_grid(1, 128, 64.0)?;
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?;
    let g = propagator_growth(&resolvent_power(&h, 1.0)?, &[1.0, 2.0, 4.0, 8.0, 16.0], &CriterionOptions::default())?;
    println!("propagator growth exponent {:.3} (claimed {})", g.fit.exponent, g.claimed_exponent);
    Ok(())
}

//! Decay exponents of heat kernels: stretched exponentials for polyharmonic
//! operators and a power law for the Poisson kernel.

use spectral_lab::estimates::{kernel_decay_fit, poisson_agreement, DecayModel};
use spectral_lab::grid::make_grid;
use spectral_lab::operators::{build_operator, heat_semigroup, OperatorKind, OperatorSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 4096, 256.0)?;
    for k in 1..=3u32 {
        let kind = if k == 1 { OperatorKind::Laplacian } else { OperatorKind::Polyharmonic { k } };
        let heat = heat_semigroup(&build_operator(&OperatorSpec::new(kind, grid))?, 1.0)?;
        let fit = kernel_decay_fit(&heat, DecayModel::Stretched)?;
        let m = 2.0 * k as f64;
        println!(
            "order {m}: fitted exponent {:.4}, expected {:.4}, {:.1} decades",
            fit.exponent,
            m / (m - 1.0),
            fit.decades
        );
    }
    let poisson = heat_semigroup(&build_operator(&OperatorSpec::new(OperatorKind::Fractional { alpha: 0.5 }, grid))?, 1.0)?;
    let fit = kernel_decay_fit(&poisson, DecayModel::Algebraic { length: 1.0 })?;
    println!("Poisson kernel: power {:.4}, expected 2", fit.exponent);
    println!("agreement with the closed form: {:.2e}", poisson_agreement(&grid, 1.0)?);
    Ok(())
}

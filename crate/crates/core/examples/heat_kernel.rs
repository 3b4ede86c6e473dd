//! Builds the heat semigroup of the Laplacian on a 1-d torus, compares its
//! kernel with the periodized Gaussian and prints a few `L^p` norms.

use num_complex::Complex64;
use spectral_lab::grid::{make_grid, GridFunction};
use spectral_lab::normest::norm_bracket;
use spectral_lab::operators::{build_operator, heat_semigroup, OperatorKind, OperatorSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 512, 64.0)?;
    let lap = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?;
    let t = 0.5;
    let heat = heat_semigroup(&lap, t)?;

    // kernel column at the origin, divided by the cell measure
    let column = heat.kernel();
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        let x = grid.coordinate(i);
        let exact: f64 = (-3..=3)
            .map(|w| {
                let y = x + w as f64 * grid.side();
                (-y * y / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
            })
            .sum();
        worst = worst.max((column[(i, 0)].re - exact).abs());
    }
    println!("t = {t}: max kernel error against the Gaussian {worst:.2e}");

    let f = GridFunction::from_fn(grid, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
    let g = heat.apply(&f)?;
    println!("mass before {:.6}, after {:.6}", f.lp_norm(1.0)?, g.lp_norm(1.0)?);
    for p in [1.0, 2.0, f64::INFINITY] {
        let b = norm_bracket(&heat, p)?;
        println!("||e^{{-tH}}||_{{{p}->{p}}} in [{:.6}, {:.6}]", b.lower, b.upper);
    }
    Ok(())
}

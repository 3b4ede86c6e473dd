//! Block norms of a heat semigroup on a dyadic partition, the weighted Schur
//! sums built from them and the amalgam operator bound they give.

use num_complex::Complex64;
use spectral_lab::amalgam::{
    amalgam_norm, amalgam_operator_bound, amalgam_operator_lower_bound, block_norm_matrix, embedding_constant,
    schur_sums,
};
use spectral_lab::grid::{make_grid, GridFunction};
use spectral_lab::operators::{build_operator, heat_semigroup, OperatorKind, OperatorSpec};

fn main() -> spectral_lab::Result<()> {
    let grid = make_grid(1, 256, 32.0)?;
    let heat = heat_semigroup(&build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?, 1.0)?;
    let j = 0;
    let blocks = block_norm_matrix(&heat, j, 1.0, 2.0)?;
    for n in [None, Some(1), Some(2)] {
        let s = schur_sums(&blocks, n);
        let bound = amalgam_operator_bound(&s, 1.0)?;
        println!("weight {n:?}: M1 = {:.4}, M2 = {:.4}, bound {bound:.4}", s.m1, s.m2);
    }
    let lower = amalgam_operator_lower_bound(&heat, 1.0, 2.0, 2.0, j, 8, 7)?;
    println!("probe lower bound on X^{{1,2}}: {lower:.4}");

    let f = GridFunction::from_fn(grid, |x| Complex64::new((-x[0].abs()).exp(), 0.0));
    for jj in -2..=2 {
        println!(
            "j = {jj:>2}: ||f||_X(1,2) = {:.4}, embedding constant {:.4}",
            amalgam_norm(&f, 1.0, 2.0, jj)?,
            embedding_constant(1.0, 2.0, jj, 1)?
        );
    }
    Ok(())
}

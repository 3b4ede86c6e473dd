//! Property suites shared by the `properties` test target and the acceptance
//! runner. Each suite returns a one-line detail on success and the first
//! counterexample on failure. Random cases come from a fixed-seed runner.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use spectral_lab::amalgam::{amalgam_norm, amalgam_operator_bound, block_norm_matrix, embedding_constant, schur_sums};
use spectral_lab::grid::{dyadic_partition, make_grid, GridFunction, TorusGrid};
use spectral_lab::normest::{matrix_norm_exact, norm_bracket};
use spectral_lab::operators::{
    build_operator, heat_semigroup, LinearGridOperator, OperatorKind, OperatorSpace, OperatorSpec, PotentialSpec,
};
use spectral_lab::verify::check_scaling_covariance;

pub type Suite = fn() -> Result<String, String>;

/// Every suite with its name, in reporting order.
#[allow(dead_code)]
pub const SUITES: [(&str, Suite); 7] = [
    ("schur soundness", schur_soundness),
    ("embedding soundness", embedding_soundness),
    ("block subadditivity", block_subadditivity),
    ("duality symmetry", duality_symmetry),
    ("norm-bracket validity", bracket_validity),
    ("scaling covariance", scaling_covariance),
    ("dual exponents", dual_exponents),
];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn small_grid() -> TorusGrid {
    make_grid(1, 16, 4.0).unwrap()
}

/// Random sparse kernel: each entry is nonzero with probability 0.3.
fn sparse_matrix(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec((0.0..1.0f64, -2.0..2.0f64, -2.0..2.0f64), n * n).prop_map(move |cells| {
        DMatrix::from_iterator(
            n,
            n,
            cells.into_iter().map(|(keep, re, im)| if keep < 0.3 { Complex64::new(re, im) } else { c(0.0) }),
        )
    })
}

fn grid_values(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn operator(m: DMatrix<Complex64>) -> LinearGridOperator {
    LinearGridOperator::from_matrix(OperatorSpace::on_grid(&small_grid()), m).unwrap()
}

/// `‖Af‖_{X^{p,q2}_j} ≤ bound · ‖f‖_{X^{p,q1}_j}` on 50 random sparse kernels.
pub fn schur_soundness() -> Result<String, String> {
    let worst = std::cell::Cell::new(0.0f64);
    runner(50)
        .run(&(sparse_matrix(16), grid_values(16), -1i32..=2), |(m, f, j)| {
            let a = operator(m);
            let f = GridFunction::new(small_grid(), f).unwrap();
            let af = a.apply(&f).unwrap();
            for (p, q1, q2) in [(1.0, 2.0, 2.0), (1.0, 1.0, 2.0), (2.0, 2.0, 2.0)] {
                let sums = schur_sums(&block_norm_matrix(&a, j, q1, q2).unwrap(), None);
                let bound = amalgam_operator_bound(&sums, p).unwrap();
                let lhs = amalgam_norm(&af, p, q2, j).unwrap();
                let rhs = bound * amalgam_norm(&f, p, q1, j).unwrap();
                prop_assert!(lhs <= rhs + 1e-8, "(p,q1,q2)=({p},{q1},{q2}) j={j}: {lhs} > {rhs}");
                if rhs > 0.0 {
                    worst.set(worst.get().max(lhs / rhs));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("50 kernels, max measured/bound {:.3}", worst.get()))
}

/// `‖f‖_{X^{p,q}_0} ≤ C(p,q,j,d) ‖f‖_{X^{p,q}_j}` for `j ∈ {-2..2}`, `d ∈ {1, 2}`.
pub fn embedding_soundness() -> Result<String, String> {
    let pairs = vec![(1.0, 2.0), (1.0, 1.0), (2.0, 4.0), (1.5, 3.0), (2.0, f64::INFINITY)];
    runner(50)
        .run(&(grid_values(64), -2i32..=2, prop::sample::select(pairs)), |(f, j, (p, q))| {
            let f = GridFunction::new(make_grid(1, 64, 16.0).unwrap(), f).unwrap();
            let coarse = amalgam_norm(&f, p, q, 0).unwrap();
            let fine = amalgam_norm(&f, p, q, j).unwrap();
            let k = embedding_constant(p, q, j, 1).unwrap();
            prop_assert!(coarse <= k * fine * (1.0 + 1e-12), "j={j} p={p} q={q}: {coarse} > {k}·{fine}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    runner(25)
        .run(&(grid_values(256), -2i32..=2), |(f, j)| {
            let f = GridFunction::new(make_grid(2, 16, 4.0).unwrap(), f).unwrap();
            let coarse = amalgam_norm(&f, 1.0, 2.0, 0).unwrap();
            let fine = amalgam_norm(&f, 1.0, 2.0, j).unwrap();
            let k = embedding_constant(1.0, 2.0, j, 2).unwrap();
            prop_assert!(coarse <= k * fine * (1.0 + 1e-12), "d=2 j={j}: {coarse} > {k}·{fine}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("75 functions, d in {1, 2}, j in -2..2".into())
}

/// Splitting a row cube into its children never decreases the summed block
/// norm, for every `(p, q)` with closed-form block norms.
pub fn block_subadditivity() -> Result<String, String> {
    runner(30)
        .run(&(sparse_matrix(16), -1i32..=1), |(m, j)| {
            let grid = small_grid();
            let a = operator(m);
            let parent = dyadic_partition(&grid, j).unwrap();
            let child = dyadic_partition(&grid, j + 1).unwrap();
            let mat = a.matrix();
            let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, s| mat[(rows[r], cols[s])]);
            for (p, q) in [(1.0, 1.0), (1.0, 2.0), (1.0, f64::INFINITY), (2.0, f64::INFINITY), (2.0, 2.0)] {
                let blocks = block_norm_matrix(&a, j, p, q).unwrap();
                // L^p → L^q block norms are ℓ^p → ℓ^q norms of M times this
                let w = grid.cell_measure().powf(1.0 / q - 1.0 / p);
                for (qi, cube) in parent.cubes().iter().enumerate() {
                    let rows = parent.point_indices(cube);
                    for (qj, source) in parent.cubes().iter().enumerate() {
                        let cols = parent.point_indices(source);
                        let whole = blocks.entry(qi, qj);
                        let direct = w * matrix_norm_exact(&sub(&rows, &cols), p, q).unwrap();
                        prop_assert!((whole - direct).abs() <= 1e-10 * whole.max(1.0));
                        let split: f64 = child
                            .cubes()
                            .iter()
                            .map(|k| child.point_indices(k))
                            .filter(|pts| rows.contains(&pts[0]))
                            .map(|pts| w * matrix_norm_exact(&sub(&pts, &cols), p, q).unwrap())
                            .sum();
                        prop_assert!(whole <= split + 1e-10, "p={p} q={q}: {whole} > {split}");
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("30 kernels, 5 exponent pairs".into())
}

/// Block entries of `A*` are the transposed entries of `A` at `p = q = 2`,
/// and for self-adjoint heat operators the weighted Schur sums coincide.
pub fn duality_symmetry() -> Result<String, String> {
    runner(30)
        .run(&(sparse_matrix(16), -1i32..=2), |(m, j)| {
            let a = operator(m);
            let b = block_norm_matrix(&a, j, 2.0, 2.0).unwrap();
            let bt = block_norm_matrix(&a.adjoint(), j, 2.0, 2.0).unwrap();
            for x in 0..b.len() {
                for y in 0..b.len() {
                    prop_assert!((b.entry(x, y) - bt.entry(y, x)).abs() <= 1e-10 * b.entry(x, y).max(1.0));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    runner(20)
        .run(&(0.0..3.0f64, 0.05..2.0f64, 0u32..3), |(depth, t, n_weight)| {
            let grid = make_grid(1, 64, 16.0).unwrap();
            let kind = OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth, width: 1.0 } };
            let heat = heat_semigroup(&build_operator(&OperatorSpec::new(kind, grid)).unwrap(), t).unwrap();
            let sym = schur_sums(&block_norm_matrix(&heat, 0, 2.0, 2.0).unwrap(), Some(n_weight));
            prop_assert!((sym.m1 - sym.m2).abs() <= 1e-8 * sym.m1.max(1.0));
            // ‖1_Q A 1_Q'‖_{1→2} = ‖1_Q' A 1_Q‖_{2→∞} for self-adjoint A
            let s12 = schur_sums(&block_norm_matrix(&heat, 0, 1.0, 2.0).unwrap(), Some(n_weight));
            let s2i = schur_sums(&block_norm_matrix(&heat, 0, 2.0, f64::INFINITY).unwrap(), Some(n_weight));
            prop_assert!((s12.m1 - s2i.m2).abs() <= 1e-8 * s12.m1.max(1.0));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("30 kernels transposed, 20 heat operators M1 = M2".into())
}

/// Norms at `p` and `p'` of a self-adjoint heat operator agree within brackets.
pub fn dual_exponents() -> Result<String, String> {
    let grid = make_grid(1, 64, 16.0).unwrap();
    let kind = OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth: 2.0, width: 1.0 } };
    let heat = heat_semigroup(&build_operator(&OperatorSpec::new(kind, grid)).unwrap(), 0.5).unwrap();
    for (p, q) in [(1.0, f64::INFINITY), (1.5, 3.0), (1.25, 5.0)] {
        let a = norm_bracket(&heat, p).unwrap();
        let b = norm_bracket(&heat, q).unwrap();
        if !(a.lower <= b.upper + 1e-10 && b.lower <= a.upper + 1e-10) {
            return Err(format!("p={p}: [{}, {}] vs [{}, {}]", a.lower, a.upper, b.lower, b.upper));
        }
    }
    Ok("p in {1, 1.25, 1.5} against p'".into())
}

/// Extreme points of the ℓ^1 ball (signed coordinate vectors) and of the
/// real ℓ^∞ ball (sign vectors); the largest singular value at `p = 2`.
fn exhaustive_truth(m: &DMatrix<Complex64>, p: f64) -> f64 {
    let n = m.ncols();
    let ratio = |x: &[f64]| {
        let v: Vec<Complex64> = x.iter().map(|&t| c(t)).collect();
        let y = m * nalgebra::DVector::from_vec(v.clone());
        lp(y.as_slice(), p) / lp(&v, p)
    };
    if p == 1.0 {
        (0..n).map(|i| ratio(&(0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<_>>())).fold(0.0, f64::max)
    } else if p.is_infinite() {
        (0..1usize << n)
            .map(|mask| ratio(&(0..n).map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 }).collect::<Vec<_>>()))
            .fold(0.0, f64::max)
    } else {
        m.clone().svd(false, false).singular_values.max()
    }
}

fn lp(v: &[Complex64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().map(|z| z.norm()).fold(0.0, f64::max)
    } else {
        v.iter().map(|z| z.norm().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn all_kernels(n: usize) -> impl Iterator<Item = DMatrix<Complex64>> {
    (0..3usize.pow((n * n) as u32)).map(move |mut code| {
        DMatrix::from_fn(n, n, |_, _| {
            let v = (code % 3) as f64 - 1.0;
            code /= 3;
            c(v)
        })
    })
}

/// Every sign kernel with at most four entries at `p ∈ {1, 2, ∞}`, plus all
/// 3x3 sign kernels at `p ∈ {1, ∞}`.
pub fn bracket_validity() -> Result<String, String> {
    let mut checked = 0;
    let cases = [(1usize, vec![1.0, 2.0, f64::INFINITY]), (2, vec![1.0, 2.0, f64::INFINITY]), (3, vec![1.0, f64::INFINITY])];
    for (n, ps) in cases {
        for m in all_kernels(n) {
            let a = LinearGridOperator::from_matrix(OperatorSpace::bare(n), m.clone()).map_err(|e| e.to_string())?;
            for &p in &ps {
                let truth = exhaustive_truth(&m, p);
                let b = norm_bracket(&a, p).map_err(|e| e.to_string())?;
                if !(b.lower <= truth + 1e-12 && truth <= b.upper + 1e-12) {
                    return Err(format!("{m} p={p}: [{}, {}] misses {truth}", b.lower, b.upper));
                }
            }
            if n < 3 {
                for p in [1.5, 3.0] {
                    let b = norm_bracket(&a, p).map_err(|e| e.to_string())?;
                    if b.lower > b.upper + 1e-12 {
                        return Err(format!("{m} p={p}: lower {} above upper {}", b.lower, b.upper));
                    }
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} sign kernels"))
}

/// `e^{-tH_k}` against the rescaled `e^{-2^k t H}` for homogeneous symbols.
pub fn scaling_covariance() -> Result<String, String> {
    let cases = [
        (OperatorKind::Laplacian, 0, 0.5),
        (OperatorKind::Laplacian, 2, 0.5),
        (OperatorKind::Laplacian, -2, 0.25),
        (OperatorKind::Polyharmonic { k: 2 }, 4, 0.1),
        (OperatorKind::Fractional { alpha: 0.5 }, 1, 0.3),
        (OperatorKind::Fractional { alpha: 0.5 }, 2, 0.3),
    ];
    let mut worst: f64 = 0.0;
    for (kind, k, t) in cases {
        let spec = OperatorSpec::new(kind.clone(), make_grid(1, 128, 32.0).unwrap());
        let r = check_scaling_covariance(&spec, k, t).map_err(|e| e.to_string())?;
        if r > 1e-8 {
            return Err(format!("{kind:?} k={k}: residual {r:e}"));
        }
        worst = worst.max(r);
    }
    Ok(format!("worst residual {worst:.1e}"))
}

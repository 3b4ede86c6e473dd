//! Certified brackets for operator norms.
//!
//! Lower bounds are ratios `‖Af‖_q / ‖f‖_p` attained by explicit probes, so
//! they never exceed the true norm. Upper bounds are exact closed forms or
//! Riesz–Thorin interpolation between them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exponent::{self, conjugate, recip};
use crate::grid::{dyadic_partition, TorusGrid};
use crate::operators::{LinearGridOperator, Representation};

/// Largest space on which dense norms are computed.
pub const DENSE_NORM_CAP: usize = 4096;

const POWER_ITERATIONS: usize = 60;
const POWER_STARTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBracket {
    #[serde(with = "crate::exponent")]
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_method: String,
    pub upper_method: String,
    pub probes: usize,
}

impl NormBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `(upper - lower) / midpoint`, zero for a zero operator.
    pub fn relative_width(&self) -> f64 {
        let m = self.midpoint();
        if m > 0.0 {
            (self.upper - self.lower) / m
        } else {
            0.0
        }
    }

    pub fn is_exact(&self) -> bool {
        self.upper - self.lower <= 1e-8 * self.upper
    }
}

/// Unweighted `ℓ^p` norm of a vector.
pub(crate) fn lp(v: &[Complex64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().map(|z| z.norm()).fold(0.0, f64::max)
    } else if p == 1.0 {
        v.iter().map(|z| z.norm()).sum()
    } else if p == 2.0 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    } else {
        let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * v.iter().map(|z| (z.norm() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn sgn(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z / r
    }
}

/// Norming vector of `v` in `ℓ^{r'}`: `⟨dual, v⟩ = ‖v‖_r` with `‖dual‖_{r'} = 1`.
fn dual(v: &[Complex64], r: f64) -> Vec<Complex64> {
    let norm = lp(v, r);
    if norm == 0.0 {
        return vec![Complex64::new(0.0, 0.0); v.len()];
    }
    if r == 1.0 {
        v.iter().map(|z| sgn(*z)).collect()
    } else if r.is_infinite() {
        let k = (0..v.len()).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).expect("non-empty");
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        out[k] = sgn(v[k]);
        out
    } else {
        v.iter().map(|z| sgn(*z) * (z.norm() / norm).powf(r - 1.0)).collect()
    }
}

fn matvec(m: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    (m * nalgebra::DVector::from_column_slice(x)).iter().copied().collect()
}

fn adj_matvec(m: &DMatrix<Complex64>, y: &[Complex64]) -> Vec<Complex64> {
    (m.adjoint() * nalgebra::DVector::from_column_slice(y)).iter().copied().collect()
}

/// Largest singular value.
pub(crate) fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return lp(m.as_slice(), 2.0);
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Closed-form `ℓ^p → ℓ^q` matrix norm when one exists: `p = 1` (largest
/// column `ℓ^q` norm), `q = ∞` (largest row `ℓ^{p'}` norm) or `p = q = 2`.
pub fn matrix_norm_exact(m: &DMatrix<Complex64>, p: f64, q: f64) -> Option<f64> {
    if p == 1.0 {
        Some((0..m.ncols()).map(|j| lp(col(m, j), q)).fold(0.0, f64::max))
    } else if q.is_infinite() {
        let pc = conjugate(p);
        Some(
            (0..m.nrows())
                .map(|i| lp(&m.row(i).iter().copied().collect::<Vec<_>>(), pc))
                .fold(0.0, f64::max),
        )
    } else if p == 2.0 && q == 2.0 {
        Some(spectral_norm(m))
    } else {
        None
    }
}

/// Column `j` of a column-major matrix as a slice.
fn col(m: &DMatrix<Complex64>, j: usize) -> &[Complex64] {
    let r = m.nrows();
    &m.as_slice()[j * r..(j + 1) * r]
}

/// Riesz–Thorin upper bound for `ℓ^p → ℓ^q` with `q ≥ p`, interpolating
/// between the `2 → 2` norm and a closed-form edge (`p = 1` or `q = ∞`).
pub fn matrix_norm_interpolated(m: &DMatrix<Complex64>, p: f64, q: f64) -> Result<f64> {
    if let Some(v) = matrix_norm_exact(m, p, q) {
        return Ok(v);
    }
    let (a, b) = (recip(p), recip(q));
    if b > a + 1e-15 {
        return Err(LabError::UseNormestBracket { p, q });
    }
    let n22 = spectral_norm(m);
    // (a, b) = (1-θ)(1/2, 1/2) + θ E with E on the edge a = 1 or b = 0
    let edge = if a >= 0.5 {
        let theta = 2.0 * a - 1.0;
        let eb = (b - 0.5 * (1.0 - theta)) / theta;
        (0.0..=1.0).contains(&eb).then(|| (theta, 1.0, eb))
    } else {
        None
    };
    let (theta, ea, eb) = match edge {
        Some(e) => e,
        None => {
            let theta = 1.0 - 2.0 * b;
            (theta, (a - 0.5 * (1.0 - theta)) / theta, 0.0)
        }
    };
    let ne = matrix_norm_exact(m, 1.0 / ea.max(1e-300), 1.0 / eb.max(0.0)).expect("edge norms are closed form");
    Ok(n22.powf(1.0 - theta) * ne.powf(theta))
}

/// Probe family for lower bounds; structured probes need a grid.
struct Probes<'a> {
    m: &'a DMatrix<Complex64>,
    grid: Option<&'a TorusGrid>,
    p: f64,
    q: f64,
}

impl Probes<'_> {
    fn ratio(&self, f: &[Complex64]) -> f64 {
        let nf = lp(f, self.p);
        if nf == 0.0 {
            0.0
        } else {
            lp(&matvec(self.m, f), self.q) / nf
        }
    }

    fn structured(&self) -> Vec<Vec<Complex64>> {
        let n = self.m.ncols();
        let zero = Complex64::new(0.0, 0.0);
        let mut out = Vec::new();
        // signed rows: exact maximizers for q = ∞
        let mut rows: Vec<(f64, usize)> =
            (0..self.m.nrows()).map(|i| (self.m.row(i).iter().map(|z| z.norm()).sum::<f64>(), i)).collect();
        rows.sort_by(|x, y| y.0.total_cmp(&x.0));
        for &(_, i) in rows.iter().take(8) {
            out.push(self.m.row(i).iter().map(|z| sgn(z.conj())).collect());
        }
        match self.grid {
            Some(g) if g.len() == n => {
                let (jmin, jmax) = g.scale_range();
                for j in jmin..=jmax {
                    let part = dyadic_partition(g, j).expect("scale in range");
                    for q in [&part.cubes()[0], &part.cubes()[part.len() / 2]] {
                        let mut f = vec![zero; n];
                        for i in part.point_indices(q) {
                            f[i] = Complex64::new(1.0, 0.0);
                        }
                        out.push(f);
                    }
                }
                let h = g.spacing();
                for width in [2.0 * h, 8.0 * h, g.side() / 16.0] {
                    for frac in [0.0, 0.25, 0.5] {
                        let xi = frac * g.nyquist();
                        out.push(
                            (0..n)
                                .map(|i| {
                                    let mi = g.multi_index(i);
                                    let mut r2 = 0.0;
                                    for ax in 0..g.dim() {
                                        let r = g.lifted_difference(g.coordinate(mi[ax]), g.side() / 2.0);
                                        r2 += r * r;
                                    }
                                    let x0 = g.coordinate(mi[0]);
                                    Complex64::from_polar((-r2 / (2.0 * width * width)).exp(), xi * x0)
                                })
                                .collect(),
                        );
                    }
                }
            }
            _ => {
                let mut size = 2;
                while size <= n {
                    for start in [0, (n - size) / 2] {
                        let mut f = vec![zero; n];
                        f[start..start + size].iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.0));
                        out.push(f);
                    }
                    size *= 2;
                }
            }
        }
        out
    }

    /// Generalized power iteration `x ← dual_{p'}(A* dual_q(Ax))`.
    fn power(&self, mut x: Vec<Complex64>) -> f64 {
        let mut best = self.ratio(&x);
        let nx = lp(&x, self.p);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let pc = conjugate(self.p);
        for _ in 0..POWER_ITERATIONS {
            let y = matvec(self.m, &x);
            if lp(&y, self.q) == 0.0 {
                break;
            }
            let z = adj_matvec(self.m, &dual(&y, self.q));
            let next = dual(&z, pc);
            let r = self.ratio(&next);
            if !(r > best * (1.0 + 1e-13)) {
                best = best.max(r);
                break;
            }
            best = r;
            x = next;
        }
        best
    }

    fn lower_bound(&self, random: usize, seed: u64) -> (f64, &'static str) {
        let n = self.m.ncols();
        if n == 0 {
            return (0.0, "empty");
        }
        // unit vectors: ratio is the column ℓ^q norm
        let mut best = (0.0, "unit vectors");
        let mut unit_best = 0;
        for j in 0..n {
            let v = lp(col(self.m, j), self.q);
            if v > best.0 {
                best.0 = v;
                unit_best = j;
            }
        }
        let mut candidates: Vec<(f64, Vec<Complex64>, &'static str)> = Vec::new();
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[unit_best] = Complex64::new(1.0, 0.0);
        candidates.push((best.0, e, "unit vectors"));
        for f in self.structured() {
            candidates.push((self.ratio(&f), f, "structured probes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random {
            let f: Vec<Complex64> =
                (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            candidates.push((self.ratio(&f), f, "random probes"));
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (r, _, tag) in &candidates {
            if *r > best.0 {
                best = (*r, tag);
            }
        }
        let powered: Vec<f64> = candidates
            .par_iter()
            .take(POWER_STARTS)
            .map(|(_, f, _)| self.power(f.clone()))
            .collect();
        for r in powered {
            if r > best.0 {
                best = (r, "power iteration");
            }
        }
        best
    }
}

/// Probe lower bound for the `ℓ^p → ℓ^q` norm of a matrix.
pub fn matrix_lower_bound(
    m: &DMatrix<Complex64>,
    grid: Option<&TorusGrid>,
    p: f64,
    q: f64,
    probes: usize,
    seed: u64,
) -> (f64, &'static str) {
    Probes { m, grid, p, q }.lower_bound(probes, seed)
}

fn dense(a: &LinearGridOperator) -> Result<DMatrix<Complex64>> {
    if a.len() > DENSE_NORM_CAP {
        return Err(LabError::Capacity { what: "dense norm", requested: a.len(), cap: DENSE_NORM_CAP });
    }
    Ok(a.matrix())
}

/// Exact `L^p → L^p` norm for `p ∈ {1, 2, ∞}`.
pub fn exact_norm(a: &LinearGridOperator, p: f64) -> Result<f64> {
    if !(p == 1.0 || p == 2.0 || p.is_infinite()) {
        return Err(LabError::InvalidArgument(format!("exact norms exist for p in {{1, 2, inf}}, got {p}")));
    }
    if let Some(c) = a.convolution_column() {
        if p != 2.0 {
            return Ok(c.iter().map(|z| z.norm()).sum());
        }
    }
    if p == 2.0 {
        match a.representation() {
            Representation::Symbol(v) | Representation::Spectral { values: v, .. } => {
                return Ok(v.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
            Representation::Kernel(_) => {}
        }
    }
    Ok(matrix_norm_exact(&dense(a)?, p, p).expect("closed form"))
}

/// Largest ratio `‖Af‖_p / ‖f‖_p` over seeded probes and power iterates.
pub fn lower_bound_norm(a: &LinearGridOperator, p: f64, probes: usize, seed: u64) -> Result<f64> {
    exponent::check(p)?;
    Ok(matrix_lower_bound(&dense(a)?, a.grid(), p, p, probes, seed).0)
}

/// Riesz–Thorin bound from the exact norms at 1, 2 and ∞.
pub fn interpolated_upper_bound(a: &LinearGridOperator, p: f64) -> Result<f64> {
    exponent::check(p)?;
    let n2 = exact_norm(a, 2.0)?;
    if p == 2.0 {
        return Ok(n2);
    }
    if p < 2.0 {
        let n1 = exact_norm(a, 1.0)?;
        Ok(n1.powf(2.0 / p - 1.0) * n2.powf(2.0 - 2.0 / p))
    } else {
        let ni = exact_norm(a, f64::INFINITY)?;
        Ok(ni.powf(1.0 - 2.0 * recip(p)) * n2.powf(2.0 * recip(p)))
    }
}

/// Default number of random probes.
pub const DEFAULT_PROBES: usize = 16;

/// `[lower, upper]` for `‖A‖_{p→p}`; collapses to the exact value at 1, 2, ∞.
pub fn norm_bracket(a: &LinearGridOperator, p: f64) -> Result<NormBracket> {
    norm_bracket_with(a, p, DEFAULT_PROBES, 0)
}

pub fn norm_bracket_with(a: &LinearGridOperator, p: f64, probes: usize, seed: u64) -> Result<NormBracket> {
    exponent::check(p)?;
    if p == 1.0 || p == 2.0 || p.is_infinite() {
        let v = exact_norm(a, p)?;
        return Ok(NormBracket {
            p,
            lower: v,
            upper: v,
            lower_method: "closed form".into(),
            upper_method: "closed form".into(),
            probes: 0,
        });
    }
    let m = dense(a)?;
    let (lower, method) = matrix_lower_bound(&m, a.grid(), p, p, probes, seed);
    let upper = interpolated_upper_bound(a, p)?.max(lower);
    Ok(NormBracket {
        p,
        lower,
        upper,
        lower_method: method.into(),
        upper_method: "Riesz-Thorin interpolation".into(),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::OperatorSpace;

    fn bare(rows: &[&[f64]]) -> LinearGridOperator {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j], 0.0));
        LinearGridOperator::from_kernel(OperatorSpace::bare(n), m).unwrap()
    }

    #[test]
    fn closed_forms() {
        let a = bare(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(exact_norm(&a, 1.0).unwrap(), 2.0);
        assert_eq!(exact_norm(&a, f64::INFINITY).unwrap(), 2.0);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((exact_norm(&a, 2.0).unwrap() - golden).abs() < 1e-10);
        let id = LinearGridOperator::identity(OperatorSpace::bare(3));
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_eq!(exact_norm(&id, p).unwrap(), 1.0);
        }
        assert!(exact_norm(&id, 3.0).is_err());
    }

    #[test]
    fn diagonal_brackets() {
        let a = bare(&[&[3.0, 0.0], &[0.0, 1.0]]);
        assert!((lower_bound_norm(&a, 4.0, 4, 1).unwrap() - 3.0).abs() < 1e-12);
        assert!((interpolated_upper_bound(&a, 4.0 / 3.0).unwrap() - 3.0).abs() < 1e-12);
        let b = norm_bracket(&LinearGridOperator::identity(OperatorSpace::bare(4)), 3.0).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_method_finds_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = DMatrix::from_fn(24, 24, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let a = LinearGridOperator::from_kernel(OperatorSpace::bare(24), &r + r.adjoint()).unwrap();
        let lo = lower_bound_norm(&a, 2.0, 4, 9).unwrap();
        let ex = exact_norm(&a, 2.0).unwrap();
        assert!(lo <= ex * (1.0 + 1e-10));
        assert!(ex - lo < 1e-6 * ex, "{lo} vs {ex}");
        let lo1 = lower_bound_norm(&a, 1.0, 4, 9).unwrap();
        let loi = lower_bound_norm(&a, f64::INFINITY, 4, 9).unwrap();
        assert!((lo1 - exact_norm(&a, 1.0).unwrap()).abs() < 1e-10);
        assert!((loi - exact_norm(&a, f64::INFINITY).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn mixed_interpolation_matches_edges() {
        let m = DMatrix::from_fn(5, 5, |i, j| Complex64::new(1.0 / (1.0 + (i as f64 - j as f64).abs()), 0.0));
        for (p, q) in [(1.0, 3.0), (1.5, f64::INFINITY), (2.0, 2.0)] {
            let ex = matrix_norm_exact(&m, p, q).unwrap();
            assert!((matrix_norm_interpolated(&m, p, q).unwrap() - ex).abs() < 1e-12);
        }
        let (lo, _) = matrix_lower_bound(&m, None, 1.5, 3.0, 8, 2);
        let up = matrix_norm_interpolated(&m, 1.5, 3.0).unwrap();
        assert!(lo <= up * (1.0 + 1e-12));
        assert!(matches!(matrix_norm_interpolated(&m, 3.0, 1.5), Err(LabError::UseNormestBracket { .. })));
    }
}

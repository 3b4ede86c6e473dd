//! Amalgam norms `X^{p,q}_j`, block-norm matrices of operators over dyadic
//! cubes, and the Schur-test bound built from their row and column sums.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exponent::{self, recip};
use crate::grid::{dyadic_partition, weighted_lp, DyadicPartition, GridFunction, TorusGrid};
use crate::normest::{lp, matrix_lower_bound, matrix_norm_exact, matrix_norm_interpolated};
use crate::operators::LinearGridOperator;

/// `(Σ_Q ‖1_Q f‖_{L^q}^p)^{1/p}` over the cubes of scale `j`.
pub fn amalgam_norm(f: &GridFunction, p: f64, q: f64, j: i32) -> Result<f64> {
    exponent::check(p)?;
    exponent::check(q)?;
    let part = dyadic_partition(f.grid(), j)?;
    Ok(amalgam_norm_on(&part, f.values(), p, q))
}

pub(crate) fn amalgam_norm_on(part: &DyadicPartition, values: &[Complex64], p: f64, q: f64) -> f64 {
    let w = part.grid().cell_measure();
    let local: Vec<Complex64> = part
        .cubes()
        .iter()
        .map(|c| {
            let v = weighted_lp(part.point_indices(c).into_iter().map(|i| values[i]), w, q);
            Complex64::new(v, 0.0)
        })
        .collect();
    lp(&local, p)
}

/// `max{1, 2^{-jd(1/p - 1/q)}}`: the norm of `X^{p,q}_j ↪ X^{p,q}_0`.
pub fn embedding_constant(p: f64, q: f64, j: i32, d: usize) -> Result<f64> {
    exponent::check(p)?;
    exponent::check(q)?;
    if p > q {
        return Err(LabError::InvalidArgument(format!("embedding needs p <= q, got p={p}, q={q}")));
    }
    let e = -(j as f64) * d as f64 * (recip(p) - recip(q));
    Ok(2f64.powf(e).max(1.0))
}

/// Entries `‖1_Q A 1_{Q'}‖_{L^p → L^q}` indexed by (row `Q`, column `Q'`).
#[derive(Clone, Debug)]
pub struct BlockNormMatrix {
    partition: DyadicPartition,
    p: f64,
    q: f64,
    entries: DMatrix<f64>,
}

impl BlockNormMatrix {
    pub fn partition(&self) -> &DyadicPartition {
        &self.partition
    }

    pub fn scale(&self) -> i32 {
        self.partition.scale()
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.q)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn entry(&self, q: usize, q_prime: usize) -> f64 {
        self.entries[(q, q_prime)]
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `j, Q, Q', distance, entry`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "q", "q_prime", "distance", "entry"])?;
        let j = self.scale().to_string();
        for a in 0..self.len() {
            for b in 0..self.len() {
                out.write_record([
                    j.clone(),
                    a.to_string(),
                    b.to_string(),
                    format!("{:e}", self.partition.distance_by_index(a, b)),
                    format!("{:e}", self.entries[(a, b)]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// A block-norm matrix with certified lower and upper entries.
#[derive(Clone, Debug)]
pub struct BlockNormBracket {
    pub lower: BlockNormMatrix,
    pub upper: BlockNormMatrix,
}

impl BlockNormBracket {
    /// Largest `(upper - lower) / midpoint` over nonzero entries.
    pub fn max_relative_width(&self) -> f64 {
        self.lower
            .entries
            .iter()
            .zip(self.upper.entries.iter())
            .filter(|(l, u)| **l + **u > 0.0)
            .map(|(l, u)| 2.0 * (u - l) / (u + l))
            .fold(0.0, f64::max)
    }
}

enum EntryRule {
    Exact,
    Lower { probes: usize, seed: u64 },
    Upper,
}

/// Extracts the matrix block rows `Q`, columns `Q'`.
struct BlockSource<'a> {
    part: &'a DyadicPartition,
    column: Option<Vec<Complex64>>,
    dense: Option<DMatrix<Complex64>>,
}

impl BlockSource<'_> {
    fn block(&self, a: usize, b: usize) -> DMatrix<Complex64> {
        let g = self.part.grid();
        let rows = self.part.point_indices(&self.part.cubes()[a]);
        let cols = self.part.point_indices(&self.part.cubes()[b]);
        match (&self.column, &self.dense) {
            (Some(c), _) => {
                let n = g.points_per_axis();
                DMatrix::from_fn(rows.len(), cols.len(), |r, s| {
                    let (x, y) = (g.multi_index(rows[r]), g.multi_index(cols[s]));
                    c[g.linear_index([(x[0] + n - y[0]) % n, (x[1] + n - y[1]) % n])]
                })
            }
            (None, Some(m)) => DMatrix::from_fn(rows.len(), cols.len(), |r, s| m[(rows[r], cols[s])]),
            _ => unreachable!("one source is always present"),
        }
    }
}

fn fill(a: &LinearGridOperator, part: &DyadicPartition, p: f64, q: f64, rule: &EntryRule) -> Result<DMatrix<f64>> {
    let grid = part.grid();
    let weight = grid.cell_measure().powf(recip(q) - recip(p));
    let column = a.convolution_column();
    let dense = if column.is_none() { Some(a.matrix()) } else { None };
    let src = BlockSource { part, column, dense };
    let nc = part.len();
    let entry = |a: usize, b: usize| -> Result<f64> {
        let blk = src.block(a, b);
        let v = match rule {
            EntryRule::Exact => matrix_norm_exact(&blk, p, q).ok_or(LabError::UseNormestBracket { p, q })?,
            EntryRule::Upper => matrix_norm_interpolated(&blk, p, q)?,
            EntryRule::Lower { probes, seed } => matrix_lower_bound(&blk, None, p, q, *probes, *seed).0,
        };
        Ok(v * weight)
    };
    let mut entries = DMatrix::zeros(nc, nc);
    if src.column.is_some() {
        // translation invariance: the entry depends only on the cube offset
        let first: Vec<f64> = (0..nc).into_par_iter().map(|a| entry(a, 0)).collect::<Result<_>>()?;
        let per = part.cubes_per_axis();
        for a in 0..nc {
            for b in 0..nc {
                let (qa, qb) = (&part.cubes()[a].anchor, &part.cubes()[b].anchor);
                let off = [(qa[0] + per - qb[0]) % per, (qa[1] + per - qb[1]) % per];
                entries[(a, b)] = first[part.cube_index(off)];
            }
        }
    } else {
        let vals: Vec<f64> =
            (0..nc * nc).into_par_iter().map(|k| entry(k / nc, k % nc)).collect::<Result<_>>()?;
        for (k, v) in vals.into_iter().enumerate() {
            entries[(k / nc, k % nc)] = v;
        }
    }
    Ok(entries)
}

fn operator_partition(a: &LinearGridOperator, j: i32) -> Result<DyadicPartition> {
    let grid: &TorusGrid = a.space().require_grid()?;
    dyadic_partition(grid, j)
}

/// Exact block norms for `p = 1` (any `q`), `q = ∞` (any `p`) and `p = q = 2`.
pub fn block_norm_matrix(a: &LinearGridOperator, j: i32, p: f64, q: f64) -> Result<BlockNormMatrix> {
    exponent::check(p)?;
    exponent::check(q)?;
    if matrix_norm_exact(&DMatrix::<Complex64>::zeros(1, 1), p, q).is_none() {
        return Err(LabError::UseNormestBracket { p, q });
    }
    let partition = operator_partition(a, j)?;
    let entries = fill(a, &partition, p, q, &EntryRule::Exact)?;
    Ok(BlockNormMatrix { partition, p, q, entries })
}

/// Probe lower bounds and Riesz–Thorin upper bounds for every block.
pub fn block_norm_bracket(
    a: &LinearGridOperator,
    j: i32,
    p: f64,
    q: f64,
    probes: usize,
    seed: u64,
) -> Result<BlockNormBracket> {
    exponent::check(p)?;
    exponent::check(q)?;
    let partition = operator_partition(a, j)?;
    let upper = fill(a, &partition, p, q, &EntryRule::Upper)?;
    let lower = fill(a, &partition, p, q, &EntryRule::Lower { probes, seed })?;
    Ok(BlockNormBracket {
        lower: BlockNormMatrix { partition: partition.clone(), p, q, entries: lower },
        upper: BlockNormMatrix { partition, p, q, entries: upper },
    })
}

/// Schur-test sums of a block-norm matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurSums {
    /// `sup_{Q'} Σ_Q w(Q,Q') ‖1_Q A 1_{Q'}‖` (column sums).
    pub m1: f64,
    /// `sup_Q Σ_{Q'} w(Q,Q') ‖1_Q A 1_{Q'}‖` (row sums).
    pub m2: f64,
    pub weight_n: Option<u32>,
    pub j: i32,
}

/// Column and row sums, weighted by `(1 + 2^j dist(Q,Q'))^N` when `weight_n` is given.
pub fn schur_sums(b: &BlockNormMatrix, weight_n: Option<u32>) -> SchurSums {
    let part = &b.partition;
    let j = part.scale();
    let scale = 2f64.powi(j);
    let nc = b.len();
    let w = |x: usize, y: usize| match weight_n {
        Some(n) => (1.0 + scale * part.distance_by_index(x, y)).powi(n as i32),
        None => 1.0,
    };
    let mut cols = vec![0.0; nc];
    let mut rows = vec![0.0; nc];
    for x in 0..nc {
        for y in 0..nc {
            let v = w(x, y) * b.entries[(x, y)];
            rows[x] += v;
            cols[y] += v;
        }
    }
    SchurSums {
        m1: cols.iter().copied().fold(0.0, f64::max),
        m2: rows.iter().copied().fold(0.0, f64::max),
        weight_n,
        j,
    }
}

/// `M1^{1-θ} M2^θ` with `1/p = 1 - θ`, so `p = 1` gives `M1` and `p = ∞` gives `M2`.
pub fn amalgam_operator_bound(m: &SchurSums, p: f64) -> Result<f64> {
    exponent::check(p)?;
    let theta = 1.0 - recip(p);
    if theta == 0.0 {
        return Ok(m.m1);
    }
    if theta == 1.0 {
        return Ok(m.m2);
    }
    Ok(m.m1.powf(1.0 - theta) * m.m2.powf(theta))
}

/// Probe lower bound for `‖A‖_{X^{p,q1}_j → X^{p,q2}_j}`.
///
/// For `p = 1` the unit ball's extreme points live on single cubes, so each
/// source cube (one suffices for translation-invariant operators) is probed
/// and, for `q1 = q2 = 2`, refined by ascent on `Σ_Q ‖1_Q A f‖_2`.
pub fn amalgam_operator_lower_bound(
    a: &LinearGridOperator,
    p: f64,
    q1: f64,
    q2: f64,
    j: i32,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    exponent::check(p)?;
    let part = operator_partition(a, j)?;
    let n = a.len();
    let zero = Complex64::new(0.0, 0.0);
    let ratio = |f: &[Complex64]| -> f64 {
        let den = amalgam_norm_on(&part, f, p, q1);
        if den == 0.0 {
            0.0
        } else {
            amalgam_norm_on(&part, &a.apply_values(f), p, q2) / den
        }
    };
    let sources: Vec<usize> = if a.is_translation_invariant() { vec![0] } else { (0..part.len()).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<Complex64>> = Vec::new();
    for &s in &sources {
        let idx = part.point_indices(&part.cubes()[s]);
        let mut ind = vec![zero; n];
        idx.iter().for_each(|&i| ind[i] = Complex64::new(1.0, 0.0));
        starts.push(ind);
        let mut delta = vec![zero; n];
        delta[idx[idx.len() / 2]] = Complex64::new(1.0, 0.0);
        starts.push(delta);
        let mut rnd = vec![zero; n];
        idx.iter().for_each(|&i| rnd[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        starts.push(rnd);
    }
    for _ in 0..probes {
        starts.push((0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
    }
    let ascent = p == 1.0 && q1 == 2.0 && q2 == 2.0;
    let results: Vec<f64> = starts
        .par_iter()
        .map(|f0| {
            let mut best = ratio(f0);
            if !ascent {
                return best;
            }
            let support: Vec<usize> = (0..n).filter(|&i| f0[i] != zero).collect();
            let single_cube = support.iter().all(|&i| part.cube_of_point(i) == part.cube_of_point(support[0]));
            if !single_cube {
                return best;
            }
            let cube = part.cube_of_point(support[0]);
            let src = part.point_indices(&part.cubes()[cube]);
            let mut f = f0.clone();
            for _ in 0..40 {
                let af = a.apply_values(&f);
                // gradient of Σ_Q ‖1_Q A f‖_2: A* applied to the cube-wise normalized image
                let mut g = vec![zero; n];
                for c in part.cubes() {
                    let idx = part.point_indices(c);
                    let nrm = idx.iter().map(|&i| af[i].norm_sqr()).sum::<f64>().sqrt();
                    if nrm > 0.0 {
                        idx.iter().for_each(|&i| g[i] = af[i] / nrm);
                    }
                }
                let back = a.adjoint().apply_values(&g);
                let mut next = vec![zero; n];
                src.iter().for_each(|&i| next[i] = back[i]);
                let r = ratio(&next);
                if !(r > best * (1.0 + 1e-12)) {
                    break;
                }
                best = r;
                f = next;
            }
            best
        })
        .collect();
    Ok(results.into_iter().fold(0.0, f64::max))
}

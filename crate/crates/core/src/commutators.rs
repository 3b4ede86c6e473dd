//! Position commutators `Ad_l(A) = [x_l, A]`, their iterates, and numerical
//! checks of the commutator expansion, Duhamel and Leibniz identities.
//!
//! Two routes are provided. The kernel route multiplies the kernel by the
//! torus-lifted difference `(x_l - y_l)^k` and is what the norms use: it is
//! translation invariant and has no seam. The matrix route forms `XA - AX`
//! with a sawtooth position matrix `X`; it is an honest commutator, so the
//! algebraic identities hold exactly for it.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amalgam::amalgam_operator_lower_bound;
use crate::error::{LabError, Result};
use crate::estimates::{fit_growth_exponent, GrowthFit};
use crate::exponent::{self, recip};
use crate::grid::{fft_in_place, Direction, TorusGrid};
use crate::normest::exact_norm;
use crate::operators::{
    eigendecompose, max_abs, schrodinger_group, LinearGridOperator, Representation, DEFAULT_DENSE_CAP,
};
use crate::quad::integrate_panels;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Sawtooth coordinate `x_l` lifted into `[centre - L/2, centre + L/2)`.
pub fn position(grid: &TorusGrid, axis: usize, centre: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let x = grid.coordinate(grid.multi_index(i)[axis]);
            centre + grid.lifted_difference(x, centre)
        })
        .collect()
}

fn check_axis(a: &LinearGridOperator, axis: usize) -> Result<&TorusGrid> {
    let grid = a.space().require_grid()?;
    if axis >= grid.dim() {
        return Err(LabError::InvalidArgument(format!("axis {axis} out of range for d = {}", grid.dim())));
    }
    Ok(grid)
}

fn dense_matrix(a: &LinearGridOperator) -> Result<DMatrix<Complex64>> {
    if a.len() > DEFAULT_DENSE_CAP {
        return Err(LabError::Capacity { what: "dense commutator", requested: a.len(), cap: DEFAULT_DENSE_CAP });
    }
    Ok(a.matrix())
}

/// `[x_l, A]` by the kernel route: `K(x, y) ↦ (x_l - y_l) K(x, y)` with the
/// torus-lifted difference.
pub fn ad(a: &LinearGridOperator, axis: usize) -> Result<LinearGridOperator> {
    ad_iterated(a, axis, 1)
}

/// `Ad_l^k(A)`, the k-fold kernel-route commutator.
pub fn ad_iterated(a: &LinearGridOperator, axis: usize, k: u32) -> Result<LinearGridOperator> {
    let grid = *check_axis(a, axis)?;
    if k == 0 {
        return Ok(a.clone());
    }
    let lifted = |x: usize, y: usize| {
        let (mx, my) = (grid.multi_index(x), grid.multi_index(y));
        grid.lifted_difference(grid.coordinate(mx[axis]), grid.coordinate(my[axis]))
    };
    if let Some(mut c) = a.convolution_column() {
        // the column is M[z, 0], so the weight is the lifted offset of z
        for (z, v) in c.iter_mut().enumerate() {
            *v *= lifted(z, 0).powi(k as i32);
        }
        fft_in_place(&grid, &mut c, Direction::Forward);
        let s = (grid.len() as f64).sqrt();
        c.iter_mut().for_each(|v| *v *= s);
        return LinearGridOperator::from_symbol(&grid, c);
    }
    let mut m = dense_matrix(a)?;
    for y in 0..m.ncols() {
        for x in 0..m.nrows() {
            m[(x, y)] *= lifted(x, y).powi(k as i32);
        }
    }
    LinearGridOperator::from_matrix(*a.space(), m)
}

/// `X M - M X` for diagonal `X`.
fn commutator(x: &[f64], m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * (x[r] - x[c]))
}

/// `[X, A]` by the matrix route with the sawtooth `X` centred at `centre`.
pub fn ad_matrix(a: &LinearGridOperator, axis: usize, centre: f64) -> Result<LinearGridOperator> {
    ad_matrix_iterated(a, axis, 1, centre)
}

pub fn ad_matrix_iterated(a: &LinearGridOperator, axis: usize, k: u32, centre: f64) -> Result<LinearGridOperator> {
    let grid = check_axis(a, axis)?;
    let x = position(grid, axis, centre);
    let mut m = dense_matrix(a)?;
    for _ in 0..k {
        m = commutator(&x, &m);
    }
    LinearGridOperator::from_matrix(*a.space(), m)
}

/// Largest entry difference between the two routes over pairs whose points
/// both lie within `L/4` of `centre` on axis `axis`, relative to the
/// largest kernel-route entry there.
pub fn route_agreement(a: &LinearGridOperator, axis: usize, k: u32, centre: f64) -> Result<f64> {
    let grid = *check_axis(a, axis)?;
    let kr = ad_iterated(a, axis, k)?.matrix();
    let mr = ad_matrix_iterated(a, axis, k, centre)?.matrix();
    let inside: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.coordinate(grid.multi_index(i)[axis]);
            grid.lifted_difference(x, centre).abs() < grid.side() / 4.0
        })
        .collect();
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for &c in &inside {
        for &r in &inside {
            diff = diff.max((kr[(r, c)] - mr[(r, c)]).norm());
            scale = scale.max(kr[(r, c)].norm());
        }
    }
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Settings shared by the identity checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityOptions {
    #[serde(default)]
    pub axis: usize,
    /// Centre of the sawtooth frame.
    #[serde(default)]
    pub centre: f64,
    /// Relative stopping tolerance of the panel-doubling quadrature.
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_max_panels")]
    pub max_panels: usize,
}

fn default_quad_tol() -> f64 {
    1e-10
}

fn default_max_panels() -> usize {
    1024
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self { axis: 0, centre: 0.0, quad_tol: default_quad_tol(), max_panels: default_max_panels() }
    }
}

/// Residuals of the first-order commutator expansion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub t: f64,
    /// `Ad(R e^{-itH} R)` against its three-term expansion.
    pub expansion_residual: f64,
    /// `R [x, H] R` against `-Ad(R)`.
    pub resolvent_residual: f64,
    pub panels: usize,
    /// Shift `c'` applied to make `H` nonnegative.
    pub shift: f64,
}

impl ExpansionCheck {
    pub fn residual(&self) -> f64 {
        self.expansion_residual.max(self.resolvent_residual)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DuhamelCheck {
    pub xi: f64,
    pub residual: f64,
    pub panels: usize,
}

struct Eigen {
    values: Vec<f64>,
    vectors: Arc<DMatrix<Complex64>>,
}

fn eigen(a: &LinearGridOperator) -> Result<Eigen> {
    if a.len() > DEFAULT_DENSE_CAP {
        return Err(LabError::Capacity { what: "dense commutator", requested: a.len(), cap: DEFAULT_DENSE_CAP });
    }
    let e = eigendecompose(a)?;
    let Representation::Spectral { values, vectors, .. } = e.representation() else {
        unreachable!("eigendecompose returns spectral forms")
    };
    Ok(Eigen { values: values.iter().map(|z| z.re).collect(), vectors: vectors.clone() })
}

impl Eigen {
    /// `U diag(f(λ)) U*`.
    fn function(&self, f: impl Fn(f64) -> Complex64) -> DMatrix<Complex64> {
        let mut scaled = (*self.vectors).clone();
        for (j, l) in self.values.iter().enumerate() {
            let v = f(*l);
            scaled.column_mut(j).iter_mut().for_each(|e| *e *= v);
        }
        scaled * self.vectors.adjoint()
    }

    /// `∫_0^t e^{-isA} Y e^{-i(t-s)A} ds`, integrated entrywise in the eigenbasis.
    fn sandwich_integral(&self, y: &DMatrix<Complex64>, t: f64, opts: &IdentityOptions) -> Result<(DMatrix<Complex64>, usize)> {
        let u = &*self.vectors;
        let yt = u.adjoint() * y * u;
        let n = yt.nrows();
        let lam = &self.values;
        let res = integrate_panels(
            |s| {
                let left: Vec<Complex64> = lam.iter().map(|l| Complex64::from_polar(1.0, -s * l)).collect();
                let right: Vec<Complex64> = lam.iter().map(|l| Complex64::from_polar(1.0, -(t - s) * l)).collect();
                // column-major, matching DMatrix storage
                let mut out = Vec::with_capacity(n * n);
                for b in 0..n {
                    for a in 0..n {
                        out.push(left[a] * yt[(a, b)] * right[b]);
                    }
                }
                out
            },
            0.0,
            t,
            opts.quad_tol,
            opts.max_panels,
        )?;
        let it = DMatrix::from_vec(n, n, res.value);
        Ok((u * it * u.adjoint(), res.panels))
    }
}

fn relative_residual(lhs: &DMatrix<Complex64>, rhs: &DMatrix<Complex64>, floor: f64) -> f64 {
    let scale = max_abs(lhs).max(floor);
    let diff = max_abs(&(lhs - rhs));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn max_abs_vec(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Checks `Ad(R e^{-itH} R) = Ad(R) e^{-itH} R + R e^{-itH} Ad(R)
/// - i ∫_0^t e^{-isH} R[x, H]R e^{-i(t-s)H} ds` with `R = (I + H)^{-1}`,
/// and separately `R[x, H]R = -Ad(R)`. A negative spectrum is shifted away.
pub fn verify_expansion_base(h: &LinearGridOperator, t: f64) -> Result<ExpansionCheck> {
    verify_expansion_base_with(h, t, &IdentityOptions::default())
}

pub fn verify_expansion_base_with(h: &LinearGridOperator, t: f64, opts: &IdentityOptions) -> Result<ExpansionCheck> {
    let grid = check_axis(h, opts.axis)?;
    if !h.is_selfadjoint() {
        return Err(LabError::InvalidOperator("expansion check needs a self-adjoint operator".into()));
    }
    let mut eig = eigen(h)?;
    let lo = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if lo < 0.0 { -lo + 1e-6 } else { 0.0 };
    eig.values.iter_mut().for_each(|l| *l += shift);
    let x = position(grid, opts.axis, opts.centre);
    let hm = eig.function(|l| Complex64::new(l, 0.0));
    let r = eig.function(|l| Complex64::new(1.0 / (1.0 + l), 0.0));
    let e = eig.function(|l| Complex64::from_polar(1.0, -t * l));
    let rer = eig.function(|l| Complex64::from_polar((1.0 + l).powi(-2), -t * l));
    let ad_r = commutator(&x, &r);
    let floor = max_abs_vec(&x) * max_abs(&r);

    let rxhr = &r * commutator(&x, &hm) * &r;
    let resolvent_residual = relative_residual(&(-&ad_r), &rxhr, floor);

    let lhs = commutator(&x, &rer);
    let (integral, panels) = eig.sandwich_integral(&rxhr, t, opts)?;
    let rhs = &ad_r * &e * &r + &r * &e * &ad_r - integral * I;
    let expansion_residual = relative_residual(&lhs, &rhs, floor);
    Ok(ExpansionCheck { t, expansion_residual, resolvent_residual, panels, shift })
}

/// Checks `Ad(e^{-iξR}) = -i ∫_0^ξ e^{-isR} Ad(R) e^{-i(ξ-s)R} ds`.
pub fn verify_duhamel(r: &LinearGridOperator, xi: f64) -> Result<DuhamelCheck> {
    verify_duhamel_with(r, xi, &IdentityOptions::default())
}

pub fn verify_duhamel_with(r: &LinearGridOperator, xi: f64, opts: &IdentityOptions) -> Result<DuhamelCheck> {
    let grid = check_axis(r, opts.axis)?;
    if !r.is_selfadjoint() {
        return Err(LabError::InvalidOperator("Duhamel check needs a self-adjoint operator".into()));
    }
    let eig = eigen(r)?;
    let x = position(grid, opts.axis, opts.centre);
    let e = eig.function(|l| Complex64::from_polar(1.0, -xi * l));
    let lhs = commutator(&x, &e);
    let ad_r = commutator(&x, &eig.function(|l| Complex64::new(l, 0.0)));
    let (integral, panels) = eig.sandwich_integral(&ad_r, xi, opts)?;
    let rhs = integral * (-I);
    let floor = max_abs_vec(&x) * max_abs(&e);
    Ok(DuhamelCheck { xi, residual: relative_residual(&lhs, &rhs, floor), panels })
}

/// All `(m_1, …, m_n)` with `m_i ≥ 0` summing to `total`.
fn compositions(n: usize, total: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(n - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Residual of `Ad^r(A_1⋯A_n) = Σ r!/(m_1!⋯m_n!) Ad^{m_1}(A_1)⋯Ad^{m_n}(A_n)`
/// over `m_1 + ⋯ + m_n = r`, using the matrix route.
pub fn verify_leibniz(factors: &[LinearGridOperator], order: u32, opts: &IdentityOptions) -> Result<f64> {
    let Some(first) = factors.first() else {
        return Err(LabError::InvalidArgument("Leibniz check needs at least one factor".into()));
    };
    let grid = check_axis(first, opts.axis)?;
    if factors.iter().any(|f| f.space() != first.space()) {
        return Err(LabError::InvalidArgument("factors act on different spaces".into()));
    }
    let x = position(grid, opts.axis, opts.centre);
    let mats: Vec<DMatrix<Complex64>> = factors.iter().map(dense_matrix).collect::<Result<_>>()?;
    // iterated commutators of each factor, index m = 0..=order
    let ads: Vec<Vec<DMatrix<Complex64>>> = mats
        .iter()
        .map(|m| {
            let mut v = vec![m.clone()];
            for _ in 0..order {
                let next = commutator(&x, v.last().expect("nonempty"));
                v.push(next);
            }
            v
        })
        .collect();
    let product = mats[1..].iter().fold(mats[0].clone(), |acc, m| acc * m);
    let mut direct = product;
    for _ in 0..order {
        direct = commutator(&x, &direct);
    }
    let n = mats[0].nrows();
    let mut expansion = DMatrix::<Complex64>::zeros(n, n);
    for ms in compositions(mats.len(), order) {
        let coef = factorial(order) / ms.iter().map(|&m| factorial(m)).product::<f64>();
        let term = ms.iter().enumerate().skip(1).fold(ads[0][ms[0] as usize].clone(), |acc, (i, &m)| acc * &ads[i][m as usize]);
        expansion += term * Complex64::new(coef, 0.0);
    }
    let floor = max_abs_vec(&x).powi(order as i32) * mats.iter().map(max_abs).product::<f64>();
    Ok(relative_residual(&direct, &expansion, floor))
}

/// Norms `‖Ad_l^k(A)‖_{2→2}` for `k = 0..=max_order` and the smallest `M`
/// with `norm_k ≤ M^k` for every `k ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub axis: usize,
    pub orders: Vec<u32>,
    pub norms: Vec<f64>,
    pub fitted_m: f64,
}

impl CommutatorReport {
    /// Rows `l, k, norm, fitted_m`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["l", "k", "norm", "fitted_m"])?;
        for (k, n) in self.orders.iter().zip(&self.norms) {
            out.write_record([self.axis.to_string(), k.to_string(), format!("{n:e}"), format!("{:e}", self.fitted_m)])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn commutator_norms(a: &LinearGridOperator, axis: usize, max_order: u32) -> Result<CommutatorReport> {
    check_axis(a, axis)?;
    let orders: Vec<u32> = (0..=max_order).collect();
    let norms: Vec<f64> =
        orders.par_iter().map(|&k| exact_norm(&ad_iterated(a, axis, k)?, 2.0)).collect::<Result<_>>()?;
    let fitted_m = orders.iter().zip(&norms).filter(|(k, _)| **k > 0).map(|(k, n)| n.powf(1.0 / *k as f64)).fold(0.0, f64::max);
    Ok(CommutatorReport { axis, orders, norms, fitted_m })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriterionOptions {
    pub axis: usize,
    /// Scale of the amalgam partition.
    pub j: i32,
    pub probes: usize,
    pub seed: u64,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self { axis: 0, j: 0, probes: 8, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionReport {
    pub commutators: CommutatorReport,
    #[serde(with = "crate::exponent")]
    pub p: f64,
    /// Probe lower bound for `‖A‖_{X^{p,2} → X^{p,2}}`.
    pub measured: f64,
    /// `M^{d(1/p - 1/2)}`, the bound's shape without its constant.
    pub bound_shape: f64,
}

/// Commutator norms up to order `⌊d/2⌋ + 1` next to the measured amalgam
/// norm of `A` on `X^{p,2}`.
pub fn criterion_report(a: &LinearGridOperator, p: f64) -> Result<CriterionReport> {
    criterion_report_with(a, p, &CriterionOptions::default())
}

pub fn criterion_report_with(a: &LinearGridOperator, p: f64, opts: &CriterionOptions) -> Result<CriterionReport> {
    exponent::check(p)?;
    if p > 2.0 {
        return Err(LabError::InvalidArgument(format!("criterion needs 1 <= p <= 2, got {p}")));
    }
    let d = check_axis(a, opts.axis)?.dim();
    let commutators = commutator_norms(a, opts.axis, (d / 2 + 1) as u32)?;
    let measured = amalgam_operator_lower_bound(a, p, 2.0, 2.0, opts.j, opts.probes, opts.seed)?;
    let bound_shape = commutators.fitted_m.powf(d as f64 * (recip(p) - 0.5));
    Ok(CriterionReport { commutators, p, measured, bound_shape })
}

/// Measured `X^{1,2}` norms of `e^{-iξR}` across `ξ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropagatorGrowth {
    pub xi: Vec<f64>,
    pub measured: Vec<f64>,
    /// Regression of `log measured` on `log(1 + ξ)`.
    pub fit: GrowthFit,
    /// `d(1/p_0 - 1/2)` with `p_0 = 1`.
    pub claimed_exponent: f64,
}

/// Lower bounds for `‖e^{-iξR}‖_{X^{1,2}_j → X^{1,2}_j}` over a `ξ` sweep.
pub fn propagator_growth(r: &LinearGridOperator, xis: &[f64], opts: &CriterionOptions) -> Result<PropagatorGrowth> {
    let d = check_axis(r, opts.axis)?.dim();
    let measured: Vec<f64> = xis
        .par_iter()
        .map(|&xi| {
            let e = schrodinger_group(r, xi)?;
            amalgam_operator_lower_bound(&e, 1.0, 2.0, 2.0, opts.j, opts.probes, opts.seed)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(f64, f64)> = xis.iter().zip(&measured).map(|(x, m)| (1.0 + x.abs(), *m)).collect();
    let fit = fit_growth_exponent(&rows)?;
    Ok(PropagatorGrowth { xi: xis.to_vec(), measured, fit, claimed_exponent: d as f64 * 0.5 })
}

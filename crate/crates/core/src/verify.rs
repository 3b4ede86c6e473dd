//! Numerical checks of the heat-operator hypotheses: the `L^{p0} → L^{p0'}`
//! block sums, the weighted `L^2` off-diagonal sums, their equivalent
//! `L^{p0} → L^2` forms, and dyadic scaling covariance.
//!
//! A finite torus cannot certify a supremum over all `t`, so every check is
//! a trend test over a dyadic time sweep: ratios must stay within a fixed
//! factor and show no log-log drift.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amalgam::{block_norm_bracket, block_norm_matrix, schur_sums};
use crate::error::{LabError, Result};
use crate::estimates::loglog_fit;
use crate::exponent::{self, conjugate, recip};
use crate::grid::TorusGrid;
use crate::operators::{
    build_operator, heat_semigroup, relative_max_distance, LinearGridOperator, OperatorKind, OperatorSpec,
};

/// Default heat-kernel tail threshold: relative `L^1` mass beyond `L/4`.
pub const DEFAULT_TAIL_MAX: f64 = 1e-6;
/// A kernel whose source point carries this share of its column mass is
/// not resolved by the grid.
pub const RESOLUTION_LIMIT: f64 = 0.5;

/// Where the mass of an operator's columns sits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    /// Largest share of a column's `ℓ^1` mass at torus distance `> L/4` from its source.
    pub tail: f64,
    /// Largest share of a column's mass on the source point itself.
    pub source_fraction: f64,
}

pub fn localization(a: &LinearGridOperator) -> Result<Localization> {
    let grid = *a.space().require_grid()?;
    let quarter = grid.side() / 4.0;
    let column_stats = |col: &[num_complex::Complex64], src: usize| {
        let total: f64 = col.iter().map(|v| v.norm()).sum();
        if total == 0.0 {
            return (0.0, 0.0);
        }
        let far: f64 =
            col.iter().enumerate().filter(|(x, _)| grid.point_distance(*x, src) > quarter).map(|(_, v)| v.norm()).sum();
        (far / total, col[src].norm() / total)
    };
    let (tail, source_fraction) = if let Some(c) = a.convolution_column() {
        column_stats(&c, 0)
    } else {
        let m = a.matrix();
        (0..m.ncols())
            .into_par_iter()
            .map(|y| column_stats(m.column(y).as_slice(), y))
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    };
    Ok(Localization { tail, source_fraction })
}

fn default_tail_max() -> f64 {
    DEFAULT_TAIL_MAX
}

fn default_ratio_max() -> f64 {
    4.0
}

fn default_slope_max() -> f64 {
    0.1
}

fn default_probes() -> usize {
    16
}

/// `4^{-i}` for `i = 0..=6`.
pub fn default_time_sweep() -> Vec<f64> {
    (0..=6).map(|i| 4f64.powi(-i)).collect()
}

/// Parameters `p0`, `m`, `N` and the time sweep of the hypothesis check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionParams {
    #[serde(with = "crate::exponent")]
    pub p0: f64,
    /// Scaling order: the cube side at time `t` is about `t^{1/m}`.
    pub m: f64,
    /// Weight exponent `N = ⌊d/2⌋ + 1`.
    pub n_weight: u32,
    #[serde(default = "default_time_sweep")]
    pub t_sweep: Vec<f64>,
    /// Spectral shift `c'` (checks `H + c'I`); chosen automatically when
    /// absent and `H` has negative spectrum.
    #[serde(default)]
    pub shift: Option<f64>,
    #[serde(default = "default_tail_max")]
    pub tail_max: f64,
    /// Added to `j(t)`; nonzero values probe sensitivity to the cube scale.
    #[serde(default)]
    pub j_offset: i32,
    #[serde(default = "default_ratio_max")]
    pub ratio_max: f64,
    #[serde(default = "default_slope_max")]
    pub slope_max: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AssumptionParams {
    pub fn new(p0: f64, m: f64, d: usize) -> Self {
        Self {
            p0,
            m,
            n_weight: (d / 2 + 1) as u32,
            t_sweep: default_time_sweep(),
            shift: None,
            tail_max: DEFAULT_TAIL_MAX,
            j_offset: 0,
            ratio_max: default_ratio_max(),
            slope_max: default_slope_max(),
            probes: default_probes(),
            seed: 0,
        }
    }

    pub fn with_times(mut self, t: Vec<f64>) -> Self {
        self.t_sweep = t;
        self
    }

    fn validate(&self, d: usize) -> Result<()> {
        exponent::check(self.p0)?;
        if self.p0 >= 2.0 {
            return Err(LabError::InvalidArgument(format!("p0 must lie in [1, 2), got {}", self.p0)));
        }
        if !(self.m > 0.0) {
            return Err(LabError::InvalidArgument(format!("m must be positive, got {}", self.m)));
        }
        if self.n_weight as usize != d / 2 + 1 {
            return Err(LabError::InvalidArgument(format!("N must be floor(d/2)+1 = {}, got {}", d / 2 + 1, self.n_weight)));
        }
        if self.t_sweep.is_empty() || self.t_sweep.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(LabError::InvalidArgument("time sweep must be nonempty with positive times".into()));
        }
        Ok(())
    }

    /// The scale `j` with `2^{-j} ≤ t^{1/m} < 2^{-j+1}`.
    pub fn scale_for(&self, t: f64) -> i32 {
        let mut x = t.log2() / self.m;
        if (x - x.round()).abs() < 1e-12 {
            x = x.round();
        }
        -(x.floor() as i32)
    }
}

/// One time of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRow {
    pub t: f64,
    pub j: i32,
    /// Column-sum supremum of `L^{p0} → L^{p0'}` block norms (a lower bound
    /// when `p0 ∉ {1}` and the entries are bracketed).
    pub lhs_uno: Option<f64>,
    /// Same sum from the upper bracket entries.
    pub lhs_uno_upper: Option<f64>,
    pub rhs_uno: Option<f64>,
    pub ratio_uno: Option<f64>,
    pub lhs_due: Option<f64>,
    pub ratio_due: Option<f64>,
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedTime {
    pub t: f64,
    pub reason: String,
}

/// Trend statistics of one ratio column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioTrend {
    pub sup: f64,
    pub max_over_min: f64,
    /// Log-log slope of the ratio against `t` (zero for a single row).
    pub slope: f64,
    pub pass: bool,
}

impl RatioTrend {
    fn from(rows: &[(f64, f64)], ratio_max: f64, slope_max: f64) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let sup = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let max_over_min = sup / min;
        let slope = if rows.len() >= 2 { loglog_fit(rows).map(|f| f.slope).unwrap_or(f64::NAN) } else { 0.0 };
        let pass = max_over_min <= ratio_max && slope.abs() <= slope_max && sup.is_finite();
        Some(Self { sup, max_over_min, slope, pass })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub params: AssumptionParams,
    pub grid: TorusGrid,
    pub shift: f64,
    pub rows: Vec<AssumptionRow>,
    pub skipped: Vec<SkippedTime>,
    pub uno: Option<RatioTrend>,
    pub due: Option<RatioTrend>,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    /// True when at least one trend was computed and every computed trend passes.
    pub fn pass(&self) -> bool {
        (self.uno.is_some() || self.due.is_some()) && self.uno.iter().chain(self.due.iter()).all(|r| r.pass)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "j", "lhs_uno", "lhs_uno_upper", "rhs_uno", "ratio_uno", "lhs_due", "ratio_due", "tail"])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                format!("{:e}", r.t),
                r.j.to_string(),
                f(r.lhs_uno),
                f(r.lhs_uno_upper),
                f(r.rhs_uno),
                f(r.ratio_uno),
                f(r.lhs_due),
                f(r.ratio_due),
                format!("{:e}", r.tail),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// JSON summary with thresholds echoed.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

struct Which {
    uno: bool,
    due: bool,
}

fn prepared(h: &LinearGridOperator, params: &AssumptionParams) -> Result<(LinearGridOperator, f64, TorusGrid)> {
    let grid = *h.space().require_grid()?;
    params.validate(grid.dim())?;
    if !h.is_selfadjoint() {
        return Err(LabError::InvalidOperator("assumption checks need a self-adjoint operator".into()));
    }
    let shift = match params.shift {
        Some(c) => c,
        None => {
            let (lo, _) = h.spectrum_bounds()?;
            if lo < 0.0 {
                -lo + 1e-6
            } else {
                0.0
            }
        }
    };
    let op = if shift != 0.0 { h.shifted(shift) } else { h.clone() };
    Ok((op, shift, grid))
}

/// Heat operator at `t` after the localization and resolution checks.
fn safe_heat(h: &LinearGridOperator, t: f64, tail_max: f64) -> Result<(LinearGridOperator, f64)> {
    let heat = heat_semigroup(h, t)?;
    let loc = localization(&heat)?;
    if loc.source_fraction >= RESOLUTION_LIMIT {
        return Err(LabError::UnsafeTime {
            t,
            reason: format!("kernel unresolved: {:.0}% of the mass sits on the source point", 100.0 * loc.source_fraction),
        });
    }
    if loc.tail > tail_max {
        return Err(LabError::UnsafeTime { t, reason: format!("tail mass {:.1e} beyond L/4 exceeds {tail_max:.0e}", loc.tail) });
    }
    Ok((heat, loc.tail))
}

fn check_rows(h: &LinearGridOperator, params: &AssumptionParams, which: Which) -> Result<AssumptionReport> {
    let (op, shift, grid) = prepared(h, params)?;
    let d = grid.dim() as f64;
    let p0 = params.p0;
    let q0 = conjugate(p0);
    let results: Vec<Result<AssumptionRow>> = params
        .t_sweep
        .par_iter()
        .map(|&t| {
            let (heat, tail) = safe_heat(&op, t, params.tail_max)?;
            let j = params.scale_for(t) + params.j_offset;
            let mut row = AssumptionRow {
                t,
                j,
                lhs_uno: None,
                lhs_uno_upper: None,
                rhs_uno: None,
                ratio_uno: None,
                lhs_due: None,
                ratio_due: None,
                tail,
            };
            if which.uno {
                let (lo, hi) = if p0 == 1.0 {
                    let m1 = schur_sums(&block_norm_matrix(&heat, j, p0, q0)?, None).m1;
                    (m1, m1)
                } else {
                    let b = block_norm_bracket(&heat, j, p0, q0, params.probes, params.seed)?;
                    (schur_sums(&b.lower, None).m1, schur_sums(&b.upper, None).m1)
                };
                let rhs = 2f64.powf(j as f64 * d * (recip(p0) - recip(q0)));
                row.lhs_uno = Some(lo);
                row.lhs_uno_upper = Some(hi);
                row.rhs_uno = Some(rhs);
                row.ratio_uno = Some(lo / rhs);
            }
            if which.due {
                let b = block_norm_matrix(&heat, j, 2.0, 2.0)?;
                let m1 = schur_sums(&b, Some(params.n_weight)).m1;
                row.lhs_due = Some(m1);
                row.ratio_due = Some(m1);
            }
            Ok(row)
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut first_unsafe = None;
    for (t, r) in params.t_sweep.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e @ (LabError::UnsafeTime { .. } | LabError::ScaleOutOfRange { .. })) => {
                skipped.push(SkippedTime { t: *t, reason: e.to_string() });
                first_unsafe.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(first_unsafe.expect("nonempty sweep"));
    }
    let trend = |f: fn(&AssumptionRow) -> Option<f64>| {
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| f(r).map(|v| (r.t, v))).collect();
        RatioTrend::from(&pts, params.ratio_max, params.slope_max)
    };
    let uno = trend(|r| r.ratio_uno);
    let due = trend(|r| r.ratio_due);
    let mut notes = vec!["times with delocalized kernels (large t) are clamped by the tail check and untested".to_string()];
    if p0 != 1.0 && which.uno {
        notes.push("p0 not in {1}: lhs_uno uses probe lower bounds; lhs_uno_upper is the interpolation bound".into());
    }
    Ok(AssumptionReport { params: params.clone(), grid, shift, rows, skipped, uno, due, notes })
}

/// Block-sum check of the `L^{p0} → L^{p0'}` smoothing bound across the sweep.
pub fn check_uno(h: &LinearGridOperator, params: &AssumptionParams) -> Result<AssumptionReport> {
    check_rows(h, params, Which { uno: true, due: false })
}

/// Weighted `L^2` off-diagonal check with weight `(1 + 2^j dist)^N`.
pub fn check_due(h: &LinearGridOperator, params: &AssumptionParams) -> Result<AssumptionReport> {
    check_rows(h, params, Which { uno: false, due: true })
}

/// Both checks in one sweep.
pub fn check_assumption(h: &LinearGridOperator, params: &AssumptionParams) -> Result<AssumptionReport> {
    check_rows(h, params, Which { uno: true, due: true })
}

/// Direct and derived values of the `L^1 → L^2` reformulation at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub t: f64,
    pub j: i32,
    /// Column sums of `L^1 → L^∞` block norms.
    pub uno_direct: f64,
    /// Column sums of `L^1 → L^2` block norms.
    pub tre_direct: f64,
    /// Row sums of `L^1 → L^2` block norms.
    pub quattro_direct: f64,
    /// Hölder route: `|Q|^{1/2}` times `uno_direct`.
    pub tre_holder: f64,
    /// Splitting route: column sums of `Σ_{Q''} B_{2→∞}(t/2) B_{1→2}(t/2)`.
    pub uno_split: f64,
    /// `‖e^{-tH} - (e^{-tH/2})²‖_max / ‖e^{-tH}‖_max`.
    pub semigroup_residual: f64,
}

impl EquivalenceRow {
    /// Both derived routes bound their direct values from above.
    pub fn routes_dominate(&self) -> bool {
        let slack = 1e-12;
        self.tre_holder >= self.tre_direct * (1.0 - slack) && self.uno_split >= self.uno_direct * (1.0 - slack)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub skipped: Vec<SkippedTime>,
}

/// Computes the `L^1 → L^2` reformulation directly and through the Hölder
/// and semigroup-splitting routes (`p0 = 1` only).
pub fn check_remark2_equiv(h: &LinearGridOperator, params: &AssumptionParams) -> Result<EquivalenceReport> {
    if params.p0 != 1.0 {
        return Err(LabError::InvalidArgument("the equivalence check is implemented for p0 = 1".into()));
    }
    let (op, _, grid) = prepared(h, params)?;
    let d = grid.dim() as i32;
    let inf = f64::INFINITY;
    let results: Vec<Result<EquivalenceRow>> = params
        .t_sweep
        .par_iter()
        .map(|&t| {
            let (heat, _) = safe_heat(&op, t, params.tail_max)?;
            let half = heat_semigroup(&op, t / 2.0)?;
            let j = params.scale_for(t) + params.j_offset;
            let b1i = block_norm_matrix(&heat, j, 1.0, inf)?;
            let b12 = block_norm_matrix(&heat, j, 1.0, 2.0)?;
            let uno_direct = schur_sums(&b1i, None).m1;
            let s12 = schur_sums(&b12, None);
            let a = block_norm_matrix(&half, j, 2.0, inf)?;
            let b = block_norm_matrix(&half, j, 1.0, 2.0)?;
            let prod: DMatrix<f64> = a.entries() * b.entries();
            let uno_split = prod.column_iter().map(|c| c.sum()).fold(0.0, f64::max);
            Ok(EquivalenceRow {
                t,
                j,
                uno_direct,
                tre_direct: s12.m1,
                quattro_direct: s12.m2,
                tre_holder: 2f64.powi(-j * d).sqrt() * uno_direct,
                uno_split,
                semigroup_residual: relative_max_distance(&half.compose(&half)?, &heat),
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut first = None;
    for (t, r) in params.t_sweep.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e @ (LabError::UnsafeTime { .. } | LabError::ScaleOutOfRange { .. })) => {
                skipped.push(SkippedTime { t: *t, reason: e.to_string() });
                first.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(first.expect("nonempty sweep"));
    }
    Ok(EquivalenceReport { rows, skipped })
}

/// Compares `e^{-tH_k}` with `S_λ e^{-2^k t H} S_λ^{-1}`, `λ = 2^{k/m}`.
///
/// On the grid of side `L/λ` the rescaled operator is the same symbol kind;
/// `S_λ` maps value vectors to themselves between the two grids, so the two
/// sides are compared as matrices on values.
pub fn check_scaling_covariance(spec: &OperatorSpec, k: i32, t: f64) -> Result<f64> {
    let m = spec.operator.order().ok_or_else(|| {
        LabError::InvalidArgument("scaling covariance needs a homogeneous symbol operator".into())
    })?;
    let r = k as f64 / m;
    if (r - r.round()).abs() > 1e-12 {
        return Err(LabError::InvalidArgument(format!("λ = 2^({k}/{m}) is not a power of two")));
    }
    let lambda = 2f64.powi(r.round() as i32);
    let g = spec.grid;
    let scaled_grid = TorusGrid::new(g.dim(), g.points_per_axis(), g.side() / lambda)
        .map_err(|e| LabError::InvalidArgument(format!("rescaled grid is not representable: {e}")))?;
    let h = build_operator(spec)?;
    let hk = build_operator(&OperatorSpec { grid: scaled_grid, ..spec.clone() })?;
    let lhs = heat_semigroup(&hk, t)?;
    let rhs = heat_semigroup(&h, 2f64.powi(k) * t)?;
    Ok(relative_max_distance(&lhs, &rhs))
}

/// Weighted `L^2` Schur sum at fixed spacing and time as the torus grows
/// with `n`; the tail check is disabled since algebraic kernels never pass it.
pub fn due_refinement(
    kind: &OperatorKind,
    d: usize,
    ns: &[usize],
    spacing: f64,
    t: f64,
) -> Result<Vec<(usize, f64)>> {
    let m = kind.order().ok_or_else(|| LabError::InvalidArgument("refinement sweep needs a symbol operator".into()))?;
    ns.par_iter()
        .map(|&n| {
            let grid = TorusGrid::new(d, n, n as f64 * spacing)?;
            let h = build_operator(&OperatorSpec::new(kind.clone(), grid))?;
            let mut params = AssumptionParams::new(1.0, m, d).with_times(vec![t]);
            params.tail_max = f64::INFINITY;
            let rep = check_due(&h, &params)?;
            Ok((n, rep.rows[0].lhs_due.expect("due computed")))
        })
        .collect()
}

//! Self-adjoint operators on torus grids and their functional calculus.
//!
//! Every operator carries the matrix `M` acting on value vectors. The
//! integral kernel is `K = M / h^d`, so `A f(x) = h^d Σ_y K(x,y) f(y)`.

mod bump;
mod io;
mod potential;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::grid::{fft_in_place, Direction, GridFunction, TorusGrid};
use crate::quad::gauss_laguerre;

pub use bump::{bump_family, make_bump, Bump, BumpSpec, FAMILY_SHARPNESS};
pub use io::{read_operator, write_operator};
pub use potential::{kato_norm, kato_norm_with, KatoOptions, PotentialSpec};

/// Default cap on `n^d` for dense materialization.
pub const DEFAULT_DENSE_CAP: usize = 4096;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The vector space an operator acts on: a torus grid, or a bare `C^len`
/// with unit weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorSpace {
    grid: Option<TorusGrid>,
    len: usize,
    weight: f64,
}

impl OperatorSpace {
    pub fn on_grid(grid: &TorusGrid) -> Self {
        Self { grid: Some(*grid), len: grid.len(), weight: grid.cell_measure() }
    }

    pub fn bare(len: usize) -> Self {
        Self { grid: None, len, weight: 1.0 }
    }

    pub fn grid(&self) -> Option<&TorusGrid> {
        self.grid.as_ref()
    }

    pub fn require_grid(&self) -> Result<&TorusGrid> {
        self.grid.as_ref().ok_or_else(|| LabError::InvalidOperator("operator has no grid".into()))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Measure weight `h^d` (1 for bare spaces).
    pub fn weight(&self) -> f64 {
        self.weight
    }
}

#[derive(Clone, Debug)]
pub enum Representation {
    /// Fourier multiplier, one value per FFT bin.
    Symbol(Vec<Complex64>),
    /// Dense integral kernel `K` (row = x, column = y).
    Kernel(DMatrix<Complex64>),
    /// `M = U diag(values) U*` with unitary `U`; values are real for self-adjoint operators.
    /// `real` holds `U` again when it is real orthogonal, which lets dense
    /// functions of `A` be formed with real products.
    Spectral { values: Vec<Complex64>, vectors: Arc<DMatrix<Complex64>>, real: Option<Arc<DMatrix<f64>>> },
}

#[derive(Clone, Debug)]
pub struct LinearGridOperator {
    space: OperatorSpace,
    repr: Representation,
    selfadjoint: bool,
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn ascending(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    order
}

/// `U diag(v) Uᵀ` for real orthogonal `U`, split into real and imaginary
/// products so complex values cost two real multiplications.
fn real_function_matrix(u: &DMatrix<f64>, values: &[Complex64]) -> DMatrix<Complex64> {
    let part = |f: &dyn Fn(&Complex64) -> f64| {
        let mut scaled = u.clone();
        for (j, v) in values.iter().enumerate() {
            let c = f(v);
            scaled.column_mut(j).iter_mut().for_each(|e| *e *= c);
        }
        scaled * u.transpose()
    };
    let re = part(&|z| z.re);
    if values.iter().all(|z| z.im == 0.0) {
        return re.map(|v| Complex64::new(v, 0.0));
    }
    let im = part(&|z| z.im);
    re.zip_map(&im, Complex64::new)
}

fn all_real(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.im == 0.0)
}

impl LinearGridOperator {
    pub fn from_symbol(grid: &TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidOperator(format!(
                "symbol has {} values for {} frequencies",
                values.len(),
                grid.len()
            )));
        }
        let selfadjoint = all_real(&values);
        Ok(Self { space: OperatorSpace::on_grid(grid), repr: Representation::Symbol(values), selfadjoint })
    }

    /// Wraps a kernel matrix; self-adjointness is detected to `1e-10` relative.
    pub fn from_kernel(space: OperatorSpace, kernel: DMatrix<Complex64>) -> Result<Self> {
        if kernel.nrows() != space.len() || kernel.ncols() != space.len() {
            return Err(LabError::InvalidOperator(format!(
                "kernel is {}x{}, space has {} points",
                kernel.nrows(),
                kernel.ncols(),
                space.len()
            )));
        }
        let selfadjoint = hermitian_defect(&kernel) <= 1e-10 * max_abs(&kernel).max(1.0);
        Ok(Self { space, repr: Representation::Kernel(kernel), selfadjoint })
    }

    /// Wraps a matrix acting on value vectors (kernel times `h^d`).
    pub fn from_matrix(space: OperatorSpace, matrix: DMatrix<Complex64>) -> Result<Self> {
        let w = space.weight();
        Self::from_kernel(space, matrix.map(|v| v / w))
    }

    pub fn identity(space: OperatorSpace) -> Self {
        match space.grid {
            Some(g) => Self::from_symbol(&g, vec![ONE; g.len()]).expect("sizes match"),
            None => Self::multiplication(space, &vec![1.0; space.len()]),
        }
    }

    /// Pointwise multiplication by real values.
    pub fn multiplication(space: OperatorSpace, values: &[f64]) -> Self {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            values.len(),
            values.iter().map(|v| Complex64::new(*v, 0.0)),
        ));
        Self::from_matrix(space, m).expect("diagonal matrix fits its space")
    }

    pub fn space(&self) -> &OperatorSpace {
        &self.space
    }

    pub fn grid(&self) -> Option<&TorusGrid> {
        self.space.grid()
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.selfadjoint
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// True when the operator commutes with grid translations.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(self.repr, Representation::Symbol(_))
    }

    /// First column of `M` for a Fourier multiplier: `M[x, y] = c[x - y]`.
    pub fn convolution_column(&self) -> Option<Vec<Complex64>> {
        let Representation::Symbol(g) = &self.repr else { return None };
        let grid = self.space.grid()?;
        let mut c = g.clone();
        fft_in_place(grid, &mut c, Direction::Inverse);
        let s = 1.0 / (grid.len() as f64).sqrt();
        c.iter_mut().for_each(|v| *v *= s);
        Some(c)
    }

    /// Dense matrix `M` acting on value vectors.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        match &self.repr {
            Representation::Symbol(_) => {
                let grid = self.space.grid().expect("symbols live on grids");
                let c = self.convolution_column().expect("symbol");
                let n = grid.points_per_axis();
                DMatrix::from_fn(grid.len(), grid.len(), |x, y| {
                    let (a, b) = (grid.multi_index(x), grid.multi_index(y));
                    let off = [(a[0] + n - b[0]) % n, (a[1] + n - b[1]) % n];
                    c[grid.linear_index(off)]
                })
            }
            Representation::Kernel(k) => k * Complex64::new(self.space.weight(), 0.0),
            Representation::Spectral { values, real: Some(u), .. } => real_function_matrix(u, values),
            Representation::Spectral { values, vectors, .. } => {
                let mut scaled = (**vectors).clone();
                for (j, v) in values.iter().enumerate() {
                    for e in scaled.column_mut(j).iter_mut() {
                        *e *= v;
                    }
                }
                scaled * vectors.adjoint()
            }
        }
    }

    /// Dense kernel `K = M / h^d`.
    pub fn kernel(&self) -> DMatrix<Complex64> {
        match &self.repr {
            Representation::Kernel(k) => k.clone(),
            _ => self.matrix() / Complex64::new(self.space.weight(), 0.0),
        }
    }

    pub fn apply_values(&self, f: &[Complex64]) -> Vec<Complex64> {
        match &self.repr {
            Representation::Symbol(g) => {
                let grid = self.space.grid().expect("symbols live on grids");
                let mut buf = f.to_vec();
                fft_in_place(grid, &mut buf, Direction::Forward);
                buf.iter_mut().zip(g).for_each(|(v, s)| *v *= s);
                fft_in_place(grid, &mut buf, Direction::Inverse);
                buf
            }
            Representation::Kernel(k) => {
                let v = nalgebra::DVector::from_column_slice(f);
                (k * v * Complex64::new(self.space.weight(), 0.0)).iter().copied().collect()
            }
            Representation::Spectral { values, vectors, .. } => {
                let v = nalgebra::DVector::from_column_slice(f);
                let mut c = vectors.adjoint() * v;
                c.iter_mut().zip(values).for_each(|(a, l)| *a *= l);
                (&**vectors * c).iter().copied().collect()
            }
        }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if Some(f.grid()) != self.space.grid() {
            return Err(LabError::InvalidArgument("function and operator live on different grids".into()));
        }
        GridFunction::new(*f.grid(), self.apply_values(f.values()))
    }

    /// Eigenvalues (unsorted for symbols, ascending for spectral forms);
    /// `None` for kernel forms.
    pub fn spectral_values(&self) -> Option<&[Complex64]> {
        match &self.repr {
            Representation::Symbol(g) => Some(g),
            Representation::Spectral { values, .. } => Some(values),
            Representation::Kernel(_) => None,
        }
    }

    /// Smallest and largest eigenvalue of a self-adjoint operator.
    pub fn spectrum_bounds(&self) -> Result<(f64, f64)> {
        let owned;
        let op = if self.spectral_values().is_some() {
            self
        } else {
            owned = eigendecompose(self)?;
            &owned
        };
        if !op.selfadjoint {
            return Err(LabError::InvalidOperator("spectrum bounds need a self-adjoint operator".into()));
        }
        let v = op.spectral_values().expect("diagonal form");
        Ok(v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.re), hi.max(z.re))))
    }

    fn with_values(&self, values: Vec<Complex64>) -> Self {
        let selfadjoint = all_real(&values);
        let repr = match &self.repr {
            Representation::Symbol(_) => Representation::Symbol(values),
            Representation::Spectral { vectors, real, .. } => {
                Representation::Spectral { values, vectors: vectors.clone(), real: real.clone() }
            }
            Representation::Kernel(_) => unreachable!("kernel forms are diagonalized first"),
        };
        Self { space: self.space, repr, selfadjoint }
    }

    /// `self ∘ other`. Stays diagonal when both share an eigenbasis.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(LabError::InvalidArgument("operators act on different spaces".into()));
        }
        let diag = match (&self.repr, &other.repr) {
            (Representation::Symbol(a), Representation::Symbol(b)) => Some(a.iter().zip(b).map(|(x, y)| x * y).collect()),
            (
                Representation::Spectral { values: a, vectors: u, .. },
                Representation::Spectral { values: b, vectors: v, .. },
            ) if Arc::ptr_eq(u, v) => Some(a.iter().zip(b).map(|(x, y)| x * y).collect()),
            _ => None,
        };
        match diag {
            Some(v) => Ok(self.with_values(v)),
            None => Self::from_matrix(self.space, self.matrix() * other.matrix()),
        }
    }

    pub fn adjoint(&self) -> Self {
        match &self.repr {
            Representation::Kernel(k) => Self { space: self.space, repr: Representation::Kernel(k.adjoint()), selfadjoint: self.selfadjoint },
            _ => {
                let v = self.spectral_values().expect("diagonal form").iter().map(|z| z.conj()).collect();
                self.with_values(v)
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match &self.repr {
            Representation::Kernel(k) => Self {
                space: self.space,
                repr: Representation::Kernel(k * Complex64::new(c, 0.0)),
                selfadjoint: self.selfadjoint,
            },
            _ => self.with_values(self.spectral_values().expect("diagonal form").iter().map(|z| z * c).collect()),
        }
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        match &self.repr {
            Representation::Kernel(k) => {
                let mut k = k.clone();
                let add = Complex64::new(c / self.space.weight(), 0.0);
                for i in 0..k.nrows() {
                    k[(i, i)] += add;
                }
                Self { space: self.space, repr: Representation::Kernel(k), selfadjoint: self.selfadjoint }
            }
            _ => self.with_values(self.spectral_values().expect("diagonal form").iter().map(|z| z + c).collect()),
        }
    }
}

/// `max |M_a - M_b| / max |M_b|` over matrix entries.
pub fn relative_max_distance(a: &LinearGridOperator, b: &LinearGridOperator) -> f64 {
    if let (Some(ca), Some(cb)) = (a.convolution_column(), b.convolution_column()) {
        let scale = cb.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = ca.iter().zip(&cb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        return if scale > 0.0 { diff / scale } else { diff };
    }
    let (ma, mb) = (a.matrix(), b.matrix());
    let scale = max_abs(&mb);
    let diff = max_abs(&(ma - &mb));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// What to build, and on which grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub operator: OperatorKind,
    pub grid: TorusGrid,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
}

fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}

impl OperatorSpec {
    pub fn new(operator: OperatorKind, grid: TorusGrid) -> Self {
        Self { operator, grid, dense_cap: DEFAULT_DENSE_CAP }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorKind {
    /// `-Δ`, symbol `|ξ|²`.
    Laplacian,
    /// `(-Δ)^α`, symbol `|ξ|^{2α}`.
    Fractional { alpha: f64 },
    /// `(-Δ)^k`, symbol `|ξ|^{2k}`.
    Polyharmonic { k: u32 },
    /// `-Δ + V`.
    Schrodinger { potential: PotentialSpec },
    /// `(i∇ + A)² + V`, one vector-potential component per axis.
    MagneticSchrodinger { vector_potential: Vec<PotentialSpec>, potential: PotentialSpec },
    /// Row-major kernel `K(x, y)` as `[re, im]` pairs.
    CustomKernel { kernel: Vec<[f64; 2]> },
}

impl OperatorKind {
    /// Homogeneity degree `m` of symbol kinds.
    pub fn order(&self) -> Option<f64> {
        match self {
            OperatorKind::Laplacian => Some(2.0),
            OperatorKind::Fractional { alpha } => Some(2.0 * alpha),
            OperatorKind::Polyharmonic { k } => Some(2.0 * *k as f64),
            _ => None,
        }
    }
}

fn symbol_of(grid: &TorusGrid, power: f64) -> Vec<Complex64> {
    (0..grid.len())
        .map(|i| {
            let [a, b] = grid.frequency(i);
            let r2 = a * a + b * b;
            Complex64::new(if r2 == 0.0 { 0.0 } else { r2.powf(power) }, 0.0)
        })
        .collect()
}

fn check_cap(grid: &TorusGrid, cap: usize) -> Result<()> {
    if grid.len() > cap {
        return Err(LabError::Capacity { what: "dense operator points", requested: grid.len(), cap });
    }
    Ok(())
}

/// Builds the operator described by `spec`.
pub fn build_operator(spec: &OperatorSpec) -> Result<LinearGridOperator> {
    let grid = &spec.grid;
    let space = OperatorSpace::on_grid(grid);
    match &spec.operator {
        OperatorKind::Laplacian => LinearGridOperator::from_symbol(grid, symbol_of(grid, 1.0)),
        OperatorKind::Fractional { alpha } => {
            if !(*alpha > 0.0) {
                return Err(LabError::InvalidArgument(format!("fractional order must be positive, got {alpha}")));
            }
            LinearGridOperator::from_symbol(grid, symbol_of(grid, *alpha))
        }
        OperatorKind::Polyharmonic { k } => {
            if *k == 0 {
                return Err(LabError::InvalidArgument("polyharmonic order must be >= 1".into()));
            }
            LinearGridOperator::from_symbol(grid, symbol_of(grid, *k as f64))
        }
        OperatorKind::Schrodinger { potential } => {
            check_cap(grid, spec.dense_cap)?;
            let v = potential.sample(grid)?;
            let mut m = LinearGridOperator::from_symbol(grid, symbol_of(grid, 1.0))?.matrix();
            for (i, vi) in v.iter().enumerate() {
                m[(i, i)] += vi;
            }
            symmetrized(space, m)
        }
        OperatorKind::MagneticSchrodinger { vector_potential, potential } => {
            check_cap(grid, spec.dense_cap)?;
            if vector_potential.len() != grid.dim() {
                return Err(LabError::InvalidArgument(format!(
                    "vector potential needs {} components, got {}",
                    grid.dim(),
                    vector_potential.len()
                )));
            }
            let v = potential.sample(grid)?;
            let mut m = DMatrix::<Complex64>::zeros(grid.len(), grid.len());
            for (axis, comp) in vector_potential.iter().enumerate() {
                // P = i∂ + A has symbol -ξ_l plus multiplication by A_l
                let sym = (0..grid.len()).map(|i| Complex64::new(-grid.frequency(i)[axis], 0.0)).collect();
                let mut p = LinearGridOperator::from_symbol(grid, sym)?.matrix();
                for (i, a) in comp.sample(grid)?.iter().enumerate() {
                    p[(i, i)] += a;
                }
                m += p.adjoint() * &p;
            }
            for (i, vi) in v.iter().enumerate() {
                m[(i, i)] += vi;
            }
            symmetrized(space, m)
        }
        OperatorKind::CustomKernel { kernel } => {
            check_cap(grid, spec.dense_cap)?;
            let n = grid.len();
            if kernel.len() != n * n {
                return Err(LabError::InvalidOperator(format!("custom kernel needs {} entries, got {}", n * n, kernel.len())));
            }
            let k = DMatrix::from_row_iterator(n, n, kernel.iter().map(|[re, im]| Complex64::new(*re, *im)));
            let op = LinearGridOperator::from_kernel(space, k)?;
            if !op.selfadjoint {
                return Err(LabError::InvalidOperator("custom kernel is not self-adjoint".into()));
            }
            Ok(op)
        }
    }
}

fn symmetrized(space: OperatorSpace, m: DMatrix<Complex64>) -> Result<LinearGridOperator> {
    let defect = hermitian_defect(&m);
    let scale = max_abs(&m).max(1.0);
    if defect > 1e-10 * scale {
        return Err(LabError::InvalidOperator(format!("assembled operator is not self-adjoint (defect {defect:e})")));
    }
    let sym = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut op = LinearGridOperator::from_matrix(space, sym)?;
    op.selfadjoint = true;
    Ok(op)
}

/// Diagonalizes a self-adjoint operator; eigenvalues ascending.
pub fn eigendecompose(a: &LinearGridOperator) -> Result<LinearGridOperator> {
    if !a.selfadjoint {
        return Err(LabError::InvalidOperator("eigendecomposition needs a self-adjoint operator".into()));
    }
    match &a.repr {
        Representation::Spectral { .. } => Ok(a.clone()),
        Representation::Symbol(g) => {
            let grid = *a.space.grid().expect("symbol");
            let n = grid.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| g[i].re.total_cmp(&g[j].re).then(i.cmp(&j)));
            let s = 1.0 / (n as f64).sqrt();
            let u = DMatrix::from_fn(n, n, |x, col| {
                let xi = grid.frequency(order[col]);
                let mi = grid.multi_index(x);
                let phase = xi[0] * grid.coordinate(mi[0]) + xi[1] * grid.coordinate(mi[1]);
                Complex64::from_polar(s, phase)
            });
            let values = order.iter().map(|&i| g[i]).collect();
            Ok(LinearGridOperator {
                space: a.space,
                repr: Representation::Spectral { values, vectors: Arc::new(u), real: None },
                selfadjoint: true,
            })
        }
        Representation::Kernel(_) => {
            let m = a.matrix();
            let scale = max_abs(&m);
            let n = m.nrows();
            let fail = || LabError::NumericalFailure { what: "symmetric eigensolver did not converge".into(), residual: f64::NAN };
            // real symmetric input: the real solver is several times cheaper and its basis enables real products
            let (raw_values, vectors, real) = if m.iter().all(|z| z.im.abs() <= 1e-14 * scale) {
                let eig = SymmetricEigen::try_new(m.map(|z| z.re), 1e-14, 10_000).ok_or_else(fail)?;
                let order = ascending(eig.eigenvalues.as_slice());
                let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
                let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                (values, Arc::new(u.map(|v| Complex64::new(v, 0.0))), Some(Arc::new(u)))
            } else {
                let eig = SymmetricEigen::try_new(m.clone(), 1e-14, 10_000).ok_or_else(fail)?;
                let order = ascending(eig.eigenvalues.as_slice());
                let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
                (order.iter().map(|&i| eig.eigenvalues[i]).collect(), Arc::new(u), None)
            };
            let lmax = raw_values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let values = raw_values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            let out = LinearGridOperator { space: a.space, repr: Representation::Spectral { values, vectors, real }, selfadjoint: true };
            let residual = max_abs(&(out.matrix() - m));
            if residual > 1e-8 * (1.0 + lmax.max(scale)) {
                return Err(LabError::NumericalFailure { what: "eigendecomposition reconstruction".into(), residual });
            }
            Ok(out)
        }
    }
}

/// `g(2^{-k} A)` for self-adjoint `A`. Symbol operators stay symbols.
pub fn apply_spectral_function(
    a: &LinearGridOperator,
    g: impl Fn(f64) -> Complex64,
    k: i32,
) -> Result<LinearGridOperator> {
    if !a.selfadjoint {
        return Err(LabError::InvalidOperator("spectral calculus needs a self-adjoint operator".into()));
    }
    let owned;
    let base = if let Representation::Kernel(_) = a.repr {
        owned = eigendecompose(a)?;
        &owned
    } else {
        a
    };
    let scale = 2f64.powi(-k);
    let mut out = Vec::with_capacity(base.len());
    for z in base.spectral_values().expect("diagonal form") {
        let v = g(scale * z.re);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(LabError::Domain(format!("g is not finite at λ = {}", scale * z.re)));
        }
        out.push(v);
    }
    Ok(base.with_values(out))
}

/// `e^{-tA}`.
pub fn heat_semigroup(a: &LinearGridOperator, t: f64) -> Result<LinearGridOperator> {
    apply_spectral_function(a, |l| Complex64::new((-t * l).exp(), 0.0), 0)
}

/// `e^{-itA}`.
pub fn schrodinger_group(a: &LinearGridOperator, t: f64) -> Result<LinearGridOperator> {
    apply_spectral_function(a, |l| Complex64::from_polar(1.0, -t * l), 0)
}

/// `A + c'I` with `c' = max(0, -λ_min) + 1e-6`, returned with `c'`.
pub fn shift_to_positive(a: &LinearGridOperator) -> Result<(LinearGridOperator, f64)> {
    let (lo, _) = a.spectrum_bounds()?;
    let c = (-lo).max(0.0) + 1e-6;
    Ok((a.shifted(c), c))
}

/// Settings for [`resolvent_power_quadrature_with`].
#[derive(Clone, Debug)]
pub struct ResolventQuadratureOptions {
    pub nodes: usize,
    pub tol: f64,
    pub max_nodes: usize,
}

impl Default for ResolventQuadratureOptions {
    fn default() -> Self {
        Self { nodes: 64, tol: 1e-8, max_nodes: 2048 }
    }
}

#[derive(Clone, Debug)]
pub struct ResolventQuadrature {
    pub operator: LinearGridOperator,
    pub nodes: usize,
    /// Max-norm change between the last two node counts.
    pub change: f64,
}

/// `(I + A)^{-β}` from the Laguerre-type integral of the heat semigroup
/// with default settings.
pub fn resolvent_power_quadrature(a: &LinearGridOperator, beta: f64) -> Result<LinearGridOperator> {
    Ok(resolvent_power_quadrature_with(a, beta, &ResolventQuadratureOptions::default())?.operator)
}

/// `(1/Γ(β)) Σ_i w_i e^{-t_i A}` over generalized Gauss–Laguerre nodes for
/// the weight `t^{β-1} e^{-t}`, doubling the node count until successive
/// operators differ by less than `tol` in max-norm.
pub fn resolvent_power_quadrature_with(
    a: &LinearGridOperator,
    beta: f64,
    opts: &ResolventQuadratureOptions,
) -> Result<ResolventQuadrature> {
    if !(beta > 0.0) {
        return Err(LabError::InvalidArgument(format!("β must be positive, got {beta}")));
    }
    let owned;
    let base = if let Representation::Kernel(_) = a.repr {
        owned = eigendecompose(a)?;
        &owned
    } else {
        a
    };
    let (lo, _) = base.spectrum_bounds()?;
    if lo < -1e-10 {
        return Err(LabError::InvalidOperator(format!("negative spectrum (λ_min = {lo:e})")));
    }
    let lambdas: Vec<f64> = base.spectral_values().expect("diagonal form").iter().map(|z| z.re).collect();
    let norm = 1.0 / gamma(beta);
    let evaluate = |nodes: usize| -> Result<Vec<f64>> {
        let (t, w) = gauss_laguerre(nodes, beta - 1.0)?;
        Ok(lambdas
            .iter()
            .map(|&l| norm * t.iter().zip(&w).map(|(ti, wi)| wi * (-ti * l).exp()).sum::<f64>())
            .collect())
    };
    let mut nodes = opts.nodes.max(1);
    let mut prev = evaluate(nodes)?;
    loop {
        let next_nodes = nodes * 2;
        let next = evaluate(next_nodes)?;
        // the operator 2-norm of the change bounds its max-norm
        let change = next.iter().zip(&prev).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if change < opts.tol {
            let values = next.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
            return Ok(ResolventQuadrature { operator: base.with_values(values), nodes: next_nodes, change });
        }
        if next_nodes >= opts.max_nodes {
            return Err(LabError::NumericalFailure { what: "resolvent quadrature node doubling".into(), residual: change });
        }
        nodes = next_nodes;
        prev = next;
    }
}

/// `(I + A)^{-β}` by direct spectral evaluation.
pub fn resolvent_power(a: &LinearGridOperator, beta: f64) -> Result<LinearGridOperator> {
    apply_spectral_function(
        a,
        |l| {
            if 1.0 + l > 0.0 {
                Complex64::new((1.0 + l).powf(-beta), 0.0)
            } else {
                Complex64::new(f64::NAN, 0.0)
            }
        },
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn laplacian(d: usize, n: usize, side: f64) -> LinearGridOperator {
        build_operator(&OperatorSpec::new(OperatorKind::Laplacian, make_grid(d, n, side).unwrap())).unwrap()
    }

    fn random_values(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn laplacian_eigenfunction() {
        let h = laplacian(1, 64, 8.0);
        let g = *h.grid().unwrap();
        let f = GridFunction::from_fn(g, |x| Complex64::from_polar(1.0, 2.0 * PI * x[0] / 8.0));
        let hf = h.apply(&f).unwrap();
        let k2 = (2.0 * PI / 8.0).powi(2);
        for (a, b) in hf.values().iter().zip(f.values()) {
            assert!((a - b * k2).norm() < 1e-12);
        }
        let frac = build_operator(&OperatorSpec::new(OperatorKind::Fractional { alpha: 1.0 }, g)).unwrap();
        assert!(relative_max_distance(&frac, &h) < 1e-14);
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let g = make_grid(1, 32, 4.0).unwrap();
        let lap = eigendecompose(&laplacian(1, 32, 4.0)).unwrap();
        let s = build_operator(&OperatorSpec::new(
            OperatorKind::Schrodinger { potential: PotentialSpec::Constant { value: 5.0 } },
            g,
        ))
        .unwrap();
        let e = eigendecompose(&s).unwrap();
        for (a, b) in e.spectral_values().unwrap().iter().zip(lap.spectral_values().unwrap()) {
            assert!((a.re - b.re - 5.0).abs() < 1e-8);
        }
    }

    #[test]
    fn swap_matrix_and_random_reconstruction() {
        let k = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let a = LinearGridOperator::from_kernel(OperatorSpace::bare(2), k).unwrap();
        let e = eigendecompose(&a).unwrap();
        let v = e.spectral_values().unwrap();
        assert!((v[0].re + 1.0).abs() < 1e-12 && (v[1].re - 1.0).abs() < 1e-12);

        let r = DMatrix::from_vec(64, 64, random_values(64 * 64, 3));
        let herm = &r + r.adjoint();
        let a = LinearGridOperator::from_kernel(OperatorSpace::bare(64), herm.clone()).unwrap();
        let e = eigendecompose(&a).unwrap();
        assert!(max_abs(&(e.matrix() - herm)) < 1e-8 * 20.0);
        let v = e.spectral_values().unwrap();
        assert!(v.windows(2).all(|w| w[0].re <= w[1].re));
        if let Representation::Spectral { vectors, .. } = e.representation() {
            let gram = vectors.adjoint() * &**vectors;
            assert!(max_abs(&(gram - DMatrix::identity(64, 64))) < 1e-8);
        }
    }

    #[test]
    fn symbol_diagonalization_uses_fourier_modes() {
        let h = laplacian(2, 8, 2.0);
        let e = eigendecompose(&h).unwrap();
        assert!(max_abs(&(e.matrix() - h.matrix())) < 1e-10);
    }

    #[test]
    fn heat_kernel_matches_gaussian() {
        let h = laplacian(1, 256, 32.0);
        let t = 0.5;
        let heat = heat_semigroup(&h, t).unwrap();
        let col = heat.convolution_column().unwrap();
        let g = heat.grid().unwrap();
        for i in 0..g.len() {
            let x = g.distance_from_origin(i);
            if x > 8.0 {
                continue;
            }
            let exact = (4.0 * PI * t).powf(-0.5) * (-x * x / (4.0 * t)).exp();
            let k = col[i].re / g.cell_measure();
            assert!((k - exact).abs() <= 1e-4 * exact.max(1e-300) || (k - exact).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn semigroup_unitarity_and_identity() {
        let h = laplacian(1, 64, 8.0);
        let a = heat_semigroup(&h, 0.3).unwrap();
        let b = heat_semigroup(&h, 0.2).unwrap();
        let ab = a.compose(&b).unwrap();
        assert!(relative_max_distance(&ab, &heat_semigroup(&h, 0.5).unwrap()) < 1e-8);
        let id = apply_spectral_function(&h, |_| ONE, 3).unwrap();
        assert!(relative_max_distance(&id, &LinearGridOperator::identity(*h.space())) < 1e-14);
        let f = random_values(64, 1);
        let u = schrodinger_group(&h, 10.0).unwrap();
        let n0: f64 = f.iter().map(|v| v.norm_sqr()).sum();
        let n1: f64 = u.apply_values(&f).iter().map(|v| v.norm_sqr()).sum();
        assert!((n1 / n0 - 1.0).abs() < 1e-10);
        let bad = apply_spectral_function(&h, |l| Complex64::new(1.0 / (l - h.spectral_values().unwrap()[1].re), 0.0), 0);
        assert!(matches!(bad, Err(LabError::Domain(_))));
    }

    #[test]
    fn resolvent_routes_agree() {
        let h = laplacian(1, 128, 64.0);
        for &beta in &[1.0, 1.7, 6.0] {
            let q = resolvent_power_quadrature(&h, beta).unwrap();
            let s = resolvent_power(&h, beta).unwrap();
            assert!(relative_max_distance(&q, &s) < 1e-6, "beta={beta}");
        }
        let zero = laplacian(1, 16, 2.0).scaled(0.0);
        let r = resolvent_power_quadrature(&zero, 1.0).unwrap();
        assert!(relative_max_distance(&r, &LinearGridOperator::identity(*zero.space())) < 1e-10);
        assert!(matches!(resolvent_power_quadrature(&h.shifted(-1.0), 1.0), Err(LabError::InvalidOperator(_))));
    }

    #[test]
    fn magnetic_operator_is_selfadjoint_and_gauge_covariant_for_constant_field() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let a = PotentialSpec::Constant { value: 2.0 * PI / 8.0 };
        let m = build_operator(&OperatorSpec::new(
            OperatorKind::MagneticSchrodinger { vector_potential: vec![a], potential: PotentialSpec::zero() },
            g,
        ))
        .unwrap();
        assert!(m.is_selfadjoint());
        // constant A is a gauge shift by one mode: spectrum is the Laplacian's, relabelled
        let mut e: Vec<f64> = eigendecompose(&m).unwrap().spectral_values().unwrap().iter().map(|v| v.re).collect();
        let mut l: Vec<f64> = (0..32).map(|i| (g.wavenumber(i) - 2.0 * PI / 8.0).powi(2)).collect();
        e.sort_by(f64::total_cmp);
        l.sort_by(f64::total_cmp);
        for (x, y) in e.iter().zip(&l) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn custom_kernel_rules() {
        let g = make_grid(1, 8, 1.0).unwrap();
        let mut k = vec![[0.0, 0.0]; 64];
        k[1] = [1.0, 0.0];
        let err = build_operator(&OperatorSpec::new(OperatorKind::CustomKernel { kernel: k.clone() }, g));
        assert!(matches!(err, Err(LabError::InvalidOperator(_))));
        k[8] = [1.0, 0.0];
        assert!(build_operator(&OperatorSpec::new(OperatorKind::CustomKernel { kernel: k }, g)).is_ok());
        let big = make_grid(1, 8192, 1.0).unwrap();
        let err = build_operator(&OperatorSpec::new(
            OperatorKind::Schrodinger { potential: PotentialSpec::zero() },
            big,
        ));
        assert!(matches!(err, Err(LabError::Capacity { .. })));
    }
}

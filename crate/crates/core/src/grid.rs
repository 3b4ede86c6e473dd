//! Periodic grids standing in for R^d, complex grid functions with
//! measure-weighted L^p norms, the unitary discrete Fourier transform and
//! dyadic cube partitions.

use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default cap on the number of grid points.
pub const DEFAULT_POINT_CAP: usize = 1 << 22;

fn exact_log2(x: f64) -> Option<i32> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let e = x.log2().round() as i32;
    (2f64.powi(e) == x).then_some(e)
}

/// Torus of side `side` in `d` dimensions sampled with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams")]
pub struct TorusGrid {
    d: usize,
    n: usize,
    side: f64,
}

// Deserialization goes through the validating constructor.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridParams {
    d: usize,
    n: usize,
    side: f64,
}

impl TryFrom<GridParams> for TorusGrid {
    type Error = LabError;
    fn try_from(p: GridParams) -> Result<Self> {
        make_grid(p.d, p.n, p.side)
    }
}

impl TorusGrid {
    /// Builds a grid; see [`make_grid`].
    pub fn new(d: usize, n: usize, side: f64) -> Result<Self> {
        make_grid_capped(d, n, side, DEFAULT_POINT_CAP)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Grid spacing `L/n`.
    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Measure weight `h^d` of one grid cell.
    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn log2_side(&self) -> i32 {
        exact_log2(self.side).expect("validated at construction")
    }

    pub fn log2_n(&self) -> i32 {
        self.n.trailing_zeros() as i32
    }

    /// Multi-index of a linear (row-major) index.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.d == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    pub fn linear_index(&self, mi: [usize; 2]) -> usize {
        if self.d == 1 {
            mi[0]
        } else {
            mi[0] * self.n + mi[1]
        }
    }

    /// Coordinate of the point with per-axis index `i`, in `[0, L)`.
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Signed integer frequency of the FFT-ordered bin `m`, in `-n/2..n/2`.
    pub fn signed_mode(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Angular wavenumber `2π/L · signed(m)` of the FFT-ordered bin `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI / self.side * self.signed_mode(m) as f64
    }

    /// Frequency vector (padded to two axes) for a linear spectral index.
    pub fn frequency(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        if self.d == 1 {
            [self.wavenumber(mi[0]), 0.0]
        } else {
            [self.wavenumber(mi[0]), self.wavenumber(mi[1])]
        }
    }

    /// Largest representable |ξ| per axis (the Nyquist wavenumber).
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.side
    }

    /// Signed torus displacement `x - y` lifted to `[-L/2, L/2)`.
    pub fn lifted_difference(&self, x: f64, y: f64) -> f64 {
        let l = self.side;
        let mut r = (x - y) % l;
        if r < -l / 2.0 {
            r += l;
        } else if r >= l / 2.0 {
            r -= l;
        }
        r
    }

    /// Euclidean torus distance between two grid points.
    pub fn point_distance(&self, a: usize, b: usize) -> f64 {
        let (ma, mb) = (self.multi_index(a), self.multi_index(b));
        let mut s = 0.0;
        for ax in 0..self.d {
            let r = self.lifted_difference(self.coordinate(ma[ax]), self.coordinate(mb[ax]));
            s += r * r;
        }
        s.sqrt()
    }

    /// Torus distance of a grid point from the origin.
    pub fn distance_from_origin(&self, a: usize) -> f64 {
        self.point_distance(a, 0)
    }

    /// Inclusive range of dyadic scales whose cubes align with the grid.
    pub fn scale_range(&self) -> (i32, i32) {
        (-self.log2_side(), self.log2_n() - self.log2_side())
    }
}

/// Builds a torus grid, checking the power-of-two rules and the default cap.
pub fn make_grid(d: usize, n: usize, side: f64) -> Result<TorusGrid> {
    make_grid_capped(d, n, side, DEFAULT_POINT_CAP)
}

pub fn make_grid_capped(d: usize, n: usize, side: f64, cap: usize) -> Result<TorusGrid> {
    if d != 1 && d != 2 {
        return Err(LabError::InvalidArgument(format!("dimension must be 1 or 2, got {d}")));
    }
    if n < 8 || !n.is_power_of_two() {
        return Err(LabError::InvalidArgument(format!(
            "points per axis must be a power of two >= 8, got {n}"
        )));
    }
    if exact_log2(side).is_none() {
        return Err(LabError::InvalidArgument(format!(
            "side length must be a power of two, got {side}"
        )));
    }
    let total = n.checked_pow(d as u32).unwrap_or(usize::MAX);
    if total > cap {
        return Err(LabError::Capacity { what: "grid points", requested: total, cap });
    }
    Ok(TorusGrid { d, n, side })
}

/// Complex field sampled on a torus grid (row-major, first axis slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn constant(grid: TorusGrid, c: Complex64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at the grid coordinates (second coordinate is 0 when d=1).
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let mi = grid.multi_index(idx);
                let x = [grid.coordinate(mi[0]), if grid.d == 2 { grid.coordinate(mi[1]) } else { 0.0 }];
                f(x)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(LabError::InvalidArgument(format!("exponent must lie in [1, inf], got {p}")));
    }
    Ok(())
}

/// Weighted norm of a slice of values: `(w Σ |v|^p)^{1/p}`, max for p = ∞.
pub(crate) fn weighted_lp(values: impl Iterator<Item = Complex64>, weight: f64, p: f64) -> f64 {
    if p.is_infinite() {
        values.map(|v| v.norm()).fold(0.0, f64::max)
    } else if p == 1.0 {
        weight * values.map(|v| v.norm()).sum::<f64>()
    } else if p == 2.0 {
        (weight * values.map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    } else {
        let mags: Vec<f64> = values.map(|v| v.norm()).collect();
        let m = mags.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * (weight * mags.iter().map(|a| (a / m).powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// `(h^d Σ_x |f(x)|^p)^{1/p}`, or `max |f|` for `p = ∞`.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if f.values.iter().any(|v| v.re.is_nan() || v.im.is_nan()) {
        return Err(LabError::InvalidData("NaN in grid function".into()));
    }
    Ok(weighted_lp(f.values.iter().copied(), f.grid.cell_measure(), p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place unitary DFT over all axes of a row-major buffer.
pub(crate) fn fft_in_place(grid: &TorusGrid, buf: &mut [Complex64], dir: Direction) {
    let n = grid.n;
    let mut planner = FftPlanner::<f64>::new();
    let plan: Arc<dyn rustfft::Fft<f64>> = match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    if grid.d == 1 {
        plan.process(buf);
    } else {
        for row in buf.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = buf[r * n + c];
            }
            plan.process(&mut col);
            for r in 0..n {
                buf[r * n + c] = col[r];
            }
        }
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Unitary discrete Fourier transform. The output is stored in FFT bin
/// order; [`TorusGrid::frequency`] maps a bin to its wavenumber.
pub fn fourier_transform(f: &GridFunction, dir: Direction) -> GridFunction {
    let mut values = f.values.clone();
    fft_in_place(&f.grid, &mut values, dir);
    GridFunction { grid: f.grid, values }
}

/// A dyadic cube of side `2^{-j}` aligned with the grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cube {
    pub j: i32,
    /// Cube index per axis (second entry is 0 when d=1).
    pub anchor: [usize; 2],
    /// First grid index covered, per axis.
    pub start: [usize; 2],
    /// Points per axis inside the cube.
    pub points: usize,
}

impl Cube {
    pub fn side(&self) -> f64 {
        2f64.powi(-self.j)
    }
}

/// The collection `Q_j` of dyadic cubes tiling the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicPartition {
    grid: TorusGrid,
    j: i32,
    per_axis: usize,
    cubes: Vec<Cube>,
}

impl DyadicPartition {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn scale(&self) -> i32 {
        self.j
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn cubes_per_axis(&self) -> usize {
        self.per_axis
    }

    /// Points per axis in each cube.
    pub fn cube_points(&self) -> usize {
        self.grid.n / self.per_axis
    }

    /// Linear grid indices covered by the cube, in row-major order.
    pub fn point_indices(&self, q: &Cube) -> Vec<usize> {
        let s = q.points;
        let g = &self.grid;
        if g.d == 1 {
            (q.start[0]..q.start[0] + s).collect()
        } else {
            let mut out = Vec::with_capacity(s * s);
            for a in q.start[0]..q.start[0] + s {
                for b in q.start[1]..q.start[1] + s {
                    out.push(g.linear_index([a, b]));
                }
            }
            out
        }
    }

    /// Position of a cube in `cubes()` from its anchor.
    pub fn cube_index(&self, anchor: [usize; 2]) -> usize {
        if self.grid.d == 1 {
            anchor[0]
        } else {
            anchor[0] * self.per_axis + anchor[1]
        }
    }

    /// Index of the cube containing a grid point.
    pub fn cube_of_point(&self, idx: usize) -> usize {
        let mi = self.grid.multi_index(idx);
        let s = self.cube_points();
        self.cube_index([mi[0] / s, if self.grid.d == 2 { mi[1] / s } else { 0 }])
    }

    fn owns(&self, q: &Cube) -> bool {
        q.j == self.j
            && q.points == self.cube_points()
            && q.anchor[0] < self.per_axis
            && (self.grid.d == 2 || q.anchor[1] == 0)
            && q.anchor[1] < self.per_axis
            && self.cubes[self.cube_index(q.anchor)] == *q
    }

    /// Circular per-axis gap (in cubes) between two cube anchors.
    pub(crate) fn axis_gap(&self, a: usize, b: usize) -> usize {
        let c = self.per_axis;
        let delta = (b + c - a) % c;
        delta.min(c - delta).saturating_sub(1)
    }

    /// Torus distance between cubes given by their positions in `cubes()`.
    pub fn distance_by_index(&self, a: usize, b: usize) -> f64 {
        let (qa, qb) = (&self.cubes[a], &self.cubes[b]);
        let side = qa.side();
        let mut s = 0.0;
        for ax in 0..self.grid.d {
            let g = self.axis_gap(qa.anchor[ax], qb.anchor[ax]) as f64 * side;
            s += g * g;
        }
        s.sqrt()
    }
}

/// Partitions the torus into the dyadic cubes of side `2^{-j}`.
pub fn dyadic_partition(grid: &TorusGrid, j: i32) -> Result<DyadicPartition> {
    let (min, max) = grid.scale_range();
    if j < min || j > max {
        return Err(LabError::ScaleOutOfRange { j, min, max });
    }
    // side = 2^{-j}, cubes per axis = L 2^j, points per cube = n / (L 2^j)
    let per_axis = 1usize << (grid.log2_side() + j) as u32;
    let s = grid.n / per_axis;
    let mut cubes = Vec::with_capacity(per_axis.pow(grid.d as u32));
    if grid.d == 1 {
        for a in 0..per_axis {
            cubes.push(Cube { j, anchor: [a, 0], start: [a * s, 0], points: s });
        }
    } else {
        for a in 0..per_axis {
            for b in 0..per_axis {
                cubes.push(Cube { j, anchor: [a, b], start: [a * s, b * s], points: s });
            }
        }
    }
    Ok(DyadicPartition { grid: *grid, j, per_axis, cubes })
}

/// Minimal torus distance between two closed cubes of one partition.
pub fn cube_distance(p: &DyadicPartition, a: &Cube, b: &Cube) -> Result<f64> {
    if !p.owns(a) || !p.owns(b) {
        return Err(LabError::InvalidArgument("cube does not belong to this partition".into()));
    }
    Ok(p.distance_by_index(p.cube_index(a.anchor), p.cube_index(b.anchor)))
}

/// Multiplies `f` by the indicator of `q`.
pub fn restrict(f: &GridFunction, p: &DyadicPartition, q: &Cube) -> Result<GridFunction> {
    if f.grid != p.grid || !p.owns(q) {
        return Err(LabError::InvalidArgument("cube and function live on different grids".into()));
    }
    let mut out = GridFunction::zeros(f.grid);
    for i in p.point_indices(q) {
        out.values[i] = f.values[i];
    }
    Ok(out)
}

// Serialization: header (d, n, L) then row-major values, re/im interleaved.

const BINARY_MAGIC: &[u8; 4] = b"GFN1";

pub fn write_binary<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(f.grid.d as u32).to_le_bytes())?;
    w.write_all(&(f.grid.n as u32).to_le_bytes())?;
    w.write_all(&f.grid.side.to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_grid_header<R: Read>(r: &mut R) -> Result<TorusGrid> {
    let d = read_u32(r)? as usize;
    let n = read_u32(r)? as usize;
    let side = read_f64(r)?;
    make_grid(d, n, side)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridFunction> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(LabError::InvalidData("not a grid-function file".into()));
    }
    let grid = read_grid_header(&mut r)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        values.push(Complex64::new(re, im));
    }
    GridFunction::new(grid, values)
}

/// CSV layout: first record `d,n,L`, then one `re,im` record per point.
pub fn write_csv<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    writeln!(w, "{},{},{}", f.grid.d, f.grid.n, f.grid.side)?;
    for v in &f.values {
        writeln!(w, "{:e},{:e}", v.re, v.im)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<GridFunction> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| LabError::InvalidData("empty csv".into()))??;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(LabError::InvalidData(format!("bad header `{header}`")));
    }
    let bad = |s: &str| LabError::InvalidData(format!("bad number `{s}`"));
    let d: usize = parts[0].parse().map_err(|_| bad(parts[0]))?;
    let n: usize = parts[1].parse().map_err(|_| bad(parts[1]))?;
    let side: f64 = parts[2].parse().map_err(|_| bad(parts[2]))?;
    let grid = make_grid(d, n, side)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (re, im) = line.split_once(',').ok_or_else(|| bad(&line))?;
        let re: f64 = re.trim().parse().map_err(|_| bad(re))?;
        let im: f64 = im.trim().parse().map_err(|_| bad(im))?;
        values.push(Complex64::new(re, im));
    }
    GridFunction::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(grid: TorusGrid, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        GridFunction::new(grid, v).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = make_grid(1, 256, 16.0).unwrap();
        assert_eq!(g.spacing(), 1.0 / 16.0);
        let g2 = make_grid(2, 64, 8.0).unwrap();
        assert_eq!(g2.len(), 4096);
        assert!(matches!(make_grid(1, 100, 16.0), Err(LabError::InvalidArgument(_))));
        assert!(matches!(make_grid(1, 256, 12.0), Err(LabError::InvalidArgument(_))));
        assert!(matches!(make_grid(1, 4, 1.0), Err(LabError::InvalidArgument(_))));
        assert!(matches!(make_grid_capped(2, 1024, 1.0, 1 << 16), Err(LabError::Capacity { .. })));
        assert!(make_grid(1, 64, 0.5).is_ok());
    }

    #[test]
    fn norm_of_constant_and_indicator() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let one = GridFunction::constant(g, Complex64::new(1.0, 0.0));
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            assert!((lp_norm(&one, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let part = dyadic_partition(&g, 1).unwrap();
        let half = restrict(&one, &part, &part.cubes()[0]).unwrap();
        assert!((lp_norm(&half, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((lp_norm(&half, 1.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn nan_is_invalid_data() {
        let g = make_grid(1, 8, 1.0).unwrap();
        let mut f = GridFunction::zeros(g);
        f.values_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(lp_norm(&f, 2.0), Err(LabError::InvalidData(_))));
        assert!(lp_norm(&GridFunction::zeros(g), 0.5).is_err());
    }

    #[test]
    fn parseval_matches_direct_sum() {
        for d in [1, 2] {
            let g = make_grid(d, 32, 4.0).unwrap();
            for seed in 0..100 {
                let f = random_fn(g, seed);
                // oracle: direct weighted sum of squares
                let direct = (g.cell_measure() * f.values().iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
                let fhat = fourier_transform(&f, Direction::Forward);
                let spec = lp_norm(&fhat, 2.0).unwrap();
                assert!((spec - direct).abs() <= 1e-12 * direct);
                let back = fourier_transform(&fhat, Direction::Inverse);
                for (a, b) in back.values().iter().zip(f.values()) {
                    assert!((a - b).norm() <= 1e-12 * direct.max(1.0));
                }
            }
        }
    }

    #[test]
    fn fourier_spikes() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let one = GridFunction::constant(g, Complex64::new(1.0, 0.0));
        let fh = fourier_transform(&one, Direction::Forward);
        assert!(fh.values()[0].norm() > 1.0);
        assert!(fh.values()[1..].iter().all(|v| v.norm() < 1e-12));
        let l = g.side();
        let wave = GridFunction::from_fn(g, |x| Complex64::from_polar(1.0, 2.0 * PI * x[0] / l));
        let wh = fourier_transform(&wave, Direction::Forward);
        let peak = (0..g.len()).max_by(|&a, &b| wh.values()[a].norm().total_cmp(&wh.values()[b].norm())).unwrap();
        assert!((g.frequency(peak)[0] - 2.0 * PI / l).abs() < 1e-12);
        let others: f64 = (0..g.len()).filter(|&m| m != peak).map(|m| wh.values()[m].norm()).sum();
        assert!(others < 1e-10);
    }

    #[test]
    fn partitions_count_and_range() {
        let g = make_grid(1, 256, 16.0).unwrap();
        assert_eq!(dyadic_partition(&g, 0).unwrap().len(), 16);
        let g2 = make_grid(2, 64, 8.0).unwrap();
        let p = dyadic_partition(&g2, -1).unwrap();
        assert_eq!(p.len(), 16);
        assert_eq!(p.cubes()[0].side(), 2.0);
        match dyadic_partition(&g, 5) {
            Err(LabError::ScaleOutOfRange { min, max, .. }) => assert_eq!((min, max), (-4, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cube_distances() {
        let g = make_grid(1, 256, 16.0).unwrap();
        let p = dyadic_partition(&g, 0).unwrap();
        let c = p.cubes();
        assert_eq!(cube_distance(&p, &c[0], &c[0]).unwrap(), 0.0);
        assert_eq!(cube_distance(&p, &c[0], &c[1]).unwrap(), 0.0);
        assert_eq!(cube_distance(&p, &c[0], &c[15]).unwrap(), 0.0);
        // oracle: minimum over corner pairs and periodic images
        let corner_oracle = |a: f64, b: f64| {
            let mut best = f64::INFINITY;
            for shift in [-16.0, 0.0, 16.0] {
                for ca in [a, a + 1.0] {
                    for cb in [b + shift, b + shift + 1.0] {
                        best = best.min((ca - cb).abs());
                    }
                }
                // overlapping intervals
                if b + shift <= a + 1.0 && a <= b + shift + 1.0 {
                    best = 0.0;
                }
            }
            best
        };
        for a in 0..16 {
            for b in 0..16 {
                let got = cube_distance(&p, &c[a], &c[b]).unwrap();
                assert_eq!(got, corner_oracle(a as f64, b as f64), "{a} {b}");
            }
        }
        assert_eq!(cube_distance(&p, &c[0], &c[3]).unwrap(), 2.0);
        let other = dyadic_partition(&g, 1).unwrap();
        assert!(cube_distance(&p, &c[0], &other.cubes()[0]).is_err());
    }

    #[test]
    fn restriction_tiles_and_is_idempotent() {
        let g = make_grid(2, 16, 4.0).unwrap();
        let f = random_fn(g, 7);
        for j in -2..=2 {
            let p = dyadic_partition(&g, j).unwrap();
            let mut sum = GridFunction::zeros(g);
            for q in p.cubes() {
                let r = restrict(&f, &p, q).unwrap();
                assert_eq!(restrict(&r, &p, q).unwrap(), r);
                for (s, v) in sum.values_mut().iter_mut().zip(r.values()) {
                    *s += v;
                }
            }
            assert_eq!(sum, f);
        }
        let g1 = make_grid(1, 64, 1.0).unwrap();
        let p1 = dyadic_partition(&g1, 1).unwrap();
        let one = GridFunction::constant(g1, Complex64::new(1.0, 0.0));
        assert_eq!(lp_norm(&restrict(&one, &p1, &p1.cubes()[1]).unwrap(), 1.0).unwrap(), 0.5);
    }

    #[test]
    fn nesting_of_scales() {
        let g = make_grid(2, 32, 4.0).unwrap();
        for j in -2..=2 {
            let coarse = dyadic_partition(&g, j).unwrap();
            let fine = dyadic_partition(&g, j + 1).unwrap();
            for (qi, q) in coarse.cubes().iter().enumerate() {
                let mut children: Vec<usize> = fine
                    .cubes()
                    .iter()
                    .filter(|c| {
                        let pts = fine.point_indices(c);
                        coarse.cube_of_point(pts[0]) == qi
                    })
                    .flat_map(|c| fine.point_indices(c))
                    .collect();
                children.sort_unstable();
                let mut own = coarse.point_indices(q);
                own.sort_unstable();
                assert_eq!(children, own);
            }
        }
    }

    #[test]
    fn holder_on_cubes() {
        let g = make_grid(1, 128, 8.0).unwrap();
        let f = random_fn(g, 3);
        for j in -3..=3 {
            let p = dyadic_partition(&g, j).unwrap();
            let vol = 2f64.powi(-j);
            for q in p.cubes() {
                let r = restrict(&f, &p, q).unwrap();
                for (a, b) in [(1.0, 2.0), (1.0, f64::INFINITY), (2.0, 4.0), (1.5, 3.0)] {
                    let lhs = lp_norm(&r, a).unwrap();
                    let rhs = vol.powf(1.0 / a - 1.0 / b) * lp_norm(&r, b).unwrap();
                    assert!(lhs <= rhs * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn serialization_layouts() {
        let g = make_grid(2, 8, 2.0).unwrap();
        let f = random_fn(g, 11);
        let mut bin = Vec::new();
        write_binary(&f, &mut bin).unwrap();
        assert_eq!(bin.len(), 4 + 4 + 4 + 8 + 16 * g.len());
        assert_eq!(read_binary(&bin[..]).unwrap(), f);
        let mut txt = Vec::new();
        write_csv(&f, &mut txt).unwrap();
        let text = String::from_utf8(txt.clone()).unwrap();
        assert!(text.starts_with("2,8,2\n"));
        let back = read_csv(&txt[..]).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(read_binary(&b"XXXX"[..]).is_err());
    }
}

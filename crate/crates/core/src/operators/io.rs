//! Binary operator layout: magic, representation tag, grid header, payload.
//! Payloads are little-endian `re, im` pairs; matrices are row-major.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{LinearGridOperator, OperatorSpace, Representation};
use crate::error::{LabError, Result};
use crate::grid::{read_f64, read_grid_header};

const MAGIC: &[u8; 4] = b"LGO1";
const TAG_SYMBOL: u8 = 0;
const TAG_KERNEL: u8 = 1;
const TAG_SPECTRAL: u8 = 2;

fn put<W: Write>(w: &mut W, v: Complex64) -> Result<()> {
    w.write_all(&v.re.to_le_bytes())?;
    w.write_all(&v.im.to_le_bytes())?;
    Ok(())
}

fn get<R: Read>(r: &mut R) -> Result<Complex64> {
    let re = read_f64(r)?;
    Ok(Complex64::new(re, read_f64(r)?))
}

fn put_matrix<W: Write>(w: &mut W, m: &DMatrix<Complex64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            put(w, m[(i, j)])?;
        }
    }
    Ok(())
}

fn get_matrix<R: Read>(r: &mut R, n: usize) -> Result<DMatrix<Complex64>> {
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        data.push(get(r)?);
    }
    Ok(DMatrix::from_row_slice(n, n, &data))
}

pub fn write_operator<W: Write>(op: &LinearGridOperator, mut w: W) -> Result<()> {
    let grid = op.space.require_grid()?;
    w.write_all(MAGIC)?;
    let tag = match op.repr {
        Representation::Symbol(_) => TAG_SYMBOL,
        Representation::Kernel(_) => TAG_KERNEL,
        Representation::Spectral { .. } => TAG_SPECTRAL,
    };
    w.write_all(&[tag, op.selfadjoint as u8])?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.points_per_axis() as u32).to_le_bytes())?;
    w.write_all(&grid.side().to_le_bytes())?;
    match &op.repr {
        Representation::Symbol(g) => g.iter().try_for_each(|v| put(&mut w, *v))?,
        Representation::Kernel(k) => put_matrix(&mut w, k)?,
        Representation::Spectral { values, vectors, .. } => {
            values.iter().try_for_each(|v| put(&mut w, *v))?;
            put_matrix(&mut w, vectors)?;
        }
    }
    Ok(())
}

pub fn read_operator<R: Read>(mut r: R) -> Result<LinearGridOperator> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LabError::InvalidData("not an operator file".into()));
    }
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let grid = read_grid_header(&mut r)?;
    let n = grid.len();
    let repr = match flags[0] {
        TAG_SYMBOL => Representation::Symbol((0..n).map(|_| get(&mut r)).collect::<Result<_>>()?),
        TAG_KERNEL => Representation::Kernel(get_matrix(&mut r, n)?),
        TAG_SPECTRAL => {
            let values = (0..n).map(|_| get(&mut r)).collect::<Result<_>>()?;
            let vectors = get_matrix(&mut r, n)?;
            let real = vectors.iter().all(|z| z.im == 0.0).then(|| Arc::new(vectors.map(|z| z.re)));
            Representation::Spectral { values, vectors: Arc::new(vectors), real }
        }
        t => return Err(LabError::InvalidData(format!("unknown representation tag {t}"))),
    };
    Ok(LinearGridOperator { space: OperatorSpace::on_grid(&grid), repr, selfadjoint: flags[1] != 0 })
}

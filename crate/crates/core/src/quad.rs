//! Quadrature rules: Gauss–Legendre, generalized Gauss–Laguerre
//! (Golub–Welsch), adaptive Gauss–Kronrod and panel-doubling composite
//! Gauss–Legendre for vector-valued integrands.

use statrs::function::gamma::ln_gamma;

use crate::error::{LabError, Result};

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes and weights for `∫_0^∞ t^α e^{-t} f(t) dt ≈ Σ w_i f(t_i)`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if alpha <= -1.0 || n == 0 {
        return Err(LabError::InvalidArgument(format!("Laguerre rule needs alpha > -1 and n > 0 (alpha={alpha}, n={n})")));
    }
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| (k as f64 * (k as f64 + alpha)).sqrt()).collect();
    let (nodes, first) = tridiagonal_eigen_first_row(diag, off)?;
    let mu0 = ln_gamma(alpha + 1.0).exp();
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(first).map(|(t, z)| (t, mu0 * z * z)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Eigenvalues of a symmetric tridiagonal matrix together with the first
/// component of each normalized eigenvector, by implicit QL with Wilkinson
/// shifts. Only one eigenvector row is carried, so the cost is `O(n²)`.
fn tridiagonal_eigen_first_row(mut d: Vec<f64>, off: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    let mut e = off;
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(LabError::NumericalFailure { what: "tridiagonal QL iteration".into(), residual: e[l].abs() });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // underflow: the matrix split, restart on the smaller block
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zi = z[i + 1];
                z[i + 1] = s * z[i] + c * zi;
                z[i] = c * z[i] - s * zi;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

// Kronrod 15-point extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
/// Returns the integral and its error estimate.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|t| t.2).sum();
        let err: f64 = intervals.iter().map(|t| t.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if intervals.len() >= max_intervals {
            return Err(LabError::NumericalFailure { what: "adaptive quadrature".into(), residual: err });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Adaptive integration over consecutive breakpoints.
pub fn integrate_with_breaks(
    mut f: impl FnMut(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = integrate_adaptive(&mut f, w[0], w[1], abs_tol / breaks.len() as f64, rel_tol, max_intervals)?;
        total += v;
        err += e;
    }
    Ok((total, err))
}

/// Composite Gauss–Legendre rule with `panels` equal panels on `[a, b]`.
pub fn composite_legendre(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * width * (xi + 1.0), 0.5 * width * wi));
        }
    }
    out
}

/// Outcome of a panel-doubling integration.
#[derive(Clone, Debug)]
pub struct PanelResult<T> {
    pub value: T,
    pub panels: usize,
    pub change: f64,
}

/// Integrates a vector-valued integrand with composite Gauss–Legendre,
/// doubling the panel count until successive results differ (relative max
/// norm) by less than `tol`, or failing past `max_panels`.
pub fn integrate_panels(
    eval: impl Fn(f64) -> Vec<num_complex::Complex64> + Sync,
    a: f64,
    b: f64,
    tol: f64,
    max_panels: usize,
) -> Result<PanelResult<Vec<num_complex::Complex64>>> {
    use rayon::prelude::*;
    const ORDER: usize = 8;
    let run = |panels: usize| -> Vec<num_complex::Complex64> {
        let rule = composite_legendre(a, b, panels, ORDER);
        let parts: Vec<Vec<num_complex::Complex64>> = rule
            .par_iter()
            .map(|&(t, w)| eval(t).into_iter().map(|v| v * w).collect())
            .collect();
        let mut acc = parts[0].clone();
        for p in &parts[1..] {
            for (s, v) in acc.iter_mut().zip(p) {
                *s += v;
            }
        }
        acc
    };
    let mut panels = 1;
    let mut prev = run(panels);
    loop {
        panels *= 2;
        let next = run(panels);
        let scale = next.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = next.iter().zip(&prev).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let change = if scale > 0.0 { diff / scale } else { diff };
        if change < tol {
            return Ok(PanelResult { value: next, panels, change });
        }
        if panels >= max_panels {
            return Err(LabError::NumericalFailure { what: "panel quadrature".into(), residual: change });
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn laguerre_moments() {
        for &alpha in &[0.0, 0.7, 5.0] {
            let (t, w) = gauss_laguerre(20, alpha).unwrap();
            // ∫ t^alpha e^{-t} t^k = Γ(alpha+k+1)
            for k in 0..10 {
                let got: f64 = t.iter().zip(&w).map(|(ti, wi)| wi * ti.powi(k)).sum();
                let exact = ln_gamma(alpha + k as f64 + 1.0).exp();
                assert!((got - exact).abs() < 1e-10 * exact, "alpha={alpha} k={k}");
            }
        }
        assert!(gauss_laguerre(4, -1.5).is_err());
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        use nalgebra::{DMatrix, SymmetricEigen};
        let n = 40;
        let d: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 3.0).collect();
        let off: Vec<f64> = (1..n).map(|i| 0.5 + (i % 3) as f64).collect();
        let mut m = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));
        for (i, b) in off.iter().enumerate() {
            m[(i, i + 1)] = *b;
            m[(i + 1, i)] = *b;
        }
        let dense = SymmetricEigen::new(m);
        let mut want: Vec<(f64, f64)> =
            (0..n).map(|i| (dense.eigenvalues[i], dense.eigenvectors[(0, i)].powi(2))).collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (vals, first) = tridiagonal_eigen_first_row(d, off).unwrap();
        let mut got: Vec<(f64, f64)> = vals.into_iter().zip(first).map(|(v, z)| (v, z * z)).collect();
        got.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (g, w) in got.iter().zip(&want) {
            assert!((g.0 - w.0).abs() < 1e-11 && (g.1 - w.1).abs() < 1e-11, "{g:?} vs {w:?}");
        }
    }

    #[test]
    fn large_laguerre_rule_is_normalized() {
        let (t, w) = gauss_laguerre(2048, -0.5).unwrap();
        let total: f64 = w.iter().sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-10);
        assert!(t.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let (v, _) = integrate_adaptive(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12, 500).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
        let (v, _) = integrate_with_breaks(|x: f64| x.abs().ln(), &[-1.0, 0.0, 2.0], 1e-12, 1e-12, 500).unwrap();
        assert!((v - (-1.0 + 2.0 * 2f64.ln() - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn panel_doubling_converges() {
        use num_complex::Complex64;
        let r = integrate_panels(|s| vec![Complex64::from_polar(1.0, -3.0 * s)], 0.0, 2.0, 1e-12, 1024).unwrap();
        let exact = (Complex64::from_polar(1.0, -6.0) - 1.0) / Complex64::new(0.0, -3.0);
        assert!((r.value[0] - exact).norm() < 1e-12);
    }
}

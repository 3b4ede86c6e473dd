//! Scalar potentials and the Kato-class integral.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{GridFunction, TorusGrid};
use crate::quad::integrate_with_breaks;

/// A real potential `V = V_+ - V_-`. Radial forms are centred at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `min(|x|^{-alpha}, cap)`; the cap defaults to `10/h` on a grid.
    InversePower {
        alpha: f64,
        #[serde(default)]
        cap: Option<f64>,
    },
    /// Attractive well `-depth · exp(-|x|²/width²)`.
    GaussianWell { depth: f64, width: f64 },
    /// Values on the grid in row-major order.
    Tabulated { values: Vec<f64> },
    Constant { value: f64 },
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec::Constant { value: 0.0 }
    }

    /// Real part of a grid function; fails when imaginary parts are present.
    pub fn tabulated(f: &GridFunction) -> Result<Self> {
        if f.values().iter().any(|v| v.im != 0.0) {
            return Err(LabError::InvalidArgument("tabulated potential must be real".into()));
        }
        Ok(PotentialSpec::Tabulated { values: f.values().iter().map(|v| v.re).collect() })
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            PotentialSpec::InversePower { alpha, cap } => {
                alpha.is_finite() && *alpha > 0.0 && cap.is_none_or(|c| c > 0.0)
            }
            PotentialSpec::GaussianWell { depth, width } => depth.is_finite() && *width > 0.0,
            PotentialSpec::Tabulated { values } => values.iter().all(|v| v.is_finite()),
            PotentialSpec::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::InvalidArgument(format!("invalid potential {self:?}")))
        }
    }

    /// Uncapped value at distance `r` from the centre (radial forms only).
    pub fn radial(&self, r: f64) -> Result<f64> {
        match self {
            PotentialSpec::InversePower { alpha, .. } => Ok(r.powf(-alpha)),
            PotentialSpec::GaussianWell { depth, width } => Ok(-depth * (-(r / width).powi(2)).exp()),
            PotentialSpec::Constant { value } => Ok(*value),
            PotentialSpec::Tabulated { .. } => {
                Err(LabError::InvalidArgument("tabulated potentials have no pointwise radial form".into()))
            }
        }
    }

    /// Samples the potential at every grid point.
    pub fn sample(&self, grid: &TorusGrid) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            PotentialSpec::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(LabError::InvalidArgument(format!(
                        "tabulated potential has {} values, grid has {}",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(values.clone())
            }
            PotentialSpec::InversePower { alpha, cap } => {
                let cap = cap.unwrap_or(10.0 / grid.spacing());
                Ok((0..grid.len())
                    .map(|i| {
                        let r = grid.distance_from_origin(i);
                        if r == 0.0 {
                            cap
                        } else {
                            r.powf(-alpha).min(cap)
                        }
                    })
                    .collect())
            }
            _ => (0..grid.len()).map(|i| self.radial(grid.distance_from_origin(i))).collect(),
        }
    }
}

/// Quadrature settings for [`kato_norm`].
#[derive(Clone, Debug)]
pub struct KatoOptions {
    /// Distances `|x|` of the sample centres (radial potentials only need the radius).
    pub centres: Vec<f64>,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for KatoOptions {
    fn default() -> Self {
        Self { centres: vec![0.0, 0.05, 0.1, 0.25, 0.5, 1.0], rel_tol: 1e-9, max_intervals: 4000 }
    }
}

/// `sup_x ∫_{|x-y|<r} G_d(x-y) |V(y)| dy` over the default centre set.
pub fn kato_norm(v: &PotentialSpec, r: f64, d: usize) -> Result<f64> {
    kato_norm_with(v, r, d, &KatoOptions::default())
}

pub fn kato_norm_with(v: &PotentialSpec, r: f64, d: usize, opts: &KatoOptions) -> Result<f64> {
    if !(r > 0.0) || !(1..=3).contains(&d) {
        return Err(LabError::InvalidArgument(format!("kato norm needs r > 0 and d in 1..=3 (r={r}, d={d})")));
    }
    v.validate()?;
    if matches!(v, PotentialSpec::Constant { value } if *value == 0.0) {
        return Ok(0.0);
    }
    let abs_v = |s: f64| v.radial(s).map(f64::abs);
    abs_v(1.0)?;
    let mut best = 0.0f64;
    for &a in &opts.centres {
        best = best.max(kato_at(&|s| abs_v(s).unwrap_or(0.0), a, r, d, opts)?);
    }
    Ok(best)
}

/// The Kato integral around a centre at distance `a` from the potential's
/// singularity, for a radial `|V| = w(|y|)`.
fn kato_at(w: &dyn Fn(f64) -> f64, a: f64, r: f64, d: usize, opts: &KatoOptions) -> Result<f64> {
    let tol = opts.rel_tol;
    let cap = opts.max_intervals;
    let radial_breaks = |lo: f64, hi: f64| {
        let mut b = vec![lo];
        if a > lo && a < hi {
            b.push(a);
        }
        b.push(hi);
        b
    };
    match d {
        1 => {
            let mut b = vec![a - r];
            if a - r < 0.0 && 0.0 < a + r {
                b.push(0.0);
            }
            b.push(a + r);
            Ok(integrate_with_breaks(|y: f64| w(y.abs()), &b, 1e-14, tol, cap)?.0)
        }
        2 => {
            // Shells around the potential's centre: ∫ s w(s) ∫_{arc in ball} log(1/|x - y|) dθ ds.
            // The log singularity sits at θ = 0 on the shell s = a and is integrable there.
            let arc = |s: f64| -> f64 {
                let c0 = if a == 0.0 { -1.0 } else { ((a * a + s * s - r * r) / (2.0 * a * s)).clamp(-1.0, 1.0) };
                let theta0 = c0.acos();
                let g = |th: f64| -0.5 * (a * a + s * s - 2.0 * a * s * th.cos()).max(1e-300).ln();
                integrate_with_breaks(g, &[0.0, theta0], 1e-14, tol, cap).map(|v| 2.0 * v.0).unwrap_or(f64::NAN)
            };
            let lo = (a - r).max(0.0);
            let (val, _) = integrate_with_breaks(|s| s * w(s) * arc(s), &radial_breaks(lo, a + r), 1e-14, tol, cap)?;
            finite(val)
        }
        _ => {
            // Shell average over the sphere reduces to (2π/(aρ)) ∫_{|a-ρ|}^{a+ρ} s w(s) ds,
            // and to 4π w(ρ) at a = 0; the Newtonian weight 1/ρ cancels one ρ.
            if a == 0.0 {
                let (val, _) = integrate_with_breaks(|rho| 4.0 * PI * rho * w(rho), &[0.0, r], 1e-14, tol, cap)?;
                return finite(val);
            }
            let shell = |rho: f64| -> f64 {
                let lo = (a - rho).abs();
                integrate_with_breaks(|s| s * w(s), &[lo, a + rho], 1e-14, tol, cap)
                    .map(|v| v.0 * 2.0 * PI / a)
                    .unwrap_or(f64::NAN)
            };
            let (val, _) = integrate_with_breaks(shell, &radial_breaks(0.0, r), 1e-14, tol, cap)?;
            finite(val)
        }
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::NumericalFailure { what: "kato shell quadrature".into(), residual: f64::INFINITY })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coulomb_in_three_dimensions() {
        let v = PotentialSpec::InversePower { alpha: 1.0, cap: None };
        for &r in &[0.1, 0.2, 0.4] {
            let k = kato_norm(&v, r, 3).unwrap();
            assert!((k / (4.0 * PI * r) - 1.0).abs() < 1e-6, "r={r}: {k}");
        }
    }

    #[test]
    fn off_centre_is_smaller_for_coulomb() {
        let v = PotentialSpec::InversePower { alpha: 1.0, cap: None };
        let opts = KatoOptions { centres: vec![0.3], ..Default::default() };
        let off = kato_norm_with(&v, 0.2, 3, &opts).unwrap();
        assert!(off > 0.0 && off < 4.0 * PI * 0.2);
    }

    #[test]
    fn zero_and_gaussian() {
        assert_eq!(kato_norm(&PotentialSpec::zero(), 0.5, 3).unwrap(), 0.0);
        let g = PotentialSpec::GaussianWell { depth: 1.0, width: 1.0 };
        let k = kato_norm(&g, 1.0, 1).unwrap();
        assert!(k > 0.0 && k <= PI.sqrt());
        let k2 = kato_norm(&PotentialSpec::InversePower { alpha: 1.0, cap: None }, 0.3, 2).unwrap();
        assert!(k2.is_finite() && k2 > 0.0);
    }

    #[test]
    fn sampling_caps_inverse_powers() {
        let g = TorusGrid::new(1, 16, 4.0).unwrap();
        let v = PotentialSpec::InversePower { alpha: 1.0, cap: None }.sample(&g).unwrap();
        assert_eq!(v[0], 40.0);
        assert_eq!(v[4], 1.0);
        assert_eq!(v[12], 1.0);
        let w = PotentialSpec::GaussianWell { depth: 2.0, width: 1.0 }.sample(&g).unwrap();
        assert_eq!(w[0], -2.0);
    }
}

//! Smooth compactly supported cutoffs built from `exp(-σ/x)` ramps.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::jet::Jet;

/// A bounded set of cutoffs: fixed support, fixed plateau and caps on the
/// first `order` derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    /// `[a, b]`: φ vanishes outside.
    pub support: [f64; 2],
    /// `[a', b']`: φ ≡ 1 inside.
    pub plateau: [f64; 2],
    #[serde(default = "default_order")]
    pub order: usize,
    /// Caps on `sup |φ^{(i)}|`, `i = 0..=order`.
    #[serde(default)]
    pub caps: Option<Vec<f64>>,
    /// Ramp steepness σ in `exp(-σ/x)`; members of one family differ here.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

fn default_order() -> usize {
    8
}

fn default_sharpness() -> f64 {
    1.0
}

impl BumpSpec {
    pub fn new(support: [f64; 2], plateau: [f64; 2]) -> Self {
        Self { support, plateau, order: default_order(), caps: None, sharpness: default_sharpness() }
    }

    /// Symmetric low-pass cutoff: φ ≡ 1 on `[-inner, inner]`, 0 outside `[-outer, outer]`.
    pub fn low_pass(inner: f64, outer: f64) -> Self {
        Self::new([-outer, outer], [-inner, inner])
    }

    pub fn with_sharpness(mut self, sharpness: f64) -> Self {
        self.sharpness = sharpness;
        self
    }
}

/// A cutoff function with its measured derivative sup-norms.
#[derive(Clone, Debug)]
pub struct Bump {
    spec: BumpSpec,
    seminorms: Vec<f64>,
}

fn ramp(u: &Jet, sigma: f64) -> Jet {
    if u.value() <= 0.0 {
        Jet::constant(0.0, u.order())
    } else {
        u.recip().scale(-sigma).exp()
    }
}

/// Smooth step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
fn smooth_step(u: &Jet, sigma: f64) -> Jet {
    let left = ramp(u, sigma);
    let one_minus = (-u).offset(1.0);
    let right = ramp(&one_minus, sigma);
    &left * &(&left + &right).recip()
}

impl Bump {
    pub fn spec(&self) -> &BumpSpec {
        &self.spec
    }

    fn jet(&self, x: f64, order: usize) -> Jet {
        let [a, b] = self.spec.support;
        let [a2, b2] = self.spec.plateau;
        if x <= a || x >= b {
            return Jet::constant(0.0, order);
        }
        let var = Jet::variable(x, order);
        let rise = smooth_step(&var.offset(-a).scale(1.0 / (a2 - a)), self.spec.sharpness);
        let fall = smooth_step(&(-&var).offset(b).scale(1.0 / (b - b2)), self.spec.sharpness);
        &rise * &fall
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [a, b] = self.spec.support;
        let [a2, b2] = self.spec.plateau;
        if x <= a || x >= b {
            0.0
        } else if x >= a2 && x <= b2 {
            1.0
        } else {
            self.jet(x, 0).value()
        }
    }

    /// `φ^{(i)}(x)` for `i = 0..=order`.
    pub fn derivatives(&self, x: f64, order: usize) -> Vec<f64> {
        self.jet(x, order).derivatives()
    }

    /// `sup |φ^{(i)}|` for `i = 0..=order`, sampled on the transition zones.
    pub fn seminorms(&self) -> &[f64] {
        &self.seminorms
    }

    pub fn within_caps(&self) -> bool {
        match &self.spec.caps {
            None => true,
            Some(caps) => self.seminorms.iter().zip(caps).all(|(s, c)| *s <= *c),
        }
    }
}

/// Builds the cutoff for `spec` and measures its seminorms.
pub fn make_bump(spec: &BumpSpec) -> Result<Bump> {
    let [a, b] = spec.support;
    let [a2, b2] = spec.plateau;
    if !(a < a2 && a2 <= b2 && b2 < b) || ![a, b, a2, b2].iter().all(|v| v.is_finite()) {
        return Err(LabError::InvalidArgument(format!(
            "bump needs a < a' <= b' < b, got support {:?} plateau {:?}",
            spec.support, spec.plateau
        )));
    }
    if !(spec.sharpness > 0.0) {
        return Err(LabError::InvalidArgument("bump sharpness must be positive".into()));
    }
    let mut bump = Bump { spec: spec.clone(), seminorms: vec![0.0; spec.order + 1] };
    const SAMPLES: usize = 2000;
    for (lo, hi) in [(a, a2), (b2, b)] {
        for s in 1..SAMPLES {
            let x = lo + (hi - lo) * s as f64 / SAMPLES as f64;
            let ds = bump.jet(x, spec.order).derivatives();
            for (m, d) in bump.seminorms.iter_mut().zip(ds) {
                *m = m.max(d.abs());
            }
        }
    }
    bump.seminorms[0] = bump.seminorms[0].max(1.0);
    Ok(bump)
}

/// Members of one bounded cutoff set: same support and plateau, ramp
/// steepness varied, caps set to the family-wide seminorm maxima.
pub fn bump_family(base: &BumpSpec, sharpness: &[f64]) -> Result<Vec<Bump>> {
    let members: Vec<Bump> = sharpness
        .iter()
        .map(|&s| make_bump(&base.clone().with_sharpness(s)))
        .collect::<Result<_>>()?;
    let mut caps = vec![0.0f64; base.order + 1];
    for m in &members {
        for (c, s) in caps.iter_mut().zip(m.seminorms()) {
            *c = c.max(*s);
        }
    }
    Ok(members
        .into_iter()
        .map(|mut m| {
            m.spec.caps = Some(caps.clone());
            m
        })
        .collect())
}

/// Default five-member family used by the uniformity scenarios.
pub const FAMILY_SHARPNESS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let b = make_bump(&BumpSpec::new([0.5, 4.0], [1.0, 2.0])).unwrap();
        assert_eq!(b.eval(1.5), 1.0);
        assert_eq!(b.eval(0.4), 0.0);
        assert_eq!(b.eval(5.0), 0.0);
        for i in 0..=400 {
            let x = 0.5 + 3.5 * i as f64 / 400.0;
            let v = b.eval(x);
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(make_bump(&BumpSpec::new([1.0, 4.0], [0.5, 2.0])).is_err());
        assert!(make_bump(&BumpSpec::new([0.0, 1.0], [0.5, 1.0])).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = make_bump(&BumpSpec::low_pass(1.0, 4.0)).unwrap();
        let h = 1e-5;
        for &x in &[1.3, 2.0, 3.1, -2.5] {
            let d = b.derivatives(x, 2);
            let fd = (b.eval(x + h) - b.eval(x - h)) / (2.0 * h);
            assert!((d[1] - fd).abs() < 1e-6, "x={x}");
        }
        assert_eq!(b.seminorms().len(), 9);
        assert!(b.within_caps());
    }

    #[test]
    fn family_shares_caps() {
        let fam = bump_family(&BumpSpec::low_pass(1.0, 4.0), &FAMILY_SHARPNESS).unwrap();
        assert_eq!(fam.len(), 5);
        assert!(fam.iter().all(Bump::within_caps));
        assert!(fam.iter().all(|b| b.eval(0.7) == 1.0 && b.eval(4.2) == 0.0));
    }
}

//! Acceptance runner: one PASS/FAIL line per criterion, each with its
//! measured values and wall time. A criterion passes only when its numbers
//! are inside tolerance and it finished inside its time budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectral_lab::commutators::{
    propagator_growth, verify_duhamel_with, verify_expansion_base_with, verify_leibniz, CriterionOptions,
    IdentityOptions,
};
use spectral_lab::estimates::{
    kato_limit_scan, run_scenario, DecayModelKind, DecaySettings, ScenarioKind, ScenarioSpec,
};
use spectral_lab::grid::{make_grid, GridFunction};
use spectral_lab::operators::{
    build_operator, heat_semigroup, kato_norm, relative_max_distance, resolvent_power, resolvent_power_quadrature,
    schrodinger_group, OperatorKind, OperatorSpec, PotentialSpec,
};
use spectral_lab::verify::due_refinement;

#[path = "support/properties.rs"]
mod properties;

type Verdict = Result<(bool, String), String>;

fn well() -> OperatorKind {
    OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth: 1.0, width: 1.0 } }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn unitarity() -> Verdict {
    let grid = make_grid(1, 256, 64.0).map_err(err)?;
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid)).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values: Vec<Complex64> = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let f = GridFunction::new(grid, values).map_err(err)?;
    let n0 = f.lp_norm(2.0).map_err(err)?;
    let mut worst: f64 = 0.0;
    for t in [0.1, 1.0, 10.0] {
        let r = schrodinger_group(&h, t).map_err(err)?.apply(&f).map_err(err)?.lp_norm(2.0).map_err(err)? / n0;
        worst = worst.max((r - 1.0).abs());
    }
    Ok((worst <= 1e-10, format!("max |ratio - 1| = {worst:.1e}")))
}

fn growth_spec(kind: ScenarioKind, op: OperatorKind, n: usize, side: f64, u: &[f64]) -> Result<ScenarioSpec, String> {
    let mut s = ScenarioSpec::new(kind, Some(OperatorSpec::new(op, make_grid(1, n, side).map_err(err)?)));
    s.k_sweep = vec![2, 3, 4, 5];
    s.u_sweep = u.to_vec();
    Ok(s)
}

fn growth_verdict(spec: &ScenarioSpec) -> Verdict {
    let r = run_scenario(spec).map_err(err)?;
    let Some(fit) = r.fit else {
        return Ok((false, format!("no fit: {:?}", r.notes)));
    };
    let u_min = r.rows.iter().map(|x| x.u).fold(f64::INFINITY, f64::min);
    let u_max = r.rows.iter().map(|x| x.u).fold(0.0, f64::max);
    let ok = (0.4..=0.6).contains(&fit.exponent) && u_max / u_min >= 8.0;
    Ok((
        ok,
        format!(
            "s-hat {:.4} ± {:.4}, {} rows ({} skipped), u span {:.1}x",
            fit.exponent,
            fit.band,
            r.rows.len(),
            r.skipped.len(),
            u_max / u_min
        ),
    ))
}

fn free_growth() -> Verdict {
    growth_verdict(&growth_spec(ScenarioKind::FreeGrowth, OperatorKind::Laplacian, 256, 64.0, &[2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0])?)
}

fn perturbed_growth() -> Verdict {
    growth_verdict(&growth_spec(ScenarioKind::MainGrowth, well(), 128, 32.0, &[1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0])?)
}

fn uniformity() -> Verdict {
    let mut s = ScenarioSpec::new(ScenarioKind::MultiplierUniformity, Some(OperatorSpec::new(well(), make_grid(1, 2048, 512.0).map_err(err)?)));
    s.k_sweep = (-4..=6).collect();
    s.family = vec![1.0, 2.0];
    s.thresholds.tail_max = 5e-2;
    let r = run_scenario(&s).map_err(err)?;
    let Some(u) = r.uniformity else {
        return Ok((false, format!("no uniformity summary: {:?}", r.notes)));
    };
    Ok((
        r.pass,
        format!(
            "max/min {:.3}, slope {:+.4}, family ratio {:.3}, {} skipped",
            u.max_over_min,
            u.slope,
            u.family_ratio.unwrap_or(f64::NAN),
            r.skipped.len()
        ),
    ))
}

fn resolvent_routes() -> Verdict {
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 128, 32.0).map_err(err)?)).map_err(err)?;
    let mut worst: f64 = 0.0;
    for beta in [1.0, 1.7, 6.0] {
        let direct = resolvent_power(&h, beta).map_err(err)?;
        let quad = resolvent_power_quadrature(&h, beta).map_err(err)?;
        worst = worst.max(relative_max_distance(&direct, &quad));
    }
    Ok((worst <= 1e-6, format!("worst relative error {worst:.1e}")))
}

fn fractional_dichotomy() -> Verdict {
    let ns = [128, 256, 512, 1024];
    let sums = |alpha: f64| -> Result<Vec<f64>, String> {
        Ok(due_refinement(&OperatorKind::Fractional { alpha }, 1, &ns, 0.25, 1.0).map_err(err)?.into_iter().map(|r| r.1).collect())
    };
    let good = sums(0.75)?;
    let bad = sums(0.25)?;
    let lo = good.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = good.iter().copied().fold(0.0, f64::max);
    let variation = hi / lo - 1.0;
    let growth = bad[bad.len() - 1] / bad[0];
    Ok((
        variation <= 0.25 && growth >= 1.5,
        format!("alpha=0.75 varies {:.1}%, alpha=0.25 grows {growth:.2}x", 100.0 * variation),
    ))
}

fn kernel_decay() -> Verdict {
    let grid = make_grid(1, 4096, 256.0).map_err(err)?;
    let cases = [
        (OperatorKind::Laplacian, DecayModelKind::Stretched, 0.05),
        (OperatorKind::Polyharmonic { k: 2 }, DecayModelKind::Stretched, 0.1),
        (OperatorKind::Polyharmonic { k: 3 }, DecayModelKind::Stretched, 0.1),
        (OperatorKind::Fractional { alpha: 0.5 }, DecayModelKind::Algebraic, 0.1),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, model, tol) in cases {
        let mut s = ScenarioSpec::new(ScenarioKind::KernelDecay, Some(OperatorSpec::new(kind, grid)));
        s.decay = Some(DecaySettings { t: 1.0, model, expected: None });
        s.thresholds.decay_tol = tol;
        let r = run_scenario(&s).map_err(err)?;
        ok &= r.pass;
        let fit = r.decay.as_ref().map_or(f64::NAN, |d| d.exponent);
        parts.push(format!("{:.4}/{:.4}", fit, r.theory.unwrap_or(f64::NAN)));
        parts.extend(r.notes.iter().filter(|n| n.contains("Poisson")).cloned());
    }
    Ok((ok, format!("fitted/claimed {}", parts.join(", "))))
}

fn kato() -> Verdict {
    let coulomb = PotentialSpec::InversePower { alpha: 1.0, cap: None };
    let mut worst: f64 = 0.0;
    for r in [0.1, 0.2, 0.4] {
        let v = kato_norm(&coulomb, r, 3).map_err(err)?;
        worst = worst.max((v / (4.0 * std::f64::consts::PI * r) - 1.0).abs());
    }
    let mut ok = worst <= 0.05;
    let mut powers = Vec::new();
    for alpha in [1.0, 1.5] {
        let scan = kato_limit_scan(&PotentialSpec::InversePower { alpha, cap: None }, 3, &[0.4, 0.2, 0.1]).map_err(err)?;
        let p = scan.fitted_power.unwrap_or(f64::NAN);
        ok &= (p - (2.0 - alpha)).abs() <= 0.05;
        powers.push(format!("{p:.4}"));
    }
    Ok((ok, format!("|K(r)/(4 pi r) - 1| <= {worst:.1e}, powers {}", powers.join(", "))))
}

fn commutator_identities() -> Verdict {
    let grid = make_grid(1, 64, 16.0).map_err(err)?;
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid)).map_err(err)?;
    let opts = IdentityOptions { centre: 8.0, ..IdentityOptions::default() };
    let e = verify_expansion_base_with(&h, 0.5, &opts).map_err(err)?;
    let r = resolvent_power(&h, 1.0).map_err(err)?;
    let d = verify_duhamel_with(&r, 2.0, &opts).map_err(err)?;
    let factors = [r.clone(), heat_semigroup(&h, 0.1).map_err(err)?, resolvent_power(&h, 2.0).map_err(err)?];
    let l2 = verify_leibniz(&factors[..2], 2, &opts).map_err(err)?;
    let l3 = verify_leibniz(&factors[..3], 2, &opts).map_err(err)?;
    let ok = e.expansion_residual <= 1e-6 && e.resolvent_residual <= 1e-6 && d.residual <= 1e-6 && l2.max(l3) <= 1e-8;
    Ok((
        ok,
        format!(
            "expansion {:.1e}, resolvent {:.1e}, Duhamel {:.1e}, Leibniz {:.1e}/{:.1e}",
            e.expansion_residual, e.resolvent_residual, d.residual, l2, l3
        ),
    ))
}

fn propagator_trend() -> Verdict {
    let h = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 128, 64.0).map_err(err)?)).map_err(err)?;
    let g = propagator_growth(&resolvent_power(&h, 1.0).map_err(err)?, &[1.0, 2.0, 4.0, 8.0, 16.0], &CriterionOptions::default())
        .map_err(err)?;
    let bound = g.claimed_exponent + 0.3;
    Ok((g.fit.exponent <= bound, format!("fitted exponent {:.3} ± {:.3}, bound {bound}", g.fit.exponent, g.fit.band)))
}

fn property_suites() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, suite) in properties::SUITES {
        match suite() {
            Ok(detail) => parts.push(format!("{name}: {detail}")),
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: FAILED {e}"));
            }
        }
    }
    Ok((ok, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Verdict); 11] = [
        ("unitarity", Duration::from_secs(1), unitarity),
        ("free growth exponent", Duration::from_secs(120), free_growth),
        ("perturbed growth exponent", Duration::from_secs(300), perturbed_growth),
        ("multiplier uniformity", Duration::from_secs(120), uniformity),
        ("resolvent route agreement", Duration::from_secs(30), resolvent_routes),
        ("fractional dichotomy", Duration::from_secs(180), fractional_dichotomy),
        ("kernel decay exponents", Duration::from_secs(60), kernel_decay),
        ("Kato scan", Duration::from_secs(30), kato),
        ("commutator identities", Duration::from_secs(120), commutator_identities),
        ("propagator growth trend", Duration::from_secs(180), propagator_trend),
        ("property suites", Duration::from_secs(120), property_suites),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        let in_time = elapsed <= *budget;
        let pass = ok && in_time;
        if !pass {
            failures += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s over the {}s budget", elapsed.as_secs_f64(), budget.as_secs())
        };
        println!("criterion {:>2} {} {name}: {detail} [{timing}]", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

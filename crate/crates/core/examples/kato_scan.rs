//! Kato integrals of inverse-power potentials over shrinking radii.

use spectral_lab::estimates::kato_limit_scan;
use spectral_lab::operators::PotentialSpec;

fn main() -> spectral_lab::Result<()> {
    let radii = [0.4, 0.2, 0.1, 0.05];
    for alpha in [0.5, 1.0, 1.5] {
        let scan = kato_limit_scan(&PotentialSpec::InversePower { alpha, cap: None }, 3, &radii)?;
        print!("alpha = {alpha}:");
        for (r, v) in &scan.rows {
            print!("  r={r}: {v:.4}");
        }
        println!("  fitted power {:.4} (expected {})", scan.fitted_power.unwrap_or(f64::NAN), 2.0 - alpha);
    }
    Ok(())
}

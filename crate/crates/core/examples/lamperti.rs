//! Cross-shell Green ratios: the Lamperti constant for srw(3).

use macrodim::capacity::{lamperti_check, LampertiOptions};
use macrodim::lattice::LatticePoint;
use macrodim::walk::{green_estimate, ExtendedGreen, GreenMethod, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let green = ExtendedGreen::new(green_estimate(&srw, 32, &[], &GreenMethod::Spectral { period: 128 })?)?;
    let check = lamperti_check(&green, &LatticePoint::origin(3)?, 8, &LampertiOptions::default())?;
    for g in &check.per_gap {
        println!("gap {:2}: max ratio {:.4} over {} pairs", g.gap, g.max, g.pairs);
    }
    println!("constant {:.4}, stable {}", check.constant, check.stable);
    Ok(())
}

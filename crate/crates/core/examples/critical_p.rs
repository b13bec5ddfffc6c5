//! The critical retention probability of a set, where Σ_k c_p(F ∩ S_k) switches
//! from converging to diverging; -log₂ p_c estimates the dimension of F.

use macrodim::capacity::{default_p_grid, p_c_estimate, CapacityOptions, ShellFamily};
use macrodim::lattice::LatticePoint;
use macrodim::walk::{green_estimate, ExtendedGreen, GreenMethod, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let green = ExtendedGreen::new(green_estimate(&srw, 32, &[], &GreenMethod::Spectral { period: 128 })?)?;
    let a = LatticePoint::origin(3)?;
    let family = ShellFamily::FullLattice { d: 3, cap: 128, seed: 2 };
    let grid = default_p_grid(3);
    let est = p_c_estimate(&family, &a, &green, 6, &grid, &CapacityOptions::default())?;
    for col in &est.columns {
        println!("p = {:.4}: {:?}", col.p, col.trend);
    }
    println!("p_c ≈ {:.4} in {:?}, dimension ≈ {:.3}", est.p_c, est.bracket, est.dimension);
    Ok(())
}

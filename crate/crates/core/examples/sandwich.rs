//! The hitting probability of Π_p ∩ F by srw(3) sits between c_p/2 and 128 c_p.

use macrodim::capacity::{cp_capacity, CapacityOptions};
use macrodim::lattice::LatticePoint;
use macrodim::walk::{green_estimate, percolated_hit_mc, ExtendedGreen, GreenMethod, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let green = ExtendedGreen::new(green_estimate(&srw, 32, &[], &GreenMethod::Spectral { period: 128 })?)?;
    let a = LatticePoint::origin(3)?;
    let f: Vec<LatticePoint> = (0..8).map(|i| LatticePoint::new(&[4, i - 4, 2])).collect::<Result<_, _>>()?;
    for p in [0.3, 0.6, 0.9] {
        let c = cp_capacity(&f, &a, p, &green, &CapacityOptions::default())?;
        let hit = percolated_hit_mc(&srw, a, &f, p, 1 << 30, 40_000, 17, Some(128))?;
        println!(
            "p = {p}: c_p/2 = {:.5}  P̂ = {:.5} ± {:.5}  128 c_p = {:.3}",
            c.value / 2.0,
            hit.probability.value,
            hit.probability.std_err,
            128.0 * c.value
        );
    }
    Ok(())
}

//! Martin p-capacity of a small set and its equilibrium measure.

use macrodim::capacity::{cp_capacity, CapacityOptions};
use macrodim::lattice::LatticePoint;
use macrodim::walk::{green_estimate, ExtendedGreen, GreenMethod, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let table = green_estimate(&srw, 32, &[], &GreenMethod::Spectral { period: 128 })?;
    let green = ExtendedGreen::new(table)?;
    let a = LatticePoint::origin(3)?;
    let f: Vec<LatticePoint> =
        [[3, 0, 0], [3, 1, 0], [-4, 2, 1], [0, 6, -5]].iter().map(|c| LatticePoint::new(c)).collect::<Result<_, _>>()?;
    for p in [0.3, 0.6, 1.0] {
        let c = cp_capacity(&f, &a, p, &green, &CapacityOptions::default())?;
        let w: Vec<String> = c.minimizer.weights().iter().map(|w| format!("{w:.3}")).collect();
        println!(
            "p = {p}: c_p = {:.5} ± {:.1e}, gap {:.1e}, certified {}, μ = [{}]",
            c.value,
            c.std_err,
            c.diagnostics.gap,
            c.diagnostics.certified,
            w.join(", ")
        );
    }
    Ok(())
}

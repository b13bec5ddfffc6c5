//! Whether srw(3) visits a set in infinitely many shells, from the trend of
//! its per-shell capacities.

use macrodim::capacity::{recurrence_test, CapacityOptions, ShellFamily};
use macrodim::lattice::LatticePoint;
use macrodim::walk::{green_estimate, ExtendedGreen, GreenMethod, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let green = ExtendedGreen::new(green_estimate(&srw, 32, &[], &GreenMethod::Spectral { period: 128 })?)?;
    let a = LatticePoint::origin(3)?;
    let families = [
        ShellFamily::AxisCubes { d: 3 },
        ShellFamily::AxisDyadic { d: 3 },
        ShellFamily::FullLattice { d: 3, cap: 128, seed: 1 },
    ];
    for family in &families {
        let v = recurrence_test(family, &a, &green, 7, &CapacityOptions::default())?;
        let sums: Vec<String> = v.partial_sums.iter().map(|s| format!("{s:.3}")).collect();
        println!("{family:?}\n  {:?}; partial sums {}", v.trend, sums.join(" "));
        for c in &v.caveats {
            println!("  note: {c}");
        }
    }
    Ok(())
}

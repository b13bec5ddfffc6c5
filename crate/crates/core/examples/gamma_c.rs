//! The convergence exponent γ_c of srw(3) from its potential, which predicts
//! the upper Minkowski dimension of the range.

use macrodim::capacity::gamma_c_estimate;
use macrodim::walk::{green_estimate, ExtendedGreen, GreenMethod, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let table = green_estimate(&srw, 32, &[], &GreenMethod::Spectral { period: 128 })?;
    let green = ExtendedGreen::new(table)?;
    println!("far field: g ≈ {:.4} ‖x‖^-{:.4}", green.amplitude, green.exponent);
    let g = gamma_c_estimate(&green, 6)?;
    println!("γ_c: series {:.4}, potential {:.4} (raw {:.4})", g.series, g.potential, g.potential_raw);
    for (n, u) in g.box_potential.iter().enumerate() {
        println!("  U(V_{n}) = {:.2}", u.value);
    }
    Ok(())
}

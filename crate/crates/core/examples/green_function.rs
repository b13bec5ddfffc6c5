//! The Green function of srw(3) by three methods.

use macrodim::lattice::LatticePoint;
use macrodim::walk::{green_estimate, GreenFunction, GreenMethod, StepDistribution, WATSON_SRW3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let methods = [
        GreenMethod::Spectral { period: 64 },
        GreenMethod::Convolution { box_radius: 24, tolerance: 1e-10, max_iterations: 10_000 },
        GreenMethod::MonteCarlo { walks: 20_000, horizon: 1 << 20, kill_radius: Some(24), seed: 9 },
    ];
    println!("Watson's integral g(0,0) = {WATSON_SRW3:.6}");
    for method in &methods {
        let table = green_estimate(&srw, 4, &[], method)?;
        let row: Vec<String> = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 2, 2]]
            .iter()
            .map(|c| {
                let (g, e) = table.g0(&LatticePoint::new(c).unwrap()).unwrap();
                format!("{g:.4}±{e:.4}")
            })
            .collect();
        println!("{:<60} {}", format!("{method:?}"), row.join("  "));
    }
    Ok(())
}

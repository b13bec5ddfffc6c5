//! Empirical P(x ∈ Π_p) against p^{k+1} for a few points.

use macrodim::lattice::{delta, LatticePoint};
use macrodim::percolation::PercolationField;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = 0.5;
    let trials = 200_000u64;
    let points = [[0, 0], [1, -2], [3, 1], [-5, 2], [9, -12]];
    println!("{:>10} {:>3} {:>10} {:>10}", "x", "Δ", "empirical", "p^Δ");
    for c in points {
        let x = LatticePoint::new(&c)?;
        let mut hits = 0u64;
        for t in 0..trials {
            // One threshold per seed decides membership for every p at once.
            hits += u64::from(PercolationField::for_trial(7, t, 2)?.survival_threshold(&x)? < p);
        }
        let empirical = hits as f64 / trials as f64;
        println!("{:>10} {:>3} {empirical:>10.5} {:>10.5}", x.to_string(), delta(&x), p.powi(delta(&x) as i32));
    }
    Ok(())
}

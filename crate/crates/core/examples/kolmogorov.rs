//! Survival of the critical Galton–Watson process behind Π_p: k P(Z_k > 0) → 2/σ².

use macrodim::percolation::{galton_watson_survival, galton_watson_survival_exact};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for d in [2usize, 3] {
        let p = (-(d as f64)).exp2();
        let generations = 80;
        let mc = galton_watson_survival(d, p, generations, 200_000, 3)?;
        let exact = galton_watson_survival_exact(d, p, generations);
        let limit = 2.0 / (1.0 - p);
        println!("d = {d}, p = 2^-{d}, 2/σ² = {limit:.4}");
        for k in [10, 20, 40, 80] {
            println!("  k = {k:2}: k P̂ = {:.4}   k P = {:.4}", k as f64 * mc[k], k as f64 * exact[k]);
        }
    }
    Ok(())
}

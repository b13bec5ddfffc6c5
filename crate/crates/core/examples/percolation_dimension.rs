//! Macroscopic Hausdorff dimension of Π_p in d = 2 against (2 + log₂ p)⁺.

use macrodim::dimension::{dim_hausdorff, CubeTree, DEFAULT_ALPHA_TOL};
use macrodim::percolation::PercolationField;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let big_k = 11;
    for p in [0.25, 0.5, 0.8] {
        let mut estimates = Vec::new();
        for seed in 0..5 {
            let field = PercolationField::for_trial(11, seed, 2)?;
            let trees = (0..=big_k)
                .map(|k| CubeTree::from_percolation(&field, p, k, 1 << 24))
                .collect::<Result<Vec<_>, _>>()?;
            estimates.push(dim_hausdorff(&trees, DEFAULT_ALPHA_TOL)?.estimate);
        }
        let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
        println!("p = {p:4}: mean estimate {mean:.3}, predicted {:.3}", (2.0 + p.log2()).max(0.0));
    }
    Ok(())
}

//! Exact N_α(A, S_k) by the cube-tree dynamic program, checked against exhaustive search.

use macrodim::dimension::{n_alpha, ShellCells};
use macrodim::lattice::{shell_points, LatticePoint};
use macrodim::oracle::brute_force_cover;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = 3;
    // Every third cell of S_3 in d = 2.
    let cells: Vec<LatticePoint> = shell_points(2, k).step_by(3).collect();
    let shell = ShellCells::new(k, 2, cells.clone())?;
    for alpha in [0.25, 1.0, 1.5, 2.0] {
        let dp = n_alpha(&shell, alpha)?;
        let brute = brute_force_cover(&cells, k, alpha, k).expect("small instance");
        println!(
            "α = {alpha:4}: N_α = {:.6} with {} cubes, levels {:?}; exhaustive {:.6}",
            dp.value,
            dp.cover.len(),
            dp.histogram(),
            brute.value
        );
    }
    Ok(())
}

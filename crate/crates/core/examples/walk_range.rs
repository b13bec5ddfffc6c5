//! Minkowski and Hausdorff dimensions of the range of the simple random walk on Z^3.

use macrodim::dimension::{dim_hausdorff, minkowski_dims, CubeTree, ShellCells, DEFAULT_ALPHA_TOL};
use macrodim::lattice::LatticePoint;
use macrodim::walk::{sample_path, StepDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let srw = StepDistribution::srw(3)?;
    let path = sample_path(&srw, LatticePoint::origin(3)?, 1_000_000, 5);
    // The outermost shell is only partly explored; stop one short of it.
    let big_k = path.shells.keys().next_back().copied().unwrap_or(0).saturating_sub(1);
    let m = minkowski_dims(&path.box_counts(big_k))?;
    let trees = (0..=big_k)
        .map(|k| {
            let cells = path.shells.get(&k).cloned().unwrap_or_default();
            ShellCells::new(k, 3, cells).map(|s| CubeTree::from_cells(&s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let h = dim_hausdorff(&trees, DEFAULT_ALPHA_TOL)?;
    println!("range: {} points, shells 0..={big_k}", path.range.len());
    println!("upper Minkowski {:.3}, lower Minkowski {:.3}", m.upper, m.lower);
    println!("Hausdorff {:.3} (bracket {:?})", h.estimate, h.bracket);
    Ok(())
}

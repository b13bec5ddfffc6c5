use macrodim::dimension::{
    cover_cost, dim_hausdorff, dim_hausdorff_lower, minkowski_dims, n_alpha, read_shell_csv, CubeTree,
    DimensionError, ShellCells, ALPHA_FLOOR,
};
use macrodim::lattice::{box_cardinality, shell_points, LatticePoint};
use macrodim::oracle::brute_force_cover;
use proptest::prelude::*;

fn full_trees(d: usize, k_max: u32) -> Vec<CubeTree> {
    (0..=k_max).map(|k| CubeTree::from_cells(&ShellCells::full(d, k).unwrap())).collect()
}

#[test]
fn full_lattice_has_full_dimension() {
    let trees = full_trees(2, 9);
    let h = dim_hausdorff(&trees, 0.02).unwrap();
    assert!((h.estimate - 2.0).abs() <= 0.1, "{}", h.estimate);
    let l = dim_hausdorff_lower(&trees, 0.02).unwrap();
    assert!(l.estimate <= h.estimate + 0.04);
    let counts: Vec<u64> = (0..=10).map(|n| box_cardinality(2, n) as u64).collect();
    let m = minkowski_dims(&counts).unwrap();
    assert!((m.upper - 2.0).abs() < 0.45 && (m.secant_upper.unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn one_point_per_shell_is_zero_dimensional() {
    let trees: Vec<CubeTree> = (0..=12u32)
        .map(|k| {
            let x = shell_points(2, k).next().unwrap();
            CubeTree::from_cells(&ShellCells::new(k, 2, vec![x]).unwrap())
        })
        .collect();
    let h = dim_hausdorff(&trees, 0.02).unwrap();
    assert!(h.estimate <= ALPHA_FLOOR + 0.04, "{}", h.estimate);
    let counts: Vec<u64> = (0..=12).map(|n| n + 1).collect();
    assert!(minkowski_dims(&counts).unwrap().upper < 0.6);
}

#[test]
fn errors_are_signalled() {
    assert!(matches!(dim_hausdorff(&[], 0.02), Err(DimensionError::NoShells)));
    assert!(matches!(minkowski_dims(&[0, 0, 0]), Err(DimensionError::AllZero)));
    assert!(minkowski_dims(&[3, 2]).is_err());
    let x = LatticePoint::new(&[0, 0]).unwrap();
    assert!(ShellCells::new(2, 2, vec![x]).is_err());
    assert!(n_alpha(&ShellCells::full(2, 1).unwrap(), -1.0).is_err());
}

#[test]
fn shell_csv_round_trip() {
    let src = "shell,x0,x1\n1,-2,0\n1,1,1\n0,0,0\n";
    let shells = read_shell_csv(src.as_bytes(), 2).unwrap();
    let total: usize = shells.iter().map(|s| s.len()).sum();
    assert_eq!(total, 3);
}

#[test]
fn whole_shell_cover_costs_one_root() {
    // For small α the four level-3 cubes of V_3 are the cheapest cover.
    let c = n_alpha(&ShellCells::full(2, 3).unwrap(), 0.05).unwrap();
    assert_eq!(c.histogram(), vec![0, 0, 0, 4]);
    assert_eq!(c.value, cover_cost(&c.histogram(), 3, 0.05));
}

fn subset(k: u32) -> impl Strategy<Value = Vec<LatticePoint>> {
    let all: Vec<LatticePoint> = shell_points(2, k).collect();
    let n = all.len().min(40);
    prop::sample::subsequence(all, 1..=n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamic_program_matches_exhaustive_search(
        (k, cells) in (0u32..=3).prop_flat_map(|k| (Just(k), subset(k))),
        alpha in 0.05f64..2.0,
    ) {
        let dp = n_alpha(&ShellCells::new(k, 2, cells.clone()).unwrap(), alpha).unwrap();
        let brute = brute_force_cover(&cells, k, alpha, k).unwrap();
        prop_assert_eq!(dp.histogram(), brute.histogram.clone());
        prop_assert_eq!(dp.value, cover_cost(&brute.histogram, k, alpha));
        // Every cell is covered exactly once.
        for x in &cells {
            prop_assert_eq!(dp.cover.iter().filter(|q| q.contains(x)).count(), 1);
        }
    }

    #[test]
    fn n_alpha_decreases_in_alpha(cells in subset(3), a in 0.05f64..1.9) {
        let s = ShellCells::new(3, 2, cells).unwrap();
        prop_assert!(n_alpha(&s, a + 0.1).unwrap().value <= n_alpha(&s, a).unwrap().value + 1e-12);
    }
}

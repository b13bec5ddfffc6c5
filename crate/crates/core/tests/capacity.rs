use macrodim::capacity::{
    classify_series, cp_capacity, energy, gamma_c_estimate, recurrence_test, symmetrized_kernel, CapacityOptions,
    KernelMode, ShellFamily, SimplexMeasure, Trend,
};
use macrodim::lattice::{delta, LatticePoint};
use macrodim::oracle::simplex_grid_min;
use macrodim::walk::{green_estimate, ExtendedGreen, GreenFunction, GreenMethod, StepDistribution};
use proptest::prelude::*;
use std::sync::OnceLock;

fn green() -> &'static ExtendedGreen {
    static G: OnceLock<ExtendedGreen> = OnceLock::new();
    G.get_or_init(|| {
        let t = green_estimate(&StepDistribution::srw(3).unwrap(), 32, &[], &GreenMethod::Spectral { period: 128 })
            .unwrap();
        ExtendedGreen::new(t).unwrap()
    })
}

fn pt(c: &[i64]) -> LatticePoint {
    LatticePoint::new(c).unwrap()
}

fn origin() -> LatticePoint {
    pt(&[0, 0, 0])
}

#[test]
fn singleton_identity() {
    let g = green();
    for c in [[0, 0, 0], [1, 0, 0], [3, -2, 1], [-7, 5, 6]] {
        let x = pt(&c);
        for p in [0.25, 0.7, 1.0] {
            let cap = cp_capacity(&[x], &origin(), p, g, &CapacityOptions::default()).unwrap();
            let want = p.powi(delta(&x) as i32) * g.g(&origin(), &x).unwrap().0 / g.g(&x, &x).unwrap().0;
            assert!((cap.value - want).abs() <= 1e-12 * want, "{x} p={p}: {} vs {want}", cap.value);
        }
    }
}

#[test]
fn capacity_grows_with_p_and_the_set() {
    let g = green();
    let f = vec![pt(&[3, 0, 0]), pt(&[3, 1, 0]), pt(&[-2, 4, 1])];
    let opts = CapacityOptions::default();
    let c = |set: &[LatticePoint], p| cp_capacity(set, &origin(), p, g, &opts).unwrap().value;
    assert!(c(&f, 0.4) < c(&f, 0.8));
    assert!(c(&f[..2], 0.6) <= c(&f, 0.6) * (1.0 + 1e-9));
}

#[test]
fn solver_matches_grid_search() {
    let g = green();
    let f = vec![pt(&[2, 0, 0]), pt(&[0, -3, 1]), pt(&[-1, 1, 4])];
    let res = cp_capacity(&f, &origin(), 0.6, g, &CapacityOptions::default()).unwrap();
    assert!(res.diagnostics.certified);
    let (pts, q) = symmetrized_kernel(&f, &origin(), 0.6, g, KernelMode::Martin).unwrap();
    let (grid, _) = simplex_grid_min(&q, pts.len(), 200, 3);
    assert!((res.energy - grid).abs() <= 1e-4 * grid);
    let e = energy(&res.minimizer, &origin(), 0.6, g, KernelMode::Martin).unwrap();
    assert!((e - res.energy).abs() <= 1e-9 * e);
    let uniform = SimplexMeasure::uniform(f.clone()).unwrap();
    assert!(energy(&uniform, &origin(), 0.6, g, KernelMode::Martin).unwrap() >= res.energy - 1e-12);
}

#[test]
fn rejects_bad_input() {
    let g = green();
    assert!(cp_capacity(&[], &origin(), 0.5, g, &CapacityOptions::default()).is_err());
    assert!(cp_capacity(&[pt(&[1, 1, 1])], &origin(), 0.0, g, &CapacityOptions::default()).is_err());
    assert!(SimplexMeasure::new(vec![pt(&[1, 1, 1])], vec![0.5]).is_err());
}

#[test]
fn series_classifier() {
    let geometric: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
    assert_eq!(classify_series(&geometric).0, Trend::Converging);
    assert_eq!(classify_series(&[1.0; 10]).0, Trend::Diverging);
}

#[test]
fn recurrence_of_sparse_and_dense_sets() {
    let g = green();
    let opts = CapacityOptions::default();
    let cubes = recurrence_test(&ShellFamily::AxisCubes { d: 3 }, &origin(), g, 6, &opts).unwrap();
    assert_eq!(cubes.trend, Trend::Converging);
    let full = recurrence_test(&ShellFamily::FullLattice { d: 3, cap: 64, seed: 1 }, &origin(), g, 6, &opts).unwrap();
    assert_eq!(full.trend, Trend::Diverging);
    assert!(full.partial_sums.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn gamma_c_of_srw3_is_two() {
    let est = gamma_c_estimate(green(), 5).unwrap();
    assert!((est.series - 2.0).abs() < 0.2 && (est.potential - 2.0).abs() < 0.2, "{est:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn capacity_is_bounded_by_singletons(
        cs in prop::collection::btree_set(prop::collection::vec(-6i64..6, 3), 1..5),
        p in 0.2f64..1.0,
    ) {
        let g = green();
        let f: Vec<LatticePoint> = cs.iter().map(|c| pt(c)).collect();
        let opts = CapacityOptions::default();
        let total = cp_capacity(&f, &origin(), p, g, &opts).unwrap().value;
        let best = f.iter().map(|x| cp_capacity(&[*x], &origin(), p, g, &opts).unwrap().value).fold(0.0, f64::max);
        let sum: f64 = f.iter().map(|x| cp_capacity(&[*x], &origin(), p, g, &opts).unwrap().value).sum();
        prop_assert!(total >= best * (1.0 - 1e-6));
        prop_assert!(total <= sum * (1.0 + 1e-6));
    }
}

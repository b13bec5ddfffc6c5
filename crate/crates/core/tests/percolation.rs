use macrodim::lattice::{order_cmp, shell_points, LatticePoint};
use macrodim::percolation::{galton_watson_survival, galton_watson_survival_exact, PercolationError, PercolationField};
use proptest::prelude::*;

#[test]
fn fields_are_deterministic() {
    let a = PercolationField::new(5, 2).unwrap();
    let b = PercolationField::new(5, 2).unwrap();
    for k in 0..6 {
        assert_eq!(a.survivor_cells(0.6, k, 1 << 16).unwrap(), b.survivor_cells(0.6, k, 1 << 16).unwrap());
    }
}

#[test]
fn survivors_agree_with_membership() {
    let f = PercolationField::for_trial(3, 1, 2).unwrap();
    let p = 0.7;
    for k in 0..5 {
        let listed = f.survivor_cells(p, k, 1 << 16).unwrap();
        let mut scanned: Vec<LatticePoint> = shell_points(2, k).filter(|x| f.contains(p, x).unwrap()).collect();
        scanned.sort_by(order_cmp);
        assert_eq!(listed, scanned);
        assert_eq!(f.shell_nonempty(p, k).unwrap(), !listed.is_empty());
    }
}

#[test]
fn full_retention_keeps_everything() {
    let f = PercolationField::new(1, 3).unwrap();
    assert_eq!(f.survivor_cells(1.0, 2, 1 << 12).unwrap().len(), 448);
}

#[test]
fn bad_inputs_are_rejected() {
    let f = PercolationField::new(1, 2).unwrap();
    assert!(f.survivor_cells(0.0, 2, 10).is_err());
    assert!(f.survivor_cells(1.5, 2, 10).is_err());
    assert!(matches!(f.survivor_cells(1.0, 5, 10), Err(PercolationError::Truncated(10))));
    assert!(PercolationField::new(1, 3).unwrap().raster2d(0.5, 3).is_err());
}

#[test]
fn raster_has_expected_size() {
    let f = PercolationField::new(2, 2).unwrap();
    let pgm = f.raster2d(0.8, 4).unwrap();
    let header = b"P5\n32 32\n255\n";
    assert!(pgm.starts_with(header));
    assert_eq!(pgm.len(), header.len() + 32 * 32);
}

#[test]
fn branching_survival_matches_recursion() {
    let exact = galton_watson_survival_exact(2, 0.25, 30);
    let mc = galton_watson_survival(2, 0.25, 30, 100_000, 11).unwrap();
    for k in [1, 5, 10, 30] {
        let sd = (exact[k] * (1.0 - exact[k]) / 1e5).sqrt();
        assert!((mc[k] - exact[k]).abs() < 4.0 * sd, "k = {k}: {} vs {}", mc[k], exact[k]);
    }
}

proptest! {
    #[test]
    fn membership_is_monotone_in_p(seed in any::<u64>(), c in prop::collection::vec(-200i64..200, 2..=3), p in 0.01f64..1.0, q in 0.01f64..1.0) {
        let x = LatticePoint::new(&c).unwrap();
        let f = PercolationField::new(seed, c.len()).unwrap();
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        prop_assert!(!f.contains(lo, &x).unwrap() || f.contains(hi, &x).unwrap());
        prop_assert_eq!(f.contains(p, &x).unwrap(), f.survival_threshold(&x).unwrap() < p);
    }
}

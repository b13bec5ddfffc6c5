use macrodim::lattice::LatticePoint;
use macrodim::walk::{
    green_estimate, hit_prob_mc, sample_path, ExtendedGreen, GreenFunction, GreenMethod, GreenTable, Preset, Region,
    StepDistribution, WalkError, WATSON_SRW3,
};

fn pt(c: &[i64]) -> LatticePoint {
    LatticePoint::new(c).unwrap()
}

fn spectral() -> GreenTable {
    green_estimate(&StepDistribution::srw(3).unwrap(), 16, &[], &GreenMethod::Spectral { period: 64 }).unwrap()
}

#[test]
fn spectral_green_matches_watson() {
    let t = spectral();
    let (g0, _) = t.g0(&pt(&[0, 0, 0])).unwrap();
    assert!((g0 - WATSON_SRW3).abs() < 1e-3, "{g0}");
    // Harmonic away from the origin and g(0) = 1 + g(e_1).
    let (g1, _) = t.g0(&pt(&[1, 0, 0])).unwrap();
    assert!((g0 - 1.0 - g1).abs() < 1e-9);
    let (g3, _) = t.g0(&pt(&[3, 0, 0])).unwrap();
    let neighbours: f64 =
        [[4, 0, 0], [2, 0, 0], [3, 1, 0], [3, -1, 0], [3, 0, 1], [3, 0, -1]].iter().map(|c| t.g0(&pt(c)).unwrap().0).sum();
    assert!((g3 - neighbours / 6.0).abs() < 1e-9);
}

#[test]
fn far_field_decays_like_inverse_distance() {
    let e = ExtendedGreen::new(spectral()).unwrap();
    assert!((e.exponent - 1.0).abs() < 0.05, "{}", e.exponent);
    // 3 / (2π) is the continuum amplitude for srw(3).
    assert!((e.amplitude - 3.0 / (2.0 * std::f64::consts::PI)).abs() < 0.02);
    let (far, _) = e.g0(&pt(&[200, 0, 0])).unwrap();
    assert!((far * 200.0 - e.amplitude).abs() < 0.01);
}

#[test]
fn killed_green_by_two_methods() {
    let s = StepDistribution::srw(3).unwrap();
    let conv = GreenMethod::Convolution { box_radius: 12, tolerance: 1e-12, max_iterations: 10_000 };
    let mc = GreenMethod::MonteCarlo { walks: 40_000, horizon: 1 << 20, kill_radius: Some(12), seed: 3 };
    let a = green_estimate(&s, 3, &[], &conv).unwrap();
    let b = green_estimate(&s, 3, &[], &mc).unwrap();
    for (x, g, e) in a.entries() {
        let (h, f) = b.g0(&x).unwrap();
        assert!((g - h).abs() <= 4.0 * e.hypot(f), "{x}: {g} vs {h} ± {f}");
    }
}

#[test]
fn potential_of_boxes_grows_fourfold() {
    let t = spectral();
    let u2 = t.potential(&Region::Box(2)).unwrap().value;
    let u3 = t.potential(&Region::Box(3)).unwrap().value;
    assert!((u3 / u2 - 4.0).abs() < 0.1);
    assert!(matches!(t.potential(&Region::Box(6)), Err(WalkError::MissingGreen(_))));
}

#[test]
fn hitting_a_point_is_a_green_ratio() {
    let s = StepDistribution::srw(3).unwrap();
    let t = spectral();
    let x = pt(&[2, 1, 0]);
    let est = hit_prob_mc(&s, pt(&[0, 0, 0]), &[x], 1 << 30, 40_000, 21, Some(256)).unwrap();
    let target = t.g0(&x).unwrap().0 / t.g0(&pt(&[0, 0, 0])).unwrap().0;
    // Escaping the box biases the estimate down by at most a few per cent.
    assert!(est.probability.value <= target + 4.0 * est.probability.std_err);
    assert!(est.probability.value >= 0.97 * target - 4.0 * est.probability.std_err);
}

#[test]
fn paths_are_reproducible() {
    let s = StepDistribution::srw(3).unwrap();
    let a = sample_path(&s, pt(&[0, 0, 0]), 1000, 4);
    let b = sample_path(&s, pt(&[0, 0, 0]), 1000, 4);
    assert_eq!(a.path, b.path);
    assert_eq!(a.path.len(), 1001);
    assert!(a.path.windows(2).all(|w| (w[1] - w[0]).coords().iter().map(|c| c.abs()).sum::<i64>() == 1));
    let zero = sample_path(&s, pt(&[3, 3, 3]), 0, 4);
    assert_eq!(zero.range, vec![pt(&[3, 3, 3])]);
    assert!(StepDistribution::srw(2).is_err());
    let counts = a.box_counts(6);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*counts.last().unwrap() as usize, a.range.iter().filter(|x| x.shell() <= 6).count());
}

#[test]
fn presets_validate() {
    assert!(StepDistribution::srw(3).unwrap().is_symmetric());
    let h = StepDistribution::from_preset(&Preset::HeavyTail { d: 1, alpha: 0.5, radius: 16 }).unwrap();
    assert_eq!(h.max_step(), 16);
    let total: f64 = h.support().iter().map(|(_, w)| w).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(StepDistribution::from_preset(&Preset::HeavyTail { d: 1, alpha: 2.5, radius: 16 }).is_err());
}

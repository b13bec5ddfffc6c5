use std::collections::{BTreeMap, HashSet};
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{Targets, TARGETS_MAX};
use super::{run_walk, walk_rng, BoundingBox, StepDistribution, WalkEnd, WalkError};
use crate::hashing::derive_seed;
use crate::lattice::{order_cmp, shell_of, LatticePoint};
use crate::percolation::{PercolationError, PercolationField};
use crate::stats::Estimate;

/// A finite walk path with its range.
#[derive(Clone, Debug)]
pub struct WalkPath {
    pub path: Vec<LatticePoint>,
    /// Distinct visited points, in forest order.
    pub range: Vec<LatticePoint>,
    /// The range split by shell.
    pub shells: BTreeMap<u32, Vec<LatticePoint>>,
}

impl WalkPath {
    /// `card(range ∩ V_n)` for `n = 0..=n_max`.
    pub fn box_counts(&self, n_max: u32) -> Vec<u64> {
        let mut counts = vec![0u64; n_max as usize + 1];
        for (&k, cells) in &self.shells {
            for slot in counts.iter_mut().skip(k as usize) {
                *slot += cells.len() as u64;
            }
        }
        counts
    }
}

/// Simulates `n_steps` increments from `a`. The stream is keyed by `seed` alone.
pub fn sample_path(dist: &StepDistribution, a: LatticePoint, n_steps: u64, seed: u64) -> WalkPath {
    let mut rng = walk_rng(seed, 0);
    let mut path = Vec::with_capacity(n_steps as usize + 1);
    let mut x = a;
    path.push(x);
    for _ in 0..n_steps {
        x = x + dist.sample(&mut rng);
        path.push(x);
    }
    let mut range = path.clone();
    range.sort_unstable_by(order_cmp);
    range.dedup();
    let mut shells: BTreeMap<u32, Vec<LatticePoint>> = BTreeMap::new();
    for x in &range {
        shells.entry(shell_of(x)).or_default().push(*x);
    }
    WalkPath { path, range, shells }
}

/// Monte Carlo hitting probability with its bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitEstimate {
    pub probability: Estimate,
    pub walks: u64,
    /// Walks that reached the horizon without hitting or escaping.
    pub truncated: u64,
    /// Walks stopped at the escape radius without hitting.
    pub escaped: u64,
}

/// Fraction of walks from `a` that visit `targets` within `horizon` steps.
/// Walks leaving `[-escape, escape]^d` are counted as misses.
pub fn hit_prob_mc(
    dist: &StepDistribution,
    a: LatticePoint,
    targets: &[LatticePoint],
    horizon: u64,
    n_walks: u64,
    seed: u64,
    escape: Option<i64>,
) -> Result<HitEstimate, WalkError> {
    let watch = BoundingBox::of_points(targets)
        .ok_or_else(|| WalkError::BadParameter("empty target set".into()))?;
    let small = targets.len() <= TARGETS_MAX;
    let set: HashSet<LatticePoint> = targets.iter().copied().collect();
    let chunk = 1024u64;
    let tallies: Vec<[u64; 3]> = (0..n_walks.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut t = [0u64; 3];
            for w in (c * chunk)..((c + 1) * chunk).min(n_walks) {
                let mut rng = walk_rng(seed, w);
                let end = if small {
                    run_walk(dist, &mut rng, a, horizon, escape, &Targets(targets), |_, _| ControlFlow::Break(()))
                } else {
                    run_walk(dist, &mut rng, a, horizon, escape, &watch, |x, _| {
                        if set.contains(x) {
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    })
                };
                tally(&mut t, end);
            }
            t
        })
        .collect();
    let mut t = [0u64; 3];
    for x in tallies {
        for i in 0..3 {
            t[i] += x[i];
        }
    }
    Ok(HitEstimate {
        probability: Estimate::proportion(t[0], n_walks),
        walks: n_walks,
        truncated: t[1],
        escaped: t[2],
    })
}

/// Fraction of joint trials in which the walk from `a` visits `Π_p ∩ F`.
/// Trial `t` pairs the percolation field [`PercolationField::for_trial`]
/// with the `t`-th walk stream; both derive from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn percolated_hit_mc(
    dist: &StepDistribution,
    a: LatticePoint,
    f: &[LatticePoint],
    p: f64,
    horizon: u64,
    trials: u64,
    seed: u64,
    escape: Option<i64>,
) -> Result<HitEstimate, WalkError> {
    if f.is_empty() || f.len() > TARGETS_MAX {
        return Err(WalkError::BadParameter(format!("target set of {} points; 1..={TARGETS_MAX} supported", f.len())));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(PercolationError::BadProbability(p).into());
    }
    let field_seed = derive_seed(seed, 0x9e5c);
    let walk_seed = derive_seed(seed, 0x3a1b);
    let d = dist.dim();
    let chunk = 1024u64;
    let tallies: Vec<[u64; 3]> = (0..trials.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut t = [0u64; 3];
            let mut kept = Vec::with_capacity(f.len());
            for i in (c * chunk)..((c + 1) * chunk).min(trials) {
                let field = PercolationField::for_trial(field_seed, i, d)?;
                kept.clear();
                for x in f {
                    if field.contains(p, x)? {
                        kept.push(*x);
                    }
                }
                if kept.is_empty() {
                    continue;
                }
                let mut rng = walk_rng(walk_seed, i);
                let end = run_walk(dist, &mut rng, a, horizon, escape, &Targets(&kept), |_, _| ControlFlow::Break(()));
                tally(&mut t, end);
            }
            Ok(t)
        })
        .collect::<Result<_, WalkError>>()?;
    let mut t = [0u64; 3];
    for x in tallies {
        for i in 0..3 {
            t[i] += x[i];
        }
    }
    Ok(HitEstimate { probability: Estimate::proportion(t[0], trials), walks: trials, truncated: t[1], escaped: t[2] })
}

fn tally(t: &mut [u64; 3], end: WalkEnd) {
    match end {
        WalkEnd::Stopped => t[0] += 1,
        WalkEnd::Horizon => t[1] += 1,
        WalkEnd::Killed => t[2] += 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn trivial_paths() {
        let s = StepDistribution::srw(3).unwrap();
        let w = sample_path(&s, p(&[1, 2, 3]), 0, 9);
        assert_eq!(w.range, vec![p(&[1, 2, 3])]);
        let a = sample_path(&s, p(&[0, 0, 0]), 500, 4);
        let b = sample_path(&s, p(&[0, 0, 0]), 500, 4);
        assert_eq!(a.path, b.path);
        assert_eq!(a.path.len(), 501);
        let counts = a.box_counts(10);
        assert_eq!(counts[10] as usize, a.range.len());
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mean_square_displacement() {
        let s = StepDistribution::srw(3).unwrap();
        let n = 300;
        let mean: f64 = (0..n)
            .map(|i| {
                let w = sample_path(&s, p(&[0, 0, 0]), 10_000, i);
                let x = w.path.last().unwrap().norm2();
                x * x
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 10_000.0).abs() < 1500.0, "{mean}");
    }

    #[test]
    fn full_retention_is_plain_hitting() {
        let s = StepDistribution::srw(3).unwrap();
        let f = [p(&[2, 0, 0]), p(&[0, -3, 1])];
        let a = percolated_hit_mc(&s, p(&[0, 0, 0]), &f, 1.0, 1 << 30, 4000, 8, Some(64)).unwrap();
        let b = hit_prob_mc(&s, p(&[0, 0, 0]), &f, 1 << 30, 4000, 9, Some(64)).unwrap();
        let se = (a.probability.std_err.powi(2) + b.probability.std_err.powi(2)).sqrt();
        assert!((a.probability.value - b.probability.value).abs() < 4.0 * se);
        let none = percolated_hit_mc(&s, p(&[0, 0, 0]), &[p(&[3, 3, 3])], 0.01, 100, 1000, 8, None).unwrap();
        assert!(none.probability.value < 0.01);
    }

    #[test]
    fn start_in_target_hits() {
        let s = StepDistribution::srw(3).unwrap();
        let h = hit_prob_mc(&s, p(&[0, 0, 0]), &[p(&[0, 0, 0])], 10, 100, 1, None).unwrap();
        assert_eq!(h.probability.value, 1.0);
    }
}

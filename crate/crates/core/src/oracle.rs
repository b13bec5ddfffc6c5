//! Exhaustive reference computations used to cross-check the fast solvers.

use std::collections::HashMap;

use crate::lattice::{shell_of, DyadicCube, LatticePoint};

/// Largest cell count accepted by [`brute_force_cover`].
pub const MAX_BRUTE_CELLS: usize = 64;

/// An optimal cover found by [`brute_force_cover`].
#[derive(Clone, Debug, PartialEq)]
pub struct BruteCover {
    pub value: f64,
    /// Number of cover cubes per level `0..=max_level`.
    pub histogram: Vec<u64>,
}

/// Minimum of `Σ 2^{α(ℓ_i - k - 1)}` over all covers of `cells ⊂ S_k` by
/// dyadic cubes of levels `0..=max_level`, by exhaustive recursion on the
/// set of uncovered cells: the first uncovered cell in row-major order must
/// lie in one of the cubes of the cover. `None` for more than
/// [`MAX_BRUTE_CELLS`] cells or cells outside `S_k`.
pub fn brute_force_cover(cells: &[LatticePoint], k: u32, alpha: f64, max_level: u32) -> Option<BruteCover> {
    if cells.len() > MAX_BRUTE_CELLS || cells.iter().any(|x| shell_of(x) != k) {
        return None;
    }
    let mut sorted = cells.to_vec();
    sorted.sort_by(|a, b| a.coords().cmp(b.coords()));
    sorted.dedup();
    let mut histogram = vec![0u64; max_level as usize + 1];
    if sorted.is_empty() {
        return Some(BruteCover { value: 0.0, histogram });
    }
    let n = sorted.len();
    // For each cell, the masks of the cubes containing it, one per level.
    let cubes: Vec<Vec<(u64, f64)>> = sorted
        .iter()
        .map(|x| {
            (0..=max_level)
                .map(|level| {
                    let q = DyadicCube::containing(x, level);
                    let mask = sorted
                        .iter()
                        .enumerate()
                        .filter(|(_, y)| q.contains(y))
                        .fold(0u64, |m, (j, _)| m | 1 << j);
                    (mask, ((level as f64 - k as f64 - 1.0) * alpha).exp2())
                })
                .collect()
        })
        .collect();
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut memo = HashMap::new();
    let value = min_cover(full, &cubes, &mut memo);
    let mut left = full;
    while left != 0 {
        let level = memo[&left].1;
        histogram[level] += 1;
        left &= !cubes[left.trailing_zeros() as usize][level].0;
    }
    Some(BruteCover { value, histogram })
}

fn min_cover(left: u64, cubes: &[Vec<(u64, f64)>], memo: &mut HashMap<u64, (f64, usize)>) -> f64 {
    if left == 0 {
        return 0.0;
    }
    if let Some(&(v, _)) = memo.get(&left) {
        return v;
    }
    let first = left.trailing_zeros() as usize;
    let mut best = (f64::INFINITY, 0);
    for (level, &(mask, cost)) in cubes[first].iter().enumerate() {
        let v = cost + min_cover(left & !mask, cubes, memo);
        if v < best.0 {
            best = (v, level);
        }
    }
    memo.insert(left, best);
    best.0
}

/// Least value of `μᵀQμ` over the simplex grid `{μ : μ_i ∈ ℕ/resolution}`,
/// followed by `zoom_rounds` finer grids of ten times the resolution
/// centred on the incumbent. `q` is row-major `n × n`.
pub fn simplex_grid_min(q: &[f64], n: usize, resolution: usize, zoom_rounds: usize) -> (f64, Vec<f64>) {
    assert!(n >= 1 && q.len() == n * n && resolution >= 1);
    let eval = |mu: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += mu[i] * q[i * n + j] * mu[j];
            }
        }
        s
    };
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut counts = vec![0usize; n];
    compositions(&mut counts, 0, resolution, &mut |c| {
        let mu: Vec<f64> = c.iter().map(|&v| v as f64 / resolution as f64).collect();
        let f = eval(&mu);
        if f < best.0 {
            best = (f, mu);
        }
    });
    let mut h = 1.0 / resolution as f64;
    for _ in 0..zoom_rounds {
        let fine = h / 10.0;
        let centre = best.1.clone();
        // Offsets of the first n-1 weights in [-2h, 2h]; the last one closes the sum.
        let steps = 41usize;
        let mut idx = vec![0usize; n.saturating_sub(1)];
        loop {
            let mut mu = centre.clone();
            let mut ok = true;
            let mut shift = 0.0;
            for (i, &s) in idx.iter().enumerate() {
                let delta = (s as f64 - 20.0) * fine;
                mu[i] += delta;
                shift += delta;
                ok &= mu[i] >= 0.0;
            }
            mu[n - 1] -= shift;
            if ok && mu[n - 1] >= 0.0 {
                let f = eval(&mu);
                if f < best.0 {
                    best = (f, mu);
                }
            }
            let mut i = 0;
            while i < idx.len() {
                idx[i] += 1;
                if idx[i] < steps {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == idx.len() {
                break;
            }
        }
        h = fine;
    }
    best
}

fn compositions(counts: &mut [usize], i: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
    if i + 1 == counts.len() {
        counts[i] = left;
        visit(counts);
        return;
    }
    for v in 0..=left {
        counts[i] = v;
        compositions(counts, i + 1, left - v, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn single_cell() {
        let v = brute_force_cover(&[p(&[2, -3])], 2, 1.5, 4).unwrap();
        assert!((v.value - (-1.5f64 * 3.0).exp2()).abs() < 1e-15);
        assert_eq!(v.histogram, vec![1, 0, 0, 0, 0]);
        assert!(brute_force_cover(&[p(&[0, 0])], 2, 1.0, 2).is_none());
    }

    #[test]
    fn two_neighbours_prefer_one_cube_at_small_alpha() {
        let cells = [p(&[2, 2]), p(&[3, 3])];
        let v = brute_force_cover(&cells, 2, 0.5, 2).unwrap();
        // Both cells sit in the level-1 cube at (2, 2).
        assert!((v.value - (-0.5f64 * 2.0).exp2()).abs() < 1e-15);
        assert_eq!(v.histogram, vec![0, 1, 0]);
    }

    #[test]
    fn grid_finds_interior_minimum() {
        // Diagonal Q: the minimizer is proportional to 1/q_ii.
        let q = [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 4.0];
        let (f, _) = simplex_grid_min(&q, 3, 50, 3);
        let exact = 1.0 / (1.0 + 0.5 + 0.25);
        assert!((f - exact).abs() < 1e-9, "{f} vs {exact}");
    }
}

use std::ops::ControlFlow;

use rand::Rng;

use super::StepDistribution;
use crate::lattice::{LatticePoint, MAX_DIM};

/// Walks farther than this from the watched region are advanced by exact jumps.
const JUMP_MIN: i64 = 8;

/// Axis-aligned integer box `[lo, hi]` (inclusive).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    d: usize,
    lo: [i64; MAX_DIM],
    hi: [i64; MAX_DIM],
}

impl BoundingBox {
    pub fn of_points(points: &[LatticePoint]) -> Option<Self> {
        let first = points.first()?;
        let d = first.dim();
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        lo[..d].copy_from_slice(first.coords());
        hi[..d].copy_from_slice(first.coords());
        for x in points {
            for (i, &c) in x.coords().iter().enumerate() {
                lo[i] = lo[i].min(c);
                hi[i] = hi[i].max(c);
            }
        }
        Some(Self { d, lo, hi })
    }

    /// `[-r, r]^d`.
    pub fn centered(d: usize, r: i64) -> Self {
        Self { d, lo: [-r; MAX_DIM], hi: [r; MAX_DIM] }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..self.d {
            out.lo[i] = out.lo[i].min(other.lo[i]);
            out.hi[i] = out.hi[i].max(other.hi[i]);
        }
        out
    }

    /// `ℓ∞` distance from `x` to the box; zero inside.
    #[inline]
    pub fn distance(&self, x: &LatticePoint) -> i64 {
        let c = x.coords();
        let mut m = 0;
        for i in 0..self.d {
            m = m.max(self.lo[i] - c[i]).max(c[i] - self.hi[i]);
        }
        m
    }
}

/// A region the engine must not jump across.
pub(crate) trait Watch {
    /// `ℓ∞` distance from `x` to the region; zero inside.
    fn distance(&self, x: &LatticePoint) -> i64;
}

impl Watch for BoundingBox {
    #[inline]
    fn distance(&self, x: &LatticePoint) -> i64 {
        BoundingBox::distance(self, x)
    }
}

/// A small explicit set; the walk sits in it only at its points.
pub(crate) struct Targets<'a>(pub &'a [LatticePoint]);

impl Watch for Targets<'_> {
    #[inline]
    fn distance(&self, x: &LatticePoint) -> i64 {
        self.0.iter().map(|y| (*x - *y).norm_inf()).min().unwrap_or(i64::MAX)
    }
}

/// Largest set watched point by point; bigger sets use their bounding box.
pub(crate) const TARGETS_MAX: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum WalkEnd {
    Killed,
    Horizon,
    Stopped,
}

/// Runs one walk from `start` for at most `horizon` steps, calling `visit`
/// at every time the walk sits in `watch`. With `kill = Some(L)` the walk
/// dies on leaving `[-L, L]^d`. Stretches spent far from `watch` are
/// crossed by exact multi-step jumps when the law supports them.
pub(crate) fn run_walk<R, W, F>(
    dist: &StepDistribution,
    rng: &mut R,
    start: LatticePoint,
    horizon: u64,
    kill: Option<i64>,
    watch: &W,
    mut visit: F,
) -> WalkEnd
where
    R: Rng + ?Sized,
    W: Watch + ?Sized,
    F: FnMut(&LatticePoint, u64) -> ControlFlow<()>,
{
    let jumps = dist.can_jump();
    let mut x = start;
    let mut t = 0u64;
    loop {
        let r = x.norm_inf();
        if kill.is_some_and(|l| r > l) {
            return WalkEnd::Killed;
        }
        let gap = watch.distance(&x);
        if gap == 0 && visit(&x, t).is_break() {
            return WalkEnd::Stopped;
        }
        if t >= horizon {
            return WalkEnd::Horizon;
        }
        let mut m = gap - 1;
        if let Some(l) = kill {
            m = m.min(l + 1 - r);
        }
        let m = (m.max(1) as u64).min(horizon - t);
        if jumps && m as i64 >= JUMP_MIN {
            x = x + dist.jump(rng, m).expect("jumpable law");
            t += m;
        } else {
            x = x + dist.sample(rng);
            t += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::walk_rng;

    #[test]
    fn box_distance() {
        let b = BoundingBox::centered(3, 2);
        assert_eq!(b.distance(&LatticePoint::new(&[0, 1, -2]).unwrap()), 0);
        assert_eq!(b.distance(&LatticePoint::new(&[0, 7, -3]).unwrap()), 5);
    }

    #[test]
    fn killed_walk_stays_inside_while_alive() {
        let s = StepDistribution::srw(3).unwrap();
        let watch = BoundingBox::centered(3, 2);
        for w in 0..200 {
            let mut rng = walk_rng(5, w);
            let end = run_walk(&s, &mut rng, LatticePoint::origin(3).unwrap(), 1 << 40, Some(30), &watch, |x, _| {
                assert!(x.norm_inf() <= 2);
                ControlFlow::Continue(())
            });
            assert_eq!(end, WalkEnd::Killed);
        }
    }
}

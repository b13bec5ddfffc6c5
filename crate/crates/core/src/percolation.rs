//! Macroscopic fractal percolation `Π_p`.
//!
//! Each shell `S_k` runs its own `k + 1`-step selection: the `2^d` level-`k`
//! cubes tiling `V_k` are kept independently with probability `p`, kept cubes
//! split into `2^d` children that are again kept with probability `p`, down
//! to unit cells. The keep decisions come from uniforms `U(Q)` hashed from
//! `(seed, k, level, corner)`, so `Q` is kept in `Π_p` iff `U(Q) < p` and all
//! values of `p` share one coupling.

use std::io::{self, Write};
use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{derive_seed, hash_words, unit_f64};
use crate::lattice::{
    child_corner, cube_meets_shell, cube_within_box, root_corner, shell_of, DyadicCube, LatticeError, LatticePoint, MAX_DIM,
};

/// Largest shell index accepted by [`PercolationField::raster2d`].
pub const MAX_RASTER_SHELL: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("retention probability {0} is outside (0, 1]")]
    BadProbability(f64),
    #[error("cube {cube:?} does not lie inside V_{shell}")]
    CubeOutsideShell { cube: DyadicCube, shell: u32 },
    #[error("field has dimension {field}, got an object of dimension {got}")]
    DimensionMismatch { field: usize, got: usize },
    #[error("survivor count exceeded the budget of {0} cells")]
    Truncated(usize),
    #[error("rasters are two-dimensional; field has dimension {0}")]
    RasterDimension(usize),
    #[error("raster shell {0} exceeds the limit {MAX_RASTER_SHELL}")]
    RasterTooLarge(u32),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub(crate) fn check_p(p: f64) -> Result<(), PercolationError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(PercolationError::BadProbability(p))
    }
}

/// Seed-keyed source of the coupled uniforms `U(Q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PercolationField {
    pub seed: u64,
    dim: usize,
}

impl PercolationField {
    pub fn new(seed: u64, dim: usize) -> Result<Self, PercolationError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LatticeError::BadDimension(dim).into());
        }
        Ok(Self { seed, dim })
    }

    /// Field of the `trial`-th independent replicate under a master seed.
    pub fn for_trial(master: u64, trial: u64, dim: usize) -> Result<Self, PercolationError> {
        Self::new(derive_seed(master, trial), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub(crate) fn weight_raw(&self, k: u32, level: u32, corner: &[i64; MAX_DIM]) -> f64 {
        let tag = k as u64 | (level as u64) << 8 | (self.dim as u64) << 16;
        let h = match self.dim {
            1 => hash_words(self.seed, &[tag, corner[0] as u64]),
            2 => hash_words(self.seed, &[tag, corner[0] as u64, corner[1] as u64]),
            3 => hash_words(self.seed, &[tag, corner[0] as u64, corner[1] as u64, corner[2] as u64]),
            _ => hash_words(
                self.seed,
                &[tag, corner[0] as u64, corner[1] as u64, corner[2] as u64, corner[3] as u64],
            ),
        };
        unit_f64(h)
    }

    fn check_dim(&self, d: usize) -> Result<(), PercolationError> {
        if d == self.dim {
            Ok(())
        } else {
            Err(PercolationError::DimensionMismatch { field: self.dim, got: d })
        }
    }

    /// The uniform `U(Q)` driving cube `Q` in the construction of shell `k`.
    pub fn u_weight(&self, k: u32, q: &DyadicCube) -> Result<f64, PercolationError> {
        self.check_dim(q.dim())?;
        if !cube_within_box(q.level, q.corner.coords(), k) {
            return Err(PercolationError::CubeOutsideShell { cube: *q, shell: k });
        }
        Ok(self.weight_raw(k, q.level, q.corner.raw()))
    }

    /// `max_Q U(Q)` over the cube chain of `x`: `x ∈ Π_p` iff this is `< p`.
    pub fn survival_threshold(&self, x: &LatticePoint) -> Result<f64, PercolationError> {
        self.check_dim(x.dim())?;
        let k = shell_of(x);
        let mut m = 0.0f64;
        for level in (0..=k).rev() {
            m = m.max(self.weight_raw(k, level, x.shr(level).raw()));
        }
        Ok(m)
    }

    pub fn contains(&self, p: f64, x: &LatticePoint) -> Result<bool, PercolationError> {
        check_p(p)?;
        self.check_dim(x.dim())?;
        let k = shell_of(x);
        for level in (0..=k).rev() {
            if self.weight_raw(k, level, x.shr(level).raw()) >= p {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Depth-first walk of the kept cubes of shell `k`, calling `leaf` on
    /// every surviving unit cell of `S_k` in forest order.
    pub(crate) fn visit_survivors<F>(&self, p: f64, k: u32, leaf: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&LatticePoint) -> ControlFlow<()>,
    {
        for bits in 0..(1usize << self.dim) {
            let corner = root_corner(self.dim, bits);
            self.descend(p, k, k, corner, leaf)?;
        }
        ControlFlow::Continue(())
    }

    fn descend<F>(&self, p: f64, k: u32, level: u32, corner: [i64; MAX_DIM], leaf: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&LatticePoint) -> ControlFlow<()>,
    {
        if self.weight_raw(k, level, &corner) >= p {
            return ControlFlow::Continue(());
        }
        if level == 0 {
            return leaf(&LatticePoint::from_array(corner, self.dim));
        }
        for bits in 0..(1usize << self.dim) {
            let child = child_corner(self.dim, &corner, bits);
            if cube_meets_shell(level - 1, &child[..self.dim], k) {
                self.descend(p, k, level - 1, child, leaf)?;
            }
        }
        ControlFlow::Continue(())
    }

    /// The unit cells of `Π_p ∩ S_k`, in forest order.
    pub fn survivor_cells(
        &self,
        p: f64,
        k: u32,
        max_cells: usize,
    ) -> Result<Vec<LatticePoint>, PercolationError> {
        check_p(p)?;
        let mut out = Vec::new();
        let flow = self.visit_survivors(p, k, &mut |x| {
            if out.len() == max_cells {
                return ControlFlow::Break(());
            }
            out.push(*x);
            ControlFlow::Continue(())
        });
        match flow {
            ControlFlow::Continue(()) => Ok(out),
            ControlFlow::Break(()) => Err(PercolationError::Truncated(max_cells)),
        }
    }

    /// Whether `Π_p ∩ S_k` is nonempty; stops at the first survivor.
    pub fn shell_nonempty(&self, p: f64, k: u32) -> Result<bool, PercolationError> {
        check_p(p)?;
        Ok(self.visit_survivors(p, k, &mut |_| ControlFlow::Break(())).is_break())
    }

    /// Binary PGM of `Π_p ∩ V_K` for `d = 2`: side `2^{K+1}`, cluster cells 0,
    /// the outer ring of every `V_k` in gray 128, the rest 255. Pixel column
    /// `i` is `x_1 = i - 2^K`; row `r` is `x_2 = 2^K - 1 - r`.
    pub fn raster2d(&self, p: f64, big_k: u32) -> Result<Vec<u8>, PercolationError> {
        check_p(p)?;
        if self.dim != 2 {
            return Err(PercolationError::RasterDimension(self.dim));
        }
        if big_k > MAX_RASTER_SHELL {
            return Err(PercolationError::RasterTooLarge(big_k));
        }
        let half = 1i64 << big_k;
        let side = (2 * half) as usize;
        let header = format!("P5\n{side} {side}\n255\n");
        let mut img = vec![255u8; side * side];
        let pixel = |x1: i64, x2: i64| ((half - 1 - x2) as usize) * side + (x1 + half) as usize;
        for k in 0..=big_k {
            let r = 1i64 << k;
            for t in -r..r {
                for (x1, x2) in [(t, -r), (t, r - 1), (-r, t), (r - 1, t)] {
                    img[pixel(x1, x2)] = 128;
                }
            }
        }
        for k in 0..=big_k {
            let _ = self.visit_survivors(p, k, &mut |x| {
                let c = x.coords();
                img[pixel(c[0], c[1])] = 0;
                ControlFlow::Continue(())
            });
        }
        let mut out = header.into_bytes();
        out.extend_from_slice(&img);
        Ok(out)
    }
}

/// Writes survivor sets as CSV rows `k,x1,...,xd` under a header line.
pub fn write_survivor_csv<W: Write>(
    mut w: W,
    d: usize,
    shells: &[(u32, Vec<LatticePoint>)],
) -> io::Result<()> {
    let mut header = String::from("k");
    for i in 1..=d {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(w, "{header}")?;
    for (k, cells) in shells {
        for x in cells {
            write!(w, "{k}")?;
            for c in x.coords() {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Monte Carlo survival curve of the Galton–Watson process with offspring
/// law `Binomial(2^d, p)` and `Z_0 = 1`: entry `k` is the fraction of
/// `trees` runs with `Z_k > 0`, for `k = 0..=generations`.
pub fn galton_watson_survival(
    d: usize,
    p: f64,
    generations: usize,
    trees: u64,
    seed: u64,
) -> Result<Vec<f64>, PercolationError> {
    check_p(p)?;
    if d == 0 || d > MAX_DIM {
        return Err(LatticeError::BadDimension(d).into());
    }
    let fanout = 1u64 << d;
    let chunk = 4096u64;
    let n_chunks = trees.div_ceil(chunk);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut alive = vec![0u64; generations + 1];
            for t in (c * chunk)..((c + 1) * chunk).min(trees) {
                let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(seed, t));
                let mut z = 1u64;
                for slot in alive.iter_mut() {
                    if z == 0 {
                        break;
                    }
                    *slot += 1;
                    z = if p == 1.0 {
                        z.saturating_mul(fanout)
                    } else {
                        Binomial::new(z.saturating_mul(fanout), p).expect("valid binomial").sample(&mut rng)
                    };
                }
            }
            alive
        })
        .reduce(
            || vec![0u64; generations + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(counts.into_iter().map(|c| c as f64 / trees as f64).collect())
}

/// Exact `P{Z_k > 0}` for the same process, from the iteration
/// `q_{k+1} = (1 - p + p q_k)^{2^d}` of extinction probabilities.
pub fn galton_watson_survival_exact(d: usize, p: f64, generations: usize) -> Vec<f64> {
    let fanout = (1u32 << d) as i32;
    let mut q = 0.0f64;
    let mut out = Vec::with_capacity(generations + 1);
    for _ in 0..=generations {
        out.push(1.0 - q);
        q = (1.0 - p + p * q).powi(fanout);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{box_points, shell_points, tree_dist};

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn weights_are_deterministic() {
        let f = PercolationField::new(11, 2).unwrap();
        let q = DyadicCube { level: 1, corner: p(&[0, -1]) };
        assert_eq!(f.u_weight(3, &q).unwrap(), f.u_weight(3, &q).unwrap());
        assert_ne!(f.u_weight(3, &q).unwrap(), f.u_weight(4, &q).unwrap());
        let outside = DyadicCube { level: 1, corner: p(&[4, 0]) };
        assert!(matches!(f.u_weight(3, &outside), Err(PercolationError::CubeOutsideShell { .. })));
    }

    #[test]
    fn weight_mean_and_seed_decorrelation() {
        let f = PercolationField::new(1, 3).unwrap();
        let g = PercolationField::new(2, 3).unwrap();
        let cubes: Vec<_> = box_points(3, 5).take(100_000).map(|x| DyadicCube { level: 0, corner: x }).collect();
        let a: Vec<f64> = cubes.iter().map(|q| f.u_weight(8, q).unwrap()).collect();
        let b: Vec<f64> = cubes.iter().map(|q| g.u_weight(8, q).unwrap()).collect();
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
        let n = 10_000;
        let (ma, mb) = (a[..n].iter().sum::<f64>() / n as f64, b[..n].iter().sum::<f64>() / n as f64);
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for i in 0..n {
            sab += (a[i] - ma) * (b[i] - mb);
            saa += (a[i] - ma).powi(2);
            sbb += (b[i] - mb).powi(2);
        }
        assert!((sab / (saa * sbb).sqrt()).abs() < 0.03);
    }

    #[test]
    fn contains_edge_cases() {
        let f = PercolationField::new(5, 2).unwrap();
        assert!(f.contains(1.0, &p(&[100, -3])).unwrap());
        assert!(f.contains(0.0, &p(&[0, 0])).is_err());
        assert!(f.contains(1.5, &p(&[0, 0])).is_err());
        assert!(f.contains(0.5, &p(&[0, 0, 0])).is_err());
    }

    #[test]
    fn threshold_couples_all_p() {
        for seed in 0..200 {
            let f = PercolationField::new(seed, 2).unwrap();
            let x = p(&[3, -5]);
            let t = f.survival_threshold(&x).unwrap();
            for i in 1..=10 {
                let q = i as f64 / 10.0;
                assert_eq!(f.contains(q, &x).unwrap(), t < q);
            }
        }
    }

    #[test]
    fn one_point_law_small_sample() {
        let x = p(&[2, 3]);
        let n = 40_000;
        let hits = (0..n)
            .filter(|&s| PercolationField::for_trial(9, s, 2).unwrap().contains(0.5, &x).unwrap())
            .count();
        let freq = hits as f64 / n as f64;
        let sd = (0.125f64 * 0.875 / n as f64).sqrt();
        assert!((freq - 0.125).abs() < 4.0 * sd, "{freq}");
    }

    #[test]
    fn two_point_law_small_sample() {
        let (x, y) = (p(&[2, 2]), p(&[3, 3]));
        assert_eq!(tree_dist(&x, &y).unwrap(), 2);
        let n = 40_000;
        let hits = (0..n)
            .filter(|&s| {
                let f = PercolationField::for_trial(3, s, 2).unwrap();
                f.contains(0.5, &x).unwrap() && f.contains(0.5, &y).unwrap()
            })
            .count();
        let target = 0.5f64.powi(4);
        let freq = hits as f64 / n as f64;
        let sd = (target * (1.0 - target) / n as f64).sqrt();
        assert!((freq - target).abs() < 4.0 * sd, "{freq}");
    }

    #[test]
    fn survivors_match_contains() {
        for seed in 0..10 {
            let f = PercolationField::new(seed, 2).unwrap();
            for k in 0..5 {
                let cells = f.survivor_cells(0.7, k, usize::MAX).unwrap();
                let brute: Vec<_> = shell_points(2, k).filter(|x| f.contains(0.7, x).unwrap()).collect();
                let mut sorted = brute.clone();
                sorted.sort_by(crate::lattice::order_cmp);
                assert_eq!(cells, sorted);
                assert_eq!(f.shell_nonempty(0.7, k).unwrap(), !cells.is_empty());
            }
        }
    }

    #[test]
    fn survivors_truncate() {
        let f = PercolationField::new(0, 2).unwrap();
        assert_eq!(f.survivor_cells(1.0, 6, 100), Err(PercolationError::Truncated(100)));
        assert_eq!(f.survivor_cells(1.0, 3, usize::MAX).unwrap().len(), 192);
    }

    #[test]
    fn raster_layout() {
        let f = PercolationField::new(4, 2).unwrap();
        let img = f.raster2d(1.0, 3).unwrap();
        let header = b"P5\n16 16\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert!(img[header.len()..].iter().all(|&b| b == 0));
        assert_eq!(f.raster2d(0.8, 5).unwrap(), f.raster2d(0.8, 5).unwrap());
        assert!(f.raster2d(0.5, 13).is_err());
        assert!(PercolationField::new(4, 3).unwrap().raster2d(0.5, 2).is_err());

        let img = f.raster2d(0.6, 2).unwrap();
        let body = &img[b"P5\n8 8\n255\n".len()..];
        for x in box_points(2, 2) {
            let c = x.coords();
            let px = body[((3 - c[1]) * 8 + c[0] + 4) as usize];
            if f.contains(0.6, &x).unwrap() {
                assert_eq!(px, 0);
            } else {
                assert_ne!(px, 0);
            }
        }
    }

    #[test]
    fn csv_format() {
        let mut buf = Vec::new();
        write_survivor_csv(&mut buf, 2, &[(1, vec![p(&[1, -2])])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,x1,x2\n1,1,-2\n");
    }

    #[test]
    fn galton_watson_matches_exact() {
        let mc = galton_watson_survival(2, 0.25, 20, 100_000, 1).unwrap();
        let ex = galton_watson_survival_exact(2, 0.25, 20);
        assert_eq!(mc[0], 1.0);
        for k in [1, 5, 20] {
            let sd = (ex[k] * (1.0 - ex[k]) / 100_000.0).sqrt();
            assert!((mc[k] - ex[k]).abs() < 4.0 * sd, "k={k}: {} vs {}", mc[k], ex[k]);
        }
        assert_eq!(mc, galton_watson_survival(2, 0.25, 20, 100_000, 1).unwrap());
    }

    #[test]
    fn subcritical_survival_bounded_by_mean() {
        let ex = galton_watson_survival_exact(2, 0.2, 30);
        for (k, s) in ex.iter().enumerate() {
            assert!(*s <= 0.8f64.powi(k as i32) + 1e-15);
        }
    }
}

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::WalkError;
use crate::lattice::{cube_range, LatticePoint, MAX_DIM};

/// Named increment laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preset {
    /// Simple symmetric random walk, `±e_i` with probability `1/(2d)` each.
    Srw { d: usize },
    /// Weights `∝ ‖x‖₂^{-d-α}` on `0 < ‖x‖_∞ ≤ radius`.
    HeavyTail { d: usize, alpha: f64, radius: i64 },
    /// A user-supplied finite law.
    Custom { d: usize },
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Srw { d } => write!(f, "srw({d})"),
            Preset::HeavyTail { d, alpha, radius } => write!(f, "heavy_tail({d}, {alpha}, R={radius})"),
            Preset::Custom { d } => write!(f, "custom({d})"),
        }
    }
}

/// A finitely supported increment law on `Z^d`.
#[derive(Clone)]
pub struct StepDistribution {
    d: usize,
    preset: Preset,
    support: Vec<(LatticePoint, f64)>,
    alias: WeightedAliasIndex<f64>,
    covariance: Vec<f64>,
    symmetric: bool,
    max_step: i64,
}

impl fmt::Debug for StepDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepDistribution")
            .field("preset", &self.preset)
            .field("support_size", &self.support.len())
            .finish()
    }
}

impl StepDistribution {
    pub fn from_preset(preset: &Preset) -> Result<Self, WalkError> {
        match *preset {
            Preset::Srw { d } => Self::srw(d),
            Preset::HeavyTail { d, alpha, radius } => Self::heavy_tail(d, alpha, radius),
            Preset::Custom { .. } => Err(WalkError::BadParameter(
                "custom laws are built with StepDistribution::from_support".into(),
            )),
        }
    }

    pub fn srw(d: usize) -> Result<Self, WalkError> {
        if d > MAX_DIM {
            return Err(WalkError::BadParameter(format!("dimension {d} exceeds {MAX_DIM}")));
        }
        if d <= 2 {
            return Err(WalkError::RecurrentPreset(d));
        }
        let w = 1.0 / (2 * d) as f64;
        let mut support = Vec::with_capacity(2 * d);
        for i in 0..d {
            for s in [1i64, -1] {
                let mut c = vec![0; d];
                c[i] = s;
                support.push((LatticePoint::new(&c)?, w));
            }
        }
        Self::build(d, Preset::Srw { d }, support)
    }

    pub fn heavy_tail(d: usize, alpha: f64, radius: i64) -> Result<Self, WalkError> {
        if d == 0 || d > MAX_DIM {
            return Err(WalkError::BadParameter(format!("dimension {d} is unsupported")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(WalkError::BadParameter(format!("alpha {alpha} is outside (0, 2)")));
        }
        if radius < 1 || (2 * radius + 1).pow(d as u32) > 50_000_000 {
            return Err(WalkError::BadParameter(format!("cutoff radius {radius} is unsupported")));
        }
        let mut support = Vec::new();
        let mut total = 0.0;
        for x in cube_range(d, -radius, radius + 1) {
            if x.norm_inf() == 0 {
                continue;
            }
            let w = x.norm2().powf(-(d as f64) - alpha);
            total += w;
            support.push((x, w));
        }
        for (_, w) in support.iter_mut() {
            *w /= total;
        }
        Self::build(d, Preset::HeavyTail { d, alpha, radius }, support)
    }

    /// A custom law; probabilities must sum to one within `1e-12`.
    pub fn from_support(d: usize, support: Vec<(LatticePoint, f64)>) -> Result<Self, WalkError> {
        Self::build(d, Preset::Custom { d }, support)
    }

    fn build(d: usize, preset: Preset, support: Vec<(LatticePoint, f64)>) -> Result<Self, WalkError> {
        if support.is_empty() {
            return Err(WalkError::BadParameter("empty step support".into()));
        }
        let mut seen = HashSet::with_capacity(support.len());
        for (x, w) in &support {
            if x.dim() != d {
                return Err(WalkError::BadParameter(format!("step {x} is not {d}-dimensional")));
            }
            if !(*w > 0.0) {
                return Err(WalkError::BadParameter(format!("step {x} has probability {w}")));
            }
            if !seen.insert(*x) {
                return Err(WalkError::BadParameter(format!("duplicate step {x}")));
            }
        }
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(WalkError::BadParameter(format!("step probabilities sum to {total}")));
        }
        let symmetric = {
            let probs: std::collections::HashMap<_, _> = support.iter().map(|(x, w)| (*x, *w)).collect();
            support
                .iter()
                .all(|(x, w)| probs.get(&-*x).is_some_and(|v| (v - w).abs() <= 1e-12 * w))
        };
        let mut covariance = vec![0.0; d * d];
        for (x, w) in &support {
            let c = x.coords();
            for i in 0..d {
                for j in 0..d {
                    covariance[i * d + j] += w * (c[i] * c[j]) as f64;
                }
            }
        }
        let alias = WeightedAliasIndex::new(support.iter().map(|(_, w)| *w).collect())
            .map_err(|e| WalkError::BadParameter(format!("alias table: {e}")))?;
        let max_step = support.iter().map(|(x, _)| x.norm_inf()).max().unwrap_or(0);
        Ok(Self { d, preset, support, alias, covariance, symmetric, max_step })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn preset(&self) -> &Preset {
        &self.preset
    }

    pub fn support(&self) -> &[(LatticePoint, f64)] {
        &self.support
    }

    /// Row-major `d × d` covariance matrix `E[S Sᵀ]`.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Largest `‖s‖_∞` over the support.
    pub fn max_step(&self) -> i64 {
        self.max_step
    }

    /// Whether [`Self::jump`] is available.
    pub fn can_jump(&self) -> bool {
        matches!(self.preset, Preset::Srw { .. })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatticePoint {
        if let Preset::Srw { d } = self.preset {
            let i = rng.random_range(0..2 * d);
            return self.support[i].0;
        }
        self.support[self.alias.sample(rng)].0
    }

    /// Exact sample of the sum of `m` increments, for the simple random walk.
    pub fn jump<R: Rng + ?Sized>(&self, rng: &mut R, m: u64) -> Option<LatticePoint> {
        let Preset::Srw { d } = self.preset else {
            return None;
        };
        let mut c = [0i64; MAX_DIM];
        if m <= DIRECT_JUMP_MAX {
            for _ in 0..m {
                let i = rng.random_range(0..2 * d);
                c[i >> 1] += if i & 1 == 0 { 1 } else { -1 };
            }
            return Some(LatticePoint::from_array(c, d));
        }
        let mut remaining = m;
        for (i, slot) in c.iter_mut().enumerate().take(d) {
            let n_i = if i + 1 == d { remaining } else { binomial(rng, remaining, (d - i) as u64) };
            remaining -= n_i;
            let plus = binomial(rng, n_i, 2);
            *slot = 2 * plus as i64 - n_i as i64;
        }
        Some(LatticePoint::from_array(c, d))
    }
}

/// Below this many steps, summing the increments beats the binomial draws.
const DIRECT_JUMP_MAX: u64 = 16;

/// Largest trial count served from the tabulated binomial laws.
const TABLE_MAX: u64 = 256;

/// Cumulative distribution functions of `Binomial(n, 1/q)` for
/// `q = 2..=MAX_DIM` and `n ≤ TABLE_MAX`.
fn binomial_tables() -> &'static Vec<Vec<Vec<f64>>> {
    static TABLES: OnceLock<Vec<Vec<Vec<f64>>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        (2..=MAX_DIM as u64)
            .map(|q| {
                let p = 1.0 / q as f64;
                (0..=TABLE_MAX)
                    .map(|n| {
                        // pmf by the ratio recursion, in log space for the first term.
                        let mut pmf = Vec::with_capacity(n as usize + 1);
                        let mut v = (n as f64 * (1.0 - p).ln()).exp();
                        for j in 0..=n {
                            pmf.push(v);
                            v *= (n - j) as f64 / (j + 1) as f64 * p / (1.0 - p);
                        }
                        let mut acc = 0.0;
                        let mut cdf: Vec<f64> = pmf
                            .iter()
                            .map(|x| {
                                acc += x;
                                acc
                            })
                            .collect();
                        let total = acc;
                        cdf.iter_mut().for_each(|c| *c /= total);
                        cdf
                    })
                    .collect()
            })
            .collect()
    })
}

/// A `Binomial(n, 1/q)` draw.
#[inline]
fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, q: u64) -> u64 {
    if n == 0 {
        0
    } else if n <= TABLE_MAX {
        let cdf = &binomial_tables()[(q - 2) as usize][n as usize];
        let u: f64 = rng.random();
        (cdf.partition_point(|&c| c <= u) as u64).min(n)
    } else {
        Binomial::new(n, 1.0 / q as f64).expect("valid binomial").sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::walk_rng;

    #[test]
    fn srw_law() {
        let s = StepDistribution::srw(3).unwrap();
        assert_eq!(s.support().len(), 6);
        assert!(s.support().iter().all(|(x, w)| *w == 1.0 / 6.0 && x.norm_inf() == 1));
        assert!(s.is_symmetric());
        assert!(matches!(StepDistribution::srw(2), Err(WalkError::RecurrentPreset(2))));
        let cov = s.covariance();
        assert!((cov[0] - 1.0 / 3.0).abs() < 1e-15 && cov[1] == 0.0);
    }

    #[test]
    fn heavy_tail_law() {
        let s = StepDistribution::heavy_tail(1, 0.5, 50).unwrap();
        assert_eq!(s.support().len(), 100);
        assert!(s.is_symmetric());
        let total: f64 = s.support().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(s.max_step(), 50);
        let s = StepDistribution::heavy_tail(2, 1.0, 8).unwrap();
        assert_eq!(s.support().len(), 17 * 17 - 1);
        assert!(StepDistribution::heavy_tail(1, 2.0, 5).is_err());
    }

    #[test]
    fn jumps_match_steps_in_law() {
        let s = StepDistribution::srw(3).unwrap();
        let mut rng = walk_rng(1, 0);
        let m = 50u64;
        let n = 20_000;
        let mut sq = 0.0;
        let mut x0 = 0.0;
        for _ in 0..n {
            let x = s.jump(&mut rng, m).unwrap();
            let c = x.coords();
            assert_eq!((c[0] + c[1] + c[2]).rem_euclid(2), (m % 2) as i64);
            sq += (x.norm2() * x.norm2()) / n as f64;
            x0 += c[0] as f64 / n as f64;
        }
        assert!((sq - m as f64).abs() < 0.05 * m as f64, "{sq}");
        assert!(x0.abs() < 0.2);
    }

    #[test]
    fn custom_validation() {
        let e = LatticePoint::new(&[1]).unwrap();
        assert!(StepDistribution::from_support(1, vec![(e, 0.5)]).is_err());
        assert!(StepDistribution::from_support(1, vec![(e, 0.5), (e, 0.5)]).is_err());
        let s = StepDistribution::from_support(1, vec![(e, 0.5), (-e, 0.5)]).unwrap();
        assert!(s.is_symmetric() && !s.can_jump());
    }
}

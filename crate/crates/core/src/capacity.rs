//! Energies and Martin `p`-capacities of finite sets, and the series tests
//! built on them.
//!
//! For a start point `a` the Martin kernel is `K(x, y) = g(x, y) / g(a, y)`.
//! Pairs in a common shell are reweighted by `p^{-d(x, y)}` with `d` the tree
//! metric, so `μᵀKμ = I(μ; a) + I_p(μ; a)`. The capacity `c_p(F; a)` is the
//! reciprocal of the least such energy over probability measures on `F`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{order_cmp, shell_cardinality, shell_of, tree_dist_in_shell, LatticePoint, MAX_DIM};
use crate::stats::{fit_line, Estimate};
use crate::walk::{walk_rng, GreenFunction, Region, WalkError};

/// Increment-fraction threshold of the divergence rule.
pub const TAIL_FRACTION: f64 = 0.05;

/// `R²` threshold of the geometric-decay rule.
pub const RATIO_R_SQUARED: f64 = 0.9;

/// Largest allowed gap between the series and potential estimates of `γ_c`.
pub const GAMMA_MODE_AGREEMENT: f64 = 0.15;

/// Supports up to this size get an exact solve on the final face.
const POLISH_MAX: usize = 64;

/// Kernels up to this size get a dense eigenvalue check.
const EIGEN_MAX: usize = 1024;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("p = {0} is outside (0, 1]")]
    BadP(f64),
    #[error("the set is empty")]
    EmptySet,
    #[error("point {0} appears twice in the support")]
    DuplicatePoint(LatticePoint),
    #[error("support has {0} points but {1} weights")]
    LengthMismatch(usize, usize),
    #[error("weights must lie in [0, 1] and sum to 1; they sum to {0}")]
    BadWeights(f64),
    #[error("{y} is unreachable from {a}: g(a, y) = {g}")]
    Unreachable { a: LatticePoint, y: LatticePoint, g: f64 },
    #[error("no Green function value for the pair ({0}, {1})")]
    MissingGreen(LatticePoint, LatticePoint),
    #[error("point {point} has dimension {got}, the Green function has {expected}")]
    DimensionMismatch { point: LatticePoint, expected: usize, got: usize },
    #[error("{0}")]
    BadParameter(String),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

fn check_p(p: f64) -> Result<(), CapacityError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(CapacityError::BadP(p))
    }
}

/// A probability measure on a finite set of lattice points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexMeasure {
    support: Vec<LatticePoint>,
    weights: Vec<f64>,
}

impl SimplexMeasure {
    pub fn new(support: Vec<LatticePoint>, weights: Vec<f64>) -> Result<Self, CapacityError> {
        if support.len() != weights.len() {
            return Err(CapacityError::LengthMismatch(support.len(), weights.len()));
        }
        if support.is_empty() {
            return Err(CapacityError::EmptySet);
        }
        let mut seen = HashSet::with_capacity(support.len());
        for x in &support {
            if !seen.insert(*x) {
                return Err(CapacityError::DuplicatePoint(*x));
            }
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-10 {
            return Err(CapacityError::BadWeights(sum));
        }
        Ok(Self { support, weights })
    }

    pub fn dirac(x: LatticePoint) -> Self {
        Self { support: vec![x], weights: vec![1.0] }
    }

    pub fn uniform(support: Vec<LatticePoint>) -> Result<Self, CapacityError> {
        let w = 1.0 / support.len().max(1) as f64;
        let n = support.len();
        Self::new(support, vec![w; n])
    }

    pub fn support(&self) -> &[LatticePoint] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// `g(x, y) / g(a, y)`, same-shell pairs weighted by `p^{-d(x, y)}`.
    #[default]
    Martin,
    /// `g(x, y)`, the usual random-walk capacity; ignores `a` and `p`.
    Classical,
}

/// Raw kernel on a point list, with absolute errors from the Green estimates.
struct Kernel {
    n: usize,
    raw: Vec<f64>,
    err: Vec<f64>,
}

impl Kernel {
    fn build<G: GreenFunction + ?Sized>(
        points: &[LatticePoint],
        a: &LatticePoint,
        p: f64,
        green: &G,
        mode: KernelMode,
    ) -> Result<Self, CapacityError> {
        check_p(p)?;
        let d = green.dim();
        for x in points.iter().chain(std::iter::once(a)) {
            if x.dim() != d {
                return Err(CapacityError::DimensionMismatch { point: *x, expected: d, got: x.dim() });
            }
        }
        let n = points.len();
        // Relative error of g(a, y) per column.
        let cols: Vec<(f64, f64)> = match mode {
            KernelMode::Martin => points
                .iter()
                .map(|y| {
                    let (g, e) = green.g(a, y).ok_or(CapacityError::MissingGreen(*a, *y))?;
                    if g > 0.0 {
                        Ok((g, e / g))
                    } else {
                        Err(CapacityError::Unreachable { a: *a, y: *y, g })
                    }
                })
                .collect::<Result<_, _>>()?,
            KernelMode::Classical => vec![(1.0, 0.0); n],
        };
        let shells: Vec<u32> = points.iter().map(shell_of).collect();
        let ln_p = p.ln();
        let rows: Vec<Vec<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &points[i];
                (0..n)
                    .map(|j| {
                        let y = &points[j];
                        let (g, e) = green.g(x, y).ok_or(CapacityError::MissingGreen(*x, *y))?;
                        let (ga, ra) = cols[j];
                        let mut w = 1.0;
                        if mode == KernelMode::Martin && shells[i] == shells[j] {
                            w = (-(tree_dist_in_shell(x, y, shells[i]) as f64) * ln_p).exp();
                        }
                        let k = g / ga * w;
                        let rel = if g != 0.0 { e / g.abs() } else { 0.0 } + ra;
                        Ok((k, k.abs() * rel))
                    })
                    .collect::<Result<Vec<_>, CapacityError>>()
            })
            .collect::<Result<_, _>>()?;
        let mut raw = Vec::with_capacity(n * n);
        let mut err = Vec::with_capacity(n * n);
        for row in rows {
            for (k, e) in row {
                raw.push(k);
                err.push(e);
            }
        }
        Ok(Self { n, raw, err })
    }

    fn quadratic(&self, mu: &[f64], m: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            if mu[i] == 0.0 {
                continue;
            }
            let row = &m[i * self.n..(i + 1) * self.n];
            s += mu[i] * row.iter().zip(mu).map(|(k, w)| k * w).sum::<f64>();
        }
        s
    }

    fn symmetrized(&self) -> Vec<f64> {
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = 0.5 * (self.raw[i * n + j] + self.raw[j * n + i]);
            }
        }
        s
    }
}

/// `I(μ; a) + I_p(μ; a)` in Martin mode, `ΣΣ g(x, y) μ(x) μ(y)` in classical mode.
pub fn energy<G: GreenFunction + ?Sized>(
    mu: &SimplexMeasure,
    a: &LatticePoint,
    p: f64,
    green: &G,
    mode: KernelMode,
) -> Result<f64, CapacityError> {
    let k = Kernel::build(&mu.support, a, p, green, mode)?;
    Ok(k.quadratic(&mu.weights, &k.raw))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityOptions {
    pub mode: KernelMode,
    /// Number of starts: the uniform measure, then random Dirichlet(1) draws.
    pub starts: usize,
    /// Stop when the Frank–Wolfe gap falls below `tolerance · max(1, energy)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self { mode: KernelMode::Martin, starts: 10, tolerance: 1e-9, max_iterations: 10_000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Iterations of the winning start.
    pub iterations: usize,
    pub total_iterations: usize,
    pub restarts: usize,
    /// Frank–Wolfe gap at the returned measure.
    pub gap: f64,
    pub converged: bool,
    /// Extreme eigenvalues of the symmetrized kernel; `None` above the size limit.
    pub min_eigenvalue: Option<f64>,
    pub max_eigenvalue: Option<f64>,
    /// The symmetrized kernel is positive semidefinite, so the problem is convex.
    pub convex: bool,
    /// Convex and converged: the gap bounds the distance to the global minimum.
    pub certified: bool,
    /// Largest relative excess of a start's final energy over the best one.
    pub start_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    /// First-order error of `value` from the Green function errors.
    pub std_err: f64,
    pub energy: f64,
    pub minimizer: SimplexMeasure,
    pub diagnostics: SolverDiagnostics,
}

/// Result of minimizing `μᵀQμ` over the simplex.
#[derive(Clone, Debug)]
pub(crate) struct SimplexSolution {
    pub weights: Vec<f64>,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
}

fn matvec(q: &[f64], n: usize, mu: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (j, &w) in mu.iter().enumerate() {
        if w != 0.0 {
            let row = &q[j * n..(j + 1) * n];
            for (o, k) in out.iter_mut().zip(row) {
                *o += w * k;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fw_gap(qm: &[f64], f: f64) -> f64 {
    2.0 * (f - qm.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Frank–Wolfe with away steps and exact line search on a symmetric `q`.
fn frank_wolfe(q: &[f64], n: usize, mu: &mut [f64], tol: f64, max_iter: usize) -> SimplexSolution {
    let mut qm = matvec(q, n, mu);
    let mut f = dot(mu, &qm);
    let mut it = 0;
    while it < max_iter {
        if it % 256 == 255 {
            qm = matvec(q, n, mu);
            f = dot(mu, &qm);
        }
        let mut s = 0;
        let mut v = usize::MAX;
        for i in 0..n {
            if qm[i] < qm[s] {
                s = i;
            }
            if mu[i] > 0.0 && (v == usize::MAX || qm[i] > qm[v]) {
                v = i;
            }
        }
        let gap = 2.0 * (f - qm[s]);
        if gap <= tol * f.abs().max(1.0) {
            break;
        }
        it += 1;
        let away_gap = 2.0 * (qm[v] - f);
        if gap >= away_gap || mu[v] >= 1.0 {
            let slope = 2.0 * (qm[s] - f);
            let curv = q[s * n + s] - 2.0 * qm[s] + f;
            let step = if curv > 0.0 { (-slope / (2.0 * curv)).min(1.0) } else { 1.0 };
            for (m, (o, k)) in mu.iter_mut().zip(qm.iter_mut().zip(&q[s * n..(s + 1) * n])) {
                *m *= 1.0 - step;
                *o = (1.0 - step) * *o + step * k;
            }
            mu[s] += step;
            f += step * slope + step * step * curv;
        } else {
            let max_step = mu[v] / (1.0 - mu[v]);
            let slope = 2.0 * (f - qm[v]);
            let curv = f - 2.0 * qm[v] + q[v * n + v];
            let step = if curv > 0.0 { (-slope / (2.0 * curv)).min(max_step) } else { max_step };
            for (m, (o, k)) in mu.iter_mut().zip(qm.iter_mut().zip(&q[v * n..(v + 1) * n])) {
                *m *= 1.0 + step;
                *o = (1.0 + step) * *o - step * k;
            }
            mu[v] -= step;
            if step >= max_step || mu[v] < 0.0 {
                mu[v] = 0.0;
            }
            f += step * slope + step * step * curv;
        }
    }
    let sum: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= sum);
    let qm = matvec(q, n, mu);
    let f = dot(mu, &qm);
    SimplexSolution { weights: mu.to_vec(), value: f, gap: fw_gap(&qm, f), iterations: it }
}

/// Solves the stationarity system on the support of `mu`; `None` if the
/// face optimum leaves the face or the system is singular.
fn polish(q: &[f64], n: usize, mu: &[f64]) -> Option<Vec<f64>> {
    let face: Vec<usize> = (0..n).filter(|&i| mu[i] > 0.0).collect();
    if face.len() > POLISH_MAX {
        return None;
    }
    let m = face.len();
    let sub = DMatrix::from_fn(m, m, |r, c| q[face[r] * n + face[c]]);
    let z = sub.lu().solve(&DVector::from_element(m, 1.0))?;
    let total: f64 = z.iter().sum();
    if !(total > 0.0) || z.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let mut out = vec![0.0; n];
    for (r, &i) in face.iter().enumerate() {
        out[i] = z[r] / total;
    }
    Some(out)
}

/// Minimizes `μᵀQμ` over the probability simplex from several starts.
pub(crate) fn minimize_on_simplex(
    q: &[f64],
    n: usize,
    opts: &CapacityOptions,
) -> (SimplexSolution, Vec<SimplexSolution>) {
    let starts = opts.starts.max(1);
    let runs: Vec<SimplexSolution> = (0..starts)
        .into_par_iter()
        .map(|r| {
            let mut mu = if r == 0 {
                vec![1.0 / n as f64; n]
            } else {
                let mut rng = walk_rng(opts.seed, r as u64);
                let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                w
            };
            let mut sol = frank_wolfe(q, n, &mut mu, opts.tolerance, opts.max_iterations);
            if let Some(mut p) = polish(q, n, &sol.weights) {
                let qm = matvec(q, n, &p);
                let f = dot(&p, &qm);
                let gap = fw_gap(&qm, f);
                if f <= sol.value && gap > opts.tolerance * f.abs().max(1.0) && sol.iterations < opts.max_iterations {
                    // The face was wrong; resume from the better point.
                    let rest = frank_wolfe(q, n, &mut p, opts.tolerance, opts.max_iterations - sol.iterations);
                    if rest.value <= f {
                        sol = SimplexSolution { iterations: sol.iterations + rest.iterations, ..rest };
                    }
                } else if f <= sol.value {
                    sol = SimplexSolution { weights: p, value: f, gap, iterations: sol.iterations };
                }
            }
            sol
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, s)| s.clone())
        .expect("at least one start");
    (best, runs)
}

fn eigen_range(q: &[f64], n: usize) -> Option<(f64, f64)> {
    if n > EIGEN_MAX {
        return None;
    }
    let ev = DMatrix::from_row_slice(n, n, q).symmetric_eigenvalues();
    Some((ev.min(), ev.max()))
}

fn sorted_set(f: &[LatticePoint]) -> Result<Vec<LatticePoint>, CapacityError> {
    if f.is_empty() {
        return Err(CapacityError::EmptySet);
    }
    let mut pts = f.to_vec();
    pts.sort_by(order_cmp);
    pts.dedup();
    Ok(pts)
}

/// `c_p(F; a)`: the reciprocal of the least energy over probability measures on `F`.
pub fn cp_capacity<G: GreenFunction + ?Sized>(
    f: &[LatticePoint],
    a: &LatticePoint,
    p: f64,
    green: &G,
    opts: &CapacityOptions,
) -> Result<CapacityResult, CapacityError> {
    let pts = sorted_set(f)?;
    let kernel = Kernel::build(&pts, a, p, green, opts.mode)?;
    let n = pts.len();
    let q = kernel.symmetrized();
    let (best, runs) = minimize_on_simplex(&q, n, opts);
    let eig = eigen_range(&q, n);
    let convex = eig.is_some_and(|(lo, hi)| lo >= -1e-9 * hi.abs().max(1.0));
    let converged = best.gap <= opts.tolerance * best.value.abs().max(1.0);
    let spread = runs.iter().map(|r| (r.value - best.value) / best.value.abs()).fold(0.0, f64::max);
    let energy_err = kernel.quadratic(&best.weights, &kernel.err);
    let value = 1.0 / best.value;
    let minimizer = SimplexMeasure { support: pts, weights: best.weights.clone() };
    Ok(CapacityResult {
        value,
        std_err: value * energy_err / best.value,
        energy: best.value,
        minimizer,
        diagnostics: SolverDiagnostics {
            iterations: best.iterations,
            total_iterations: runs.iter().map(|r| r.iterations).sum(),
            restarts: runs.len(),
            gap: best.gap,
            converged,
            min_eigenvalue: eig.map(|e| e.0),
            max_eigenvalue: eig.map(|e| e.1),
            convex,
            certified: convex && converged,
            start_spread: spread,
        },
    })
}

/// Symmetrized kernel of `F` in the order of [`order_cmp`], for external checks.
pub fn symmetrized_kernel<G: GreenFunction + ?Sized>(
    f: &[LatticePoint],
    a: &LatticePoint,
    p: f64,
    green: &G,
    mode: KernelMode,
) -> Result<(Vec<LatticePoint>, Vec<f64>), CapacityError> {
    let pts = sorted_set(f)?;
    let kernel = Kernel::build(&pts, a, p, green, mode)?;
    let q = kernel.symmetrized();
    Ok((pts, q))
}

/// A set given shell by shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShellFamily {
    /// An explicit finite set.
    Points { points: Vec<LatticePoint> },
    /// All of `Z^d`, with each shell subsampled to at most `cap` points,
    /// stratified over the level-`⌈k/2⌉` cubes of the shell.
    FullLattice { d: usize, cap: usize, seed: u64 },
    /// `{(0, …, 0, j³) : j ≥ 1}`.
    AxisCubes { d: usize },
    /// One point per shell: the origin in `S_0` and `2^{k-1} e_d` in `S_k`.
    AxisDyadic { d: usize },
}

impl ShellFamily {
    pub fn dim(&self) -> Option<usize> {
        match self {
            ShellFamily::Points { points } => points.first().map(|x| x.dim()),
            ShellFamily::FullLattice { d, .. } | ShellFamily::AxisCubes { d } | ShellFamily::AxisDyadic { d } => {
                Some(*d)
            }
        }
    }

    /// Whether shells are subsampled, which lowers their capacities.
    pub fn is_subsampled(&self, k: u32) -> bool {
        match self {
            ShellFamily::FullLattice { d, cap, .. } => shell_cardinality(*d, k) > *cap as u128,
            _ => false,
        }
    }

    /// The points of the family in `S_k`, in forest order.
    pub fn shell(&self, k: u32) -> Result<Vec<LatticePoint>, CapacityError> {
        let axis = |d: usize, t: i64| {
            let mut c = [0i64; MAX_DIM];
            c[d - 1] = t;
            LatticePoint::new(&c[..d]).map_err(WalkError::from)
        };
        let mut out = match self {
            ShellFamily::Points { points } => points.iter().filter(|x| shell_of(x) == k).copied().collect(),
            ShellFamily::AxisCubes { d } => {
                let mut v = Vec::new();
                let mut j = 1i64;
                while j.pow(3) < 1i64 << k.min(61) {
                    let x = axis(*d, j.pow(3))?;
                    if shell_of(&x) == k {
                        v.push(x);
                    }
                    j += 1;
                }
                v
            }
            ShellFamily::AxisDyadic { d } => vec![axis(*d, if k == 0 { 0 } else { 1i64 << (k - 1) })?],
            ShellFamily::FullLattice { d, cap, seed } => stratified_shell(*d, k, *cap, *seed)?,
        };
        out.sort_by(order_cmp);
        out.dedup();
        Ok(out)
    }
}

fn stratified_shell(d: usize, k: u32, cap: usize, seed: u64) -> Result<Vec<LatticePoint>, CapacityError> {
    if d == 0 || d > MAX_DIM || k > 20 {
        return Err(CapacityError::BadParameter(format!("full-lattice family needs d ≤ {MAX_DIM} and k ≤ 20")));
    }
    if cap == 0 {
        return Err(CapacityError::BadParameter("subsample cap must be positive".into()));
    }
    if shell_cardinality(d, k) <= cap as u128 {
        return Ok(crate::lattice::shell_points(d, k).collect());
    }
    // Here k ≥ 2, so the shell is a union of level-⌈k/2⌉ cubes.
    let level = k.div_ceil(2);
    let side = 1i64 << level;
    let outer = 1i64 << (k - level);
    let inner = outer / 2;
    let cubes: Vec<[i64; MAX_DIM]> = crate::lattice::cube_range(d, -outer, outer)
        .filter(|j| j.coords().iter().any(|&c| c < -inner || c >= inner))
        .map(|j| *j.raw())
        .collect();
    let mut rng = walk_rng(seed, k as u64);
    let offset_unit: f64 = rng.random();
    let mut pick = |cube: &[i64; MAX_DIM], taken: &mut HashSet<LatticePoint>| -> Result<(), CapacityError> {
        loop {
            let mut c = [0i64; MAX_DIM];
            for i in 0..d {
                c[i] = cube[i] * side + rng.random_range(0..side);
            }
            let x = LatticePoint::new(&c[..d]).map_err(WalkError::from)?;
            if taken.insert(x) {
                return Ok(());
            }
        }
    };
    let mut taken = HashSet::with_capacity(cap);
    if cubes.len() >= cap {
        // Systematic sample of cubes with a random offset, one point each.
        let stride = cubes.len() as f64 / cap as f64;
        let offset = offset_unit * stride;
        for i in 0..cap {
            let idx = ((offset + i as f64 * stride) as usize).min(cubes.len() - 1);
            pick(&cubes[idx], &mut taken)?;
        }
    } else {
        let per_cube = side.pow(d as u32) as usize;
        for (i, cube) in cubes.iter().enumerate() {
            let quota = (cap / cubes.len() + usize::from(i < cap % cubes.len())).min(per_cube);
            for _ in 0..quota {
                pick(cube, &mut taken)?;
            }
        }
    }
    Ok(taken.into_iter().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Diverging,
    Converging,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendDiagnostics {
    pub tail_shells: usize,
    /// Sum of the last-quarter increments over the sum of the others.
    pub tail_fraction: f64,
    /// Least-squares slope and `R²` of `log₂` of the nonzero increments.
    pub ratio_slope: Option<f64>,
    pub ratio_r_squared: Option<f64>,
}

/// Classifies a series from its first increments: diverging when the last
/// quarter still adds more than [`TAIL_FRACTION`] of the rest, converging
/// when the nonzero increments decay geometrically with `R² ≥`
/// [`RATIO_R_SQUARED`], inconclusive otherwise. An all-zero series converges.
pub fn classify_series(increments: &[f64]) -> (Trend, TrendDiagnostics) {
    let n = increments.len();
    let tail_shells = n.div_ceil(4);
    let tail: f64 = increments[n - tail_shells..].iter().sum();
    let head: f64 = increments[..n - tail_shells].iter().sum();
    let tail_fraction = if tail == 0.0 { 0.0 } else if head > 0.0 { tail / head } else { f64::INFINITY };
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        increments.iter().enumerate().filter(|(_, &c)| c > 0.0).map(|(k, c)| (k as f64, c.log2())).unzip();
    let fit = if xs.len() >= 3 { fit_line(&xs, &ys) } else { None };
    let diag = TrendDiagnostics {
        tail_shells,
        tail_fraction,
        ratio_slope: fit.map(|f| f.slope),
        ratio_r_squared: fit.map(|f| f.r_squared),
    };
    let trend = if head + tail == 0.0 {
        Trend::Converging
    } else if tail_fraction > TAIL_FRACTION {
        Trend::Diverging
    } else if fit.is_some_and(|f| f.slope < 0.0 && f.r_squared >= RATIO_R_SQUARED) {
        Trend::Converging
    } else {
        Trend::Inconclusive
    };
    (trend, diag)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellCapacity {
    pub shell: u32,
    pub points: usize,
    pub subsampled: bool,
    pub value: f64,
    pub std_err: f64,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<SimplexMeasure>,
}

/// Per-shell capacities `c_p(F ∩ S_k; a)` for `k = 0..=k_max`; empty shells give 0.
pub fn shell_capacities<G: GreenFunction + ?Sized>(
    family: &ShellFamily,
    a: &LatticePoint,
    p: f64,
    green: &G,
    k_max: u32,
    opts: &CapacityOptions,
    keep_minimizers: bool,
) -> Result<Vec<ShellCapacity>, CapacityError> {
    check_p(p)?;
    (0..=k_max)
        .into_par_iter()
        .map(|k| {
            let pts = family.shell(k)?;
            let subsampled = family.is_subsampled(k);
            if pts.is_empty() {
                return Ok(ShellCapacity {
                    shell: k,
                    points: 0,
                    subsampled,
                    value: 0.0,
                    std_err: 0.0,
                    certified: true,
                    minimizer: None,
                });
            }
            let r = cp_capacity(&pts, a, p, green, opts)?;
            Ok(ShellCapacity {
                shell: k,
                points: pts.len(),
                subsampled,
                value: r.value,
                std_err: r.std_err,
                certified: r.diagnostics.certified,
                minimizer: keep_minimizers.then_some(r.minimizer),
            })
        })
        .collect()
}

fn partial_sums(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceVerdict {
    pub shells: Vec<ShellCapacity>,
    pub partial_sums: Vec<f64>,
    pub trend: Trend,
    pub diagnostics: TrendDiagnostics,
    /// `None` when the Green function cannot evaluate off-origin pairs.
    pub lamperti: Option<LampertiCheck>,
    pub caveats: Vec<String>,
}

/// Classifies `Σ_k c₁(F ∩ S_k; a)` for `k ≤ k_max`.
pub fn recurrence_test<G: GreenFunction + ?Sized>(
    family: &ShellFamily,
    a: &LatticePoint,
    green: &G,
    k_max: u32,
    opts: &CapacityOptions,
) -> Result<RecurrenceVerdict, CapacityError> {
    let shells = shell_capacities(family, a, 1.0, green, k_max, opts, false)?;
    let inc: Vec<f64> = shells.iter().map(|s| s.value).collect();
    let (trend, diagnostics) = classify_series(&inc);
    let mut caveats = Vec::new();
    if shells.iter().any(|s| s.subsampled) {
        caveats.push("subsampled shells understate capacity; a converging verdict may not hold for the full set".into());
    }
    if shells.iter().any(|s| s.points > 0 && !s.certified) {
        caveats.push("some shell minima are not certified global".into());
    }
    let lamperti = if k_max >= 4 {
        lamperti_check(green, a, k_max, &LampertiOptions::default()).ok()
    } else {
        None
    };
    match &lamperti {
        Some(l) if !l.stable => caveats.push("the Lamperti constant did not stabilize".into()),
        None => caveats.push("the Lamperti condition was not checked".into()),
        _ => {}
    }
    Ok(RecurrenceVerdict { partial_sums: partial_sums(&inc), shells, trend, diagnostics, lamperti, caveats })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LampertiOptions {
    pub samples_per_shell: usize,
    /// Smallest shell gap `m - n` that counts towards the constant.
    pub min_gap: u32,
    pub seed: u64,
}

impl Default for LampertiOptions {
    fn default() -> Self {
        Self { samples_per_shell: 8, min_gap: 3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapMaximum {
    pub gap: u32,
    pub max: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LampertiCheck {
    /// Largest sampled `g(x,y)/g(a,y) + g(y,x)/g(a,x)` at each exact gap.
    pub per_gap: Vec<GapMaximum>,
    /// The maximum over all gaps `≥ min_gap`.
    pub constant: f64,
    pub min_gap: u32,
    /// The largest gap does not exceed the earlier gaps' maximum by more than 10%.
    pub stable: bool,
}

fn random_shell_point<R: Rng>(d: usize, k: u32, rng: &mut R) -> LatticePoint {
    let lo = -(1i64 << k);
    let hi = 1i64 << k;
    loop {
        let mut c = [0i64; MAX_DIM];
        for v in c.iter_mut().take(d) {
            *v = rng.random_range(lo..hi);
        }
        let x = LatticePoint::new(&c[..d]).expect("coordinates in range");
        if shell_of(&x) == k {
            return x;
        }
    }
}

/// Samples the cross-shell Green ratio of the Lamperti condition for
/// `x ∈ S_n`, `y ∈ S_m`, `n < m ≤ k_max`.
pub fn lamperti_check<G: GreenFunction + ?Sized>(
    green: &G,
    a: &LatticePoint,
    k_max: u32,
    opts: &LampertiOptions,
) -> Result<LampertiCheck, CapacityError> {
    if k_max < opts.min_gap + 1 {
        return Err(CapacityError::BadParameter(format!(
            "k_max = {k_max} leaves no shell pair with gap ≥ {}",
            opts.min_gap + 1
        )));
    }
    let d = green.dim();
    let mut rng = walk_rng(opts.seed, 0x1a4);
    let samples: Vec<Vec<LatticePoint>> = (0..=k_max)
        .map(|k| (0..opts.samples_per_shell).map(|_| random_shell_point(d, k, &mut rng)).collect())
        .collect();
    let g = |x: &LatticePoint, y: &LatticePoint| green.g(x, y).ok_or(CapacityError::MissingGreen(*x, *y));
    let mut per_gap: Vec<GapMaximum> =
        (1..=k_max).map(|gap| GapMaximum { gap, max: 0.0, pairs: 0 }).collect();
    for n in 0..k_max {
        for m in n + 1..=k_max {
            let slot = &mut per_gap[(m - n - 1) as usize];
            for x in &samples[n as usize] {
                for y in &samples[m as usize] {
                    let (gay, _) = g(a, y)?;
                    let (gax, _) = g(a, x)?;
                    if gay <= 0.0 {
                        return Err(CapacityError::Unreachable { a: *a, y: *y, g: gay });
                    }
                    if gax <= 0.0 {
                        return Err(CapacityError::Unreachable { a: *a, y: *x, g: gax });
                    }
                    let ratio = g(x, y)?.0 / gay + g(y, x)?.0 / gax;
                    slot.max = slot.max.max(ratio);
                    slot.pairs += 1;
                }
            }
        }
    }
    let counted: Vec<&GapMaximum> = per_gap.iter().filter(|g| g.gap >= opts.min_gap).collect();
    let constant = counted.iter().map(|g| g.max).fold(0.0, f64::max);
    let (last, earlier) = counted.split_last().expect("at least one counted gap");
    let earlier_max = earlier.iter().map(|g| g.max).fold(0.0, f64::max);
    let stable = constant.is_finite() && (earlier.is_empty() || last.max <= 1.1 * earlier_max);
    Ok(LampertiCheck { per_gap, constant, min_gap: opts.min_gap, stable })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// Transition of the shellwise series `Σ 2^{-kγ} U(S_k)`: the least-squares
    /// slope of `log₂ U(S_k)` over the window, where the decay of
    /// `log₂(2^{-kγ} U(S_k))` flips sign.
    pub series: f64,
    /// Largest secant slope `(log₂ U(V_n) - log₂ U(V_b)) / (n - b)` over the window.
    pub potential: f64,
    /// Largest `n^{-1} log₂ U(V_n)` over the window.
    pub potential_raw: f64,
    pub window: (u32, u32),
    pub secant_base: u32,
    pub shell_potential: Vec<Estimate>,
    pub box_potential: Vec<Estimate>,
    pub agree: bool,
}

/// `γ_c` from the potential of shells and boxes up to `V_{n_max}`.
pub fn gamma_c_estimate<G: GreenFunction + ?Sized>(green: &G, n_max: u32) -> Result<GammaEstimate, CapacityError> {
    if n_max < 3 {
        return Err(CapacityError::BadParameter(format!("n_max = {n_max} is below 3")));
    }
    let shell_potential: Vec<Estimate> = (0..=n_max)
        .into_par_iter()
        .map(|k| green.potential(&Region::Shell(k)))
        .collect::<Result<_, _>>()?;
    let box_potential: Vec<Estimate> = shell_potential
        .iter()
        .scan(Estimate::exact(0.0), |acc, s| {
            *acc = Estimate::new(acc.value + s.value, acc.std_err + s.std_err);
            Some(*acc)
        })
        .collect();
    let lo = n_max.div_ceil(2).max(1);
    let base = n_max.div_ceil(4).max(1);
    if lo <= base {
        return Err(CapacityError::BadParameter(format!("n_max = {n_max} leaves no secant window")));
    }
    let window: Vec<u32> = (lo..=n_max).collect();
    if window.iter().any(|&k| shell_potential[k as usize].value <= 0.0) {
        return Err(CapacityError::BadParameter("nonpositive shell potential in the window".into()));
    }
    let xs: Vec<f64> = window.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = window.iter().map(|&k| shell_potential[k as usize].value.log2()).collect();
    let series = fit_line(&xs, &ys).map(|f| f.slope).ok_or_else(|| CapacityError::BadParameter("window too short".into()))?;
    let lu = |n: u32| box_potential[n as usize].value.log2();
    let potential = window.iter().map(|&n| (lu(n) - lu(base)) / (n - base) as f64).fold(f64::NEG_INFINITY, f64::max);
    let potential_raw = window.iter().map(|&n| lu(n) / n as f64).fold(f64::NEG_INFINITY, f64::max);
    Ok(GammaEstimate {
        series,
        potential,
        potential_raw,
        window: (lo, n_max),
        secant_base: base,
        shell_potential,
        box_potential,
        agree: (series - potential).abs() <= GAMMA_MODE_AGREEMENT,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PColumn {
    pub p: f64,
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub trend: Trend,
    pub diagnostics: TrendDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub columns: Vec<PColumn>,
    /// Geometric midpoint of the bracket.
    pub p_c: f64,
    /// Largest converging `p` below the first diverging one, and that diverging `p`.
    pub bracket: (f64, f64),
    pub no_transition: bool,
    /// `-log₂ p_c`, the predicted dimension.
    pub dimension: f64,
}

/// Default `p` grid: `2^{-j/4}` for `j = 0..=4d`, ascending.
pub fn default_p_grid(d: usize) -> Vec<f64> {
    (0..=4 * d).rev().map(|j| (-(j as f64) / 4.0).exp2()).collect()
}

/// Locates the transition of `Σ_k c_p(F ∩ S_k; a)` across a `p` grid.
pub fn p_c_estimate<G: GreenFunction + ?Sized>(
    family: &ShellFamily,
    a: &LatticePoint,
    green: &G,
    k_max: u32,
    p_grid: &[f64],
    opts: &CapacityOptions,
) -> Result<PcEstimate, CapacityError> {
    if p_grid.is_empty() {
        return Err(CapacityError::BadParameter("empty p grid".into()));
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let columns: Vec<PColumn> = grid
        .iter()
        .map(|&p| {
            let shells = shell_capacities(family, a, p, green, k_max, opts, false)?;
            let increments: Vec<f64> = shells.iter().map(|s| s.value).collect();
            let (trend, diagnostics) = classify_series(&increments);
            Ok(PColumn { p, partial_sums: partial_sums(&increments), increments, trend, diagnostics })
        })
        .collect::<Result<_, CapacityError>>()?;
    let first_div = columns.iter().position(|c| c.trend == Trend::Diverging);
    let last_conv = columns[..first_div.unwrap_or(columns.len())].iter().rposition(|c| c.trend == Trend::Converging);
    let top = *grid.last().expect("nonempty");
    let bottom = grid[0];
    let (bracket, no_transition) = match (last_conv, first_div) {
        (Some(c), Some(dv)) => ((grid[c], grid[dv]), false),
        (_, None) => ((top, top), true),
        (None, Some(_)) => ((bottom, bottom), true),
    };
    let p_c = (bracket.0 * bracket.1).sqrt();
    Ok(PcEstimate { columns, p_c, bracket, no_transition, dimension: -p_c.log2() })
}

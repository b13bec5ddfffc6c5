//! Covering measures `N_α(A, S_k)` and the macroscopic dimension estimators.
//!
//! `N_α(A, S_k)` is the cheapest cover of `A ∩ S_k` by dyadic cubes, a cube
//! of level `ℓ` costing `2^{α(ℓ-k-1)}`. Cubes above level `k` cost at least
//! one each while the `2^d` level-`k` cubes tiling `V_k` cost `2^{-α}`, so the
//! search runs over levels `0..=k` only. The minimum is a bottom-up pass over
//! the occupied part of the dyadic tree: a cube is bought whole when that is
//! no dearer than the best covers of its occupied children.

use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{
    child_corner, cube_meets_shell, order_cmp, root_corner, shell_of, DyadicCube, LatticeError, LatticePoint,
    MAX_DIM, MAX_SHELL,
};
use crate::percolation::{check_p, PercolationError, PercolationField};
use crate::stats::fit_line;

/// Lower edge of the `α` search bracket.
pub const ALPHA_FLOOR: f64 = 0.01;

/// Default bisection tolerance on `α`.
pub const DEFAULT_ALPHA_TOL: f64 = 0.02;

const MIN_USABLE_SHELLS: usize = 4;


#[derive(Debug, Error)]
pub enum DimensionError {
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("cell {cell} lies in shell {actual}, not {expected}")]
    WrongShell { cell: LatticePoint, expected: u32, actual: u32 },
    #[error("points of dimension {got} in a set of dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shell {0} exceeds the supported maximum")]
    ShellTooLarge(u32),
    #[error("shell {0} is given twice")]
    DuplicateShell(u32),
    #[error("no shells given")]
    NoShells,
    #[error("only {usable} usable shells in the window [{lo}, {hi}]; at least 4 are needed")]
    InsufficientData { usable: usize, lo: u32, hi: u32 },
    #[error("all box counts are zero")]
    AllZero,
    #[error("box counts must be nondecreasing, but count {0} is below its predecessor")]
    DecreasingCounts(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

fn check_alpha(alpha: f64) -> Result<(), DimensionError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(DimensionError::BadAlpha(alpha))
    }
}

/// The unit cells of `A ∩ S_k`, deduplicated and in forest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShellCells {
    shell: u32,
    dim: usize,
    cells: Vec<LatticePoint>,
}

impl ShellCells {
    pub fn new(shell: u32, dim: usize, mut cells: Vec<LatticePoint>) -> Result<Self, DimensionError> {
        if shell > MAX_SHELL {
            return Err(DimensionError::ShellTooLarge(shell));
        }
        for c in &cells {
            if c.dim() != dim {
                return Err(DimensionError::DimensionMismatch { expected: dim, got: c.dim() });
            }
            let actual = shell_of(c);
            if actual != shell {
                return Err(DimensionError::WrongShell { cell: *c, expected: shell, actual });
            }
        }
        cells.sort_unstable_by(order_cmp);
        cells.dedup();
        Ok(Self { shell, dim, cells })
    }

    /// All of `S_k`.
    pub fn full(dim: usize, shell: u32) -> Result<Self, DimensionError> {
        let cells = crate::lattice::shell_points(dim, shell).collect();
        Self::new(shell, dim, cells)
    }

    /// Splits `points` into shells `0..=k_max`; points beyond `V_{k_max}` are dropped.
    pub fn split(dim: usize, points: &[LatticePoint], k_max: u32) -> Result<Vec<Self>, DimensionError> {
        let mut by_shell = vec![Vec::new(); k_max as usize + 1];
        for x in points {
            if x.dim() != dim {
                return Err(DimensionError::DimensionMismatch { expected: dim, got: x.dim() });
            }
            let k = shell_of(x);
            if k <= k_max {
                by_shell[k as usize].push(*x);
            }
        }
        by_shell.into_iter().enumerate().map(|(k, cells)| Self::new(k as u32, dim, cells)).collect()
    }

    pub fn shell(&self) -> u32 {
        self.shell
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[LatticePoint] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Reads shell cell sets from CSV rows `k,x1,...,xd` with a header row.
pub fn read_shell_csv<R: BufRead>(reader: R, dim: usize) -> Result<Vec<ShellCells>, DimensionError> {
    let mut by_shell: std::collections::BTreeMap<u32, Vec<LatticePoint>> = Default::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |msg: String| DimensionError::Parse { line: i + 1, msg };
        if fields.len() != dim + 1 {
            return Err(parse_err(format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let k: u32 = fields[0].parse().map_err(|e| parse_err(format!("shell: {e}")))?;
        let coords = fields[1..]
            .iter()
            .map(|f| f.parse::<i64>().map_err(|e| parse_err(format!("coordinate: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        by_shell.entry(k).or_default().push(LatticePoint::new(&coords)?);
    }
    by_shell.into_iter().map(|(k, cells)| ShellCells::new(k, dim, cells)).collect()
}

/// An optimal cover and its cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    /// `Σ_i 2^{α(ℓ_i - k - 1)}`, summed level by level from the finest.
    pub value: f64,
    pub alpha: f64,
    pub shell: u32,
    pub cover: Vec<DyadicCube>,
}

impl CoverResult {
    /// Number of cover cubes per level `0..=k`.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.shell as usize + 1];
        for q in &self.cover {
            h[q.level as usize] += 1;
        }
        h
    }
}

/// The value of a cover with `hist[ℓ]` cubes of level `ℓ` in shell `k`.
pub fn cover_cost(hist: &[u64], k: u32, alpha: f64) -> f64 {
    hist.iter()
        .enumerate()
        .map(|(level, &n)| n as f64 * level_cost(level as u32, k, alpha))
        .sum()
}

#[inline]
fn level_cost(level: u32, k: u32, alpha: f64) -> f64 {
    (alpha * (level as f64 - k as f64 - 1.0)).exp2()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Node {
    level: u8,
    /// Position among the parent's children, or among the roots.
    bits: u8,
    children: u8,
}

/// The occupied dyadic cubes of one shell, stored in pre-order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeTree {
    shell: u32,
    dim: usize,
    nodes: Vec<Node>,
}

/// Inverse of `child_corner`: the low bit of every coordinate.
fn corner_bits(corner: &LatticePoint) -> u8 {
    let d = corner.dim();
    let mut bits = 0u8;
    for (i, &c) in corner.coords().iter().enumerate() {
        bits |= ((c & 1) as u8) << (d - 1 - i);
    }
    bits
}

/// Inverse of `root_corner`: corners are `-1` or `0`.
fn root_bits(corner: &LatticePoint) -> u8 {
    let d = corner.dim();
    let mut bits = 0u8;
    for (i, &c) in corner.coords().iter().enumerate() {
        bits |= ((c + 1) as u8) << (d - 1 - i);
    }
    bits
}

impl CubeTree {
    pub fn from_cells(cells: &ShellCells) -> Self {
        let mut nodes = Vec::new();
        let k = cells.shell;
        let mut rest = cells.cells();
        while let Some(first) = rest.first() {
            let root = first.shr(k);
            let n = rest.iter().take_while(|c| c.shr(k) == root).count();
            Self::push_cells(&mut nodes, &rest[..n], k, root_bits(&root));
            rest = &rest[n..];
        }
        Self { shell: k, dim: cells.dim, nodes }
    }

    fn push_cells(nodes: &mut Vec<Node>, cells: &[LatticePoint], level: u32, bits: u8) {
        let me = nodes.len();
        nodes.push(Node { level: level as u8, bits, children: 0 });
        if level == 0 {
            return;
        }
        let mut rest = cells;
        let mut count = 0u8;
        while let Some(first) = rest.first() {
            let child = first.shr(level - 1);
            let n = rest.iter().take_while(|c| c.shr(level - 1) == child).count();
            Self::push_cells(nodes, &rest[..n], level - 1, corner_bits(&child));
            rest = &rest[n..];
            count += 1;
        }
        nodes[me].children = count;
    }

    /// The tree of `Π_p ∩ S_k`, built during the survivor walk without
    /// listing cells. Fails with `Truncated` beyond `max_nodes` cubes.
    pub fn from_percolation(
        field: &PercolationField,
        p: f64,
        k: u32,
        max_nodes: usize,
    ) -> Result<Self, DimensionError> {
        check_p(p)?;
        if k > MAX_SHELL {
            return Err(DimensionError::ShellTooLarge(k));
        }
        let d = field.dim();
        let mut nodes = Vec::new();
        for bits in 0..(1usize << d) {
            let corner = root_corner(d, bits);
            Self::push_survivors(field, p, k, k, corner, bits as u8, &mut nodes, max_nodes)?;
        }
        Ok(Self { shell: k, dim: d, nodes })
    }

    #[allow(clippy::too_many_arguments)]
    fn push_survivors(
        field: &PercolationField,
        p: f64,
        k: u32,
        level: u32,
        corner: [i64; MAX_DIM],
        bits: u8,
        nodes: &mut Vec<Node>,
        max_nodes: usize,
    ) -> Result<bool, PercolationError> {
        if field.weight_raw(k, level, &corner) >= p {
            return Ok(false);
        }
        if nodes.len() == max_nodes {
            return Err(PercolationError::Truncated(max_nodes));
        }
        let me = nodes.len();
        nodes.push(Node { level: level as u8, bits, children: 0 });
        if level == 0 {
            return Ok(true);
        }
        let d = field.dim();
        let mut count = 0u8;
        for b in 0..(1usize << d) {
            let child = child_corner(d, &corner, b);
            if cube_meets_shell(level - 1, &child[..d], k)
                && Self::push_survivors(field, p, k, level - 1, child, b as u8, nodes, max_nodes)?
            {
                count += 1;
            }
        }
        if count == 0 {
            nodes.truncate(me);
            return Ok(false);
        }
        nodes[me].children = count;
        Ok(true)
    }

    pub fn shell(&self) -> u32 {
        self.shell
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of occupied cubes over all levels.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of occupied level-`k` cubes.
    pub fn root_count(&self) -> usize {
        let k = self.shell as u8;
        self.nodes.iter().filter(|n| n.level == k).count()
    }

    /// Number of occupied unit cells.
    pub fn cell_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.level == 0).count()
    }

    fn costs(&self, alpha: f64) -> Vec<f64> {
        (0..=self.shell).map(|l| level_cost(l, self.shell, alpha)).collect()
    }

    /// `N_α` by the bottom-up minimum, without recording the cover.
    pub fn value(&self, alpha: f64) -> f64 {
        let costs = self.costs(alpha);
        let mut i = 0;
        let mut total = 0.0;
        while i < self.nodes.len() {
            total += self.min_value(&mut i, &costs);
        }
        total
    }

    fn min_value(&self, i: &mut usize, costs: &[f64]) -> f64 {
        let node = self.nodes[*i];
        *i += 1;
        let own = costs[node.level as usize];
        if node.level == 0 {
            return own;
        }
        let mut sum = 0.0;
        for _ in 0..node.children {
            sum += self.min_value(i, costs);
        }
        own.min(sum)
    }

    /// `N_α` with an optimal cover. Ties go to the larger cube.
    pub fn cover(&self, alpha: f64) -> Result<CoverResult, DimensionError> {
        check_alpha(alpha)?;
        let costs = self.costs(alpha);
        let mut cover = Vec::new();
        let mut i = 0;
        while i < self.nodes.len() {
            let corner = root_corner(self.dim, self.nodes[i].bits as usize);
            self.min_cover(&mut i, corner, &costs, &mut cover);
        }
        let mut hist = vec![0u64; self.shell as usize + 1];
        for q in &cover {
            hist[q.level as usize] += 1;
        }
        Ok(CoverResult { value: cover_cost(&hist, self.shell, alpha), alpha, shell: self.shell, cover })
    }

    fn min_cover(&self, i: &mut usize, corner: [i64; MAX_DIM], costs: &[f64], cover: &mut Vec<DyadicCube>) -> f64 {
        let node = self.nodes[*i];
        *i += 1;
        let own = costs[node.level as usize];
        let cube = DyadicCube { level: node.level as u32, corner: LatticePoint::from_array(corner, self.dim) };
        if node.level == 0 {
            cover.push(cube);
            return own;
        }
        let mark = cover.len();
        let mut sum = 0.0;
        for _ in 0..node.children {
            let child = child_corner(self.dim, &corner, self.nodes[*i].bits as usize);
            sum += self.min_cover(i, child, costs, cover);
        }
        if own <= sum {
            cover.truncate(mark);
            cover.push(cube);
            own
        } else {
            sum
        }
    }
}

/// Exact `N_α(A, S_k)` with an optimal cover. Empty input gives 0.
pub fn n_alpha(cells: &ShellCells, alpha: f64) -> Result<CoverResult, DimensionError> {
    check_alpha(alpha)?;
    CubeTree::from_cells(cells).cover(alpha)
}

/// `N_α(Π_p ∩ S_k)` computed on the survivor tree, without listing the cells.
pub fn n_alpha_lazy_percolation(
    field: &PercolationField,
    p: f64,
    k: u32,
    alpha: f64,
    max_nodes: usize,
) -> Result<CoverResult, DimensionError> {
    check_alpha(alpha)?;
    CubeTree::from_percolation(field, p, k, max_nodes)?.cover(alpha)
}

/// The tail fit at one trial `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSample {
    pub alpha: f64,
    /// Least-squares slope of `log₂ N_α(A, S_k)` against `k`, each value
    /// divided by the cost `n_k 2^{-α}` of the `n_k` occupied roots.
    pub slope: f64,
    pub slope_std_err: f64,
    pub usable_shells: usize,
    pub decaying: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellDiagnostic {
    pub shell: u32,
    pub cells: usize,
    /// `N_α` at the reported estimate.
    pub n_alpha: f64,
}

/// A dimension estimate with its bisection record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub estimate: f64,
    /// The final bisection bracket; the estimate is its midpoint.
    pub bracket: [f64; 2],
    pub alpha_tol: f64,
    /// The shells `[⌈K/2⌉, K]` entering the fits.
    pub window: [u32; 2],
    /// The estimate is at most the lower edge of the grid.
    pub at_floor: bool,
    /// No decay was seen up to `α = d`.
    pub at_ceiling: bool,
    pub curve: Vec<SlopeSample>,
    pub shells: Vec<ShellDiagnostic>,
}

struct Window<'a> {
    trees: Vec<&'a CubeTree>,
    lo: u32,
    hi: u32,
    dim: usize,
    mostly_empty: bool,
}

fn window(trees: &[CubeTree]) -> Result<Window<'_>, DimensionError> {
    let first = trees.first().ok_or(DimensionError::NoShells)?;
    let dim = first.dim;
    let mut seen = std::collections::BTreeSet::new();
    for t in trees {
        if t.dim != dim {
            return Err(DimensionError::DimensionMismatch { expected: dim, got: t.dim });
        }
        if !seen.insert(t.shell) {
            return Err(DimensionError::DuplicateShell(t.shell));
        }
    }
    let hi = trees.iter().map(|t| t.shell).max().expect("nonempty");
    let lo = hi.div_ceil(2);
    let mut in_window: Vec<&CubeTree> = trees.iter().filter(|t| t.shell >= lo).collect();
    in_window.sort_by_key(|t| t.shell);
    let width = (hi - lo + 1) as usize;
    let nonempty = in_window.iter().filter(|t| !t.is_empty()).count();
    let mostly_empty = 2 * (width - nonempty) >= width;
    if !mostly_empty && nonempty < MIN_USABLE_SHELLS {
        return Err(DimensionError::InsufficientData { usable: nonempty, lo, hi });
    }
    Ok(Window { trees: in_window, lo, hi, dim, mostly_empty })
}

impl Window<'_> {
    fn log_values(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let values: Vec<(u32, f64)> = self
            .trees
            .par_iter()
            .filter(|t| !t.is_empty())
            .map(|t| (t.shell, t.value(alpha) / (t.root_count() as f64 * (-alpha).exp2())))
            .collect();
        values.into_iter().filter(|(_, v)| *v > 0.0).map(|(k, v)| (k as f64, v.log2())).unzip()
    }

    fn sample(&self, alpha: f64, envelope: bool, tol: f64) -> SlopeSample {
        let (ks, mut logs) = self.log_values(alpha);
        let fit = fit_line(&ks, &logs).expect("at least four shells");
        let pred = |ks: &[f64], logs: &[f64]| -> bool {
            let f = fit_line(ks, logs).expect("at least four shells");
            decays(f.slope, f.slope_std_err, ks.len(), tol)
        };
        let mut decaying = pred(&ks, &logs);
        if envelope && !decaying {
            // The running minimum tracks the liminf of the tail.
            for i in 1..logs.len() {
                logs[i] = logs[i].min(logs[i - 1]);
            }
            decaying = pred(&ks, &logs);
        }
        SlopeSample { alpha, slope: fit.slope, slope_std_err: fit.slope_std_err, usable_shells: ks.len(), decaying }
    }

    fn diagnostics(&self, alpha: f64) -> Vec<ShellDiagnostic> {
        self.trees
            .iter()
            .map(|t| ShellDiagnostic { shell: t.shell, cells: t.cell_count(), n_alpha: t.value(alpha) })
            .collect()
    }

    fn bisect(&self, upper: f64, alpha_tol: f64, envelope: bool) -> DimEstimate {
        let mut curve = Vec::new();
        let record = |alpha: f64, curve: &mut Vec<SlopeSample>| {
            let s = self.sample(alpha, envelope, alpha_tol);
            curve.push(s);
            s.decaying
        };
        let done = |estimate: f64, bracket: [f64; 2], at_floor, at_ceiling, curve| DimEstimate {
            estimate,
            bracket,
            alpha_tol,
            window: [self.lo, self.hi],
            at_floor,
            at_ceiling,
            curve,
            shells: self.diagnostics(estimate.max(ALPHA_FLOOR)),
        };
        if self.mostly_empty || upper <= ALPHA_FLOOR || record(ALPHA_FLOOR, &mut curve) {
            return done(ALPHA_FLOOR, [0.0, ALPHA_FLOOR], true, false, curve);
        }
        let top = self.dim as f64;
        if upper >= top && !record(top, &mut curve) {
            return done(top, [top, top], false, true, curve);
        }
        let (mut lo, mut hi) = (ALPHA_FLOOR, upper.min(top));
        while hi - lo > alpha_tol {
            let mid = 0.5 * (lo + hi);
            if record(mid, &mut curve) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        done(0.5 * (lo + hi), [lo, hi], false, false, curve)
    }
}

/// A slope decays when it is negative at one-sided 95% significance and
/// steeper than the `α` resolution; flatter decay cannot be told apart from
/// none by a bisection to that tolerance.
fn decays(slope: f64, std_err: f64, points: usize, alpha_tol: f64) -> bool {
    slope < -alpha_tol.max(t_critical(points - 2) * std_err)
}

/// One-sided 95% quantile of Student's t with `df` degrees of freedom.
fn t_critical(df: usize) -> f64 {
    const TABLE: [f64; 10] = [6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860, 1.833, 1.812];
    match df {
        0 => f64::INFINITY,
        1..=10 => TABLE[df - 1],
        11..=20 => 1.76,
        21..=40 => 1.70,
        _ => 1.645,
    }
}

fn check_tol(alpha_tol: f64) -> Result<(), DimensionError> {
    if alpha_tol > 0.0 && alpha_tol.is_finite() {
        Ok(())
    } else {
        Err(DimensionError::BadAlpha(alpha_tol))
    }
}

/// Estimates `Dim(A)` from the trees of `A ∩ S_k`, `k ≤ K`: bisection on `α`
/// for the onset of decay of `N_α(A, S_k)` over `k ∈ [⌈K/2⌉, K]`.
///
/// Each `N_α(A, S_k)` is divided by the cost of covering by the occupied
/// level-`k` roots. The factor lies in `[2^{-α}, 2^{d-α}]`, so convergence of
/// the series is unchanged, but the shell-to-shell noise in the number of
/// occupied roots drops out of the fit. A slope counts as decaying when it
/// is below zero at one-sided 95% significance and steeper than
/// `-alpha_tol`. Empty shells are skipped,
/// and shells absent from `trees` count as empty. A window that is at least
/// half empty reports the lower grid edge.
pub fn dim_hausdorff(trees: &[CubeTree], alpha_tol: f64) -> Result<DimEstimate, DimensionError> {
    check_tol(alpha_tol)?;
    let w = window(trees)?;
    Ok(w.bisect(w.dim as f64, alpha_tol, false))
}

/// Estimates the lower Hausdorff dimension: as [`dim_hausdorff`], but a
/// tail whose running minimum decays also counts as decaying. The search
/// stays below the upper end of the [`dim_hausdorff`] bracket.
pub fn dim_hausdorff_lower(trees: &[CubeTree], alpha_tol: f64) -> Result<DimEstimate, DimensionError> {
    check_tol(alpha_tol)?;
    let w = window(trees)?;
    let upper = w.bisect(w.dim as f64, alpha_tol, false);
    Ok(w.bisect(upper.bracket[1], alpha_tol, true))
}

/// Finite-scale Minkowski dimensions from `card(A ∩ V_n)`, `n = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiDims {
    /// `n⁻¹ log₂ card(A ∩ V_n)`; `None` at `n = 0` and for empty boxes.
    pub sequence: Vec<Option<f64>>,
    /// The tail window `[⌈N/2⌉, N]`.
    pub window: [u32; 2],
    /// Max and min of the sequence over the window.
    pub upper: f64,
    pub lower: f64,
    /// Secant slopes `(log₂ C(n) - log₂ C(b)) / (n - b)` from the base
    /// `b = ⌈N/4⌉`, which cancel the constant in `C(n) ≈ c 2^{γ n}`.
    pub secants: Vec<Option<f64>>,
    pub secant_base: u32,
    /// Max and min of the secants over the window, when any exist.
    pub secant_upper: Option<f64>,
    pub secant_lower: Option<f64>,
}

pub fn minkowski_dims(counts: &[u64]) -> Result<MinkowskiDims, DimensionError> {
    if counts.iter().all(|&c| c == 0) {
        return Err(DimensionError::AllZero);
    }
    if let Some(i) = counts.windows(2).position(|w| w[1] < w[0]) {
        return Err(DimensionError::DecreasingCounts(i + 1));
    }
    let n_max = (counts.len() - 1) as u32;
    let lo = n_max.div_ceil(2).max(1).min(n_max);
    let log = |c: u64| if c > 0 { Some((c as f64).log2()) } else { None };
    let sequence: Vec<Option<f64>> = counts
        .iter()
        .enumerate()
        .map(|(n, &c)| if n == 0 { None } else { log(c).map(|l| l / n as f64) })
        .collect();
    let base = n_max.div_ceil(4);
    let secants: Vec<Option<f64>> = counts
        .iter()
        .enumerate()
        .map(|(n, &c)| {
            let n = n as u32;
            if n <= base {
                return None;
            }
            Some((log(c)? - log(counts[base as usize])?) / (n - base) as f64)
        })
        .collect();
    let tail = |v: &[Option<f64>]| -> Vec<f64> { v[lo as usize..].iter().flatten().copied().collect() };
    let seq_tail = tail(&sequence);
    let sec_tail = tail(&secants);
    let (upper, lower) = if seq_tail.is_empty() {
        (0.0, 0.0)
    } else {
        (seq_tail.iter().copied().fold(f64::MIN, f64::max), seq_tail.iter().copied().fold(f64::MAX, f64::min))
    };
    let fold = |init: f64, f: fn(f64, f64) -> f64| sec_tail.iter().copied().reduce(f).map(|v| f(v, init));
    Ok(MinkowskiDims {
        sequence,
        window: [lo, n_max],
        upper,
        lower,
        secant_upper: fold(f64::MIN, f64::max),
        secant_lower: fold(f64::MAX, f64::min),
        secants,
        secant_base: base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn single_cell_uses_the_unit_cube() {
        for alpha in [0.3, 1.0, 2.5] {
            let cells = ShellCells::new(3, 2, vec![p(&[5, -7])]).unwrap();
            let r = n_alpha(&cells, alpha).unwrap();
            assert_eq!(r.value, (-4.0 * alpha).exp2());
            assert_eq!(r.cover, vec![DyadicCube::containing(&p(&[5, -7]), 0)]);
        }
    }

    #[test]
    fn empty_and_bad_alpha() {
        let cells = ShellCells::new(2, 2, vec![]).unwrap();
        assert_eq!(n_alpha(&cells, 1.0).unwrap().value, 0.0);
        assert!(matches!(n_alpha(&cells, 0.0), Err(DimensionError::BadAlpha(_))));
        assert!(matches!(n_alpha(&cells, f64::NAN), Err(DimensionError::BadAlpha(_))));
        assert!(matches!(ShellCells::new(2, 2, vec![p(&[0, 0])]), Err(DimensionError::WrongShell { .. })));
    }

    #[test]
    fn full_shell_is_covered_by_the_roots_below_dimension() {
        for k in 1..=5 {
            let cells = ShellCells::full(2, k).unwrap();
            let r = n_alpha(&cells, 1.5).unwrap();
            assert_eq!(r.cover.len(), 4);
            assert!(r.cover.iter().all(|q| q.level == k));
            assert!((r.value - 4.0 * (-1.5f64).exp2()).abs() < 1e-12);
            // Above the dimension the unit cells win.
            let r = n_alpha(&cells, 2.5).unwrap();
            assert_eq!(r.cover.len(), cells.len());
        }
    }

    #[test]
    fn cover_contains_every_cell() {
        let cells = ShellCells::new(
            3,
            2,
            vec![p(&[-8, -8]), p(&[-7, -8]), p(&[7, 7]), p(&[4, -1]), p(&[5, -1]), p(&[4, 0])],
        )
        .unwrap();
        for alpha in [0.2, 0.9, 1.7, 2.4] {
            let r = n_alpha(&cells, alpha).unwrap();
            for c in cells.cells() {
                assert!(r.cover.iter().any(|q| q.contains(c)), "{c} uncovered at {alpha}");
            }
            assert!(r.cover.iter().all(|q| q.level <= 3));
            assert_eq!(r.value, cover_cost(&r.histogram(), 3, alpha));
            let plain = CubeTree::from_cells(&cells).value(alpha);
            assert!((plain - r.value).abs() <= 1e-12 * r.value);
        }
    }

    #[test]
    fn lazy_tree_matches_materialized_cells() {
        for seed in 0..10 {
            let f = PercolationField::new(seed, 2).unwrap();
            for k in 0..=7 {
                let cells = f.survivor_cells(0.6, k, usize::MAX).unwrap();
                let sc = ShellCells::new(k, 2, cells).unwrap();
                let a = CubeTree::from_cells(&sc);
                let b = CubeTree::from_percolation(&f, 0.6, k, usize::MAX).unwrap();
                assert_eq!(a, b, "seed {seed} shell {k}");
            }
        }
        let f = PercolationField::new(1, 2).unwrap();
        assert!(matches!(
            CubeTree::from_percolation(&f, 1.0, 6, 100),
            Err(DimensionError::Percolation(PercolationError::Truncated(100)))
        ));
    }

    #[test]
    fn minkowski_of_full_lattice_and_points() {
        let counts: Vec<u64> = (0..=10).map(|n| 1u64 << (2 * (n + 1))).collect();
        let m = minkowski_dims(&counts).unwrap();
        assert!((m.secant_upper.unwrap() - 2.0).abs() < 1e-12);
        assert!((m.secant_lower.unwrap() - 2.0).abs() < 1e-12);
        assert!((m.upper - 2.0 * 6.0 / 5.0).abs() < 1e-12);
        assert!((m.lower - 2.2).abs() < 1e-12);
        let ones: Vec<u64> = (0..=12).map(|n| n + 1).collect();
        let m = minkowski_dims(&ones).unwrap();
        assert!(m.upper < 0.5 && m.secant_upper.unwrap() < 0.3);
        assert!(matches!(minkowski_dims(&[0, 0]), Err(DimensionError::AllZero)));
        assert!(matches!(minkowski_dims(&[1, 3, 2]), Err(DimensionError::DecreasingCounts(2))));
    }

    fn full_trees(d: usize, k_max: u32) -> Vec<CubeTree> {
        (0..=k_max).map(|k| CubeTree::from_cells(&ShellCells::full(d, k).unwrap())).collect()
    }

    #[test]
    fn dimension_of_the_plane() {
        let trees = full_trees(2, 9);
        let e = dim_hausdorff(&trees, 0.02).unwrap();
        assert!((e.estimate - 2.0).abs() < 0.1, "{e:?}");
        let l = dim_hausdorff_lower(&trees, 0.02).unwrap();
        assert!((l.estimate - 2.0).abs() < 0.1, "{l:?}");
    }

    #[test]
    fn one_point_per_shell_is_zero_dimensional() {
        let trees: Vec<CubeTree> = (0..=12)
            .map(|k| {
                let x = if k == 0 { p(&[0, 0]) } else { p(&[1 << (k - 1), 0]) };
                CubeTree::from_cells(&ShellCells::new(k, 2, vec![x]).unwrap())
            })
            .collect();
        let e = dim_hausdorff(&trees, 0.02).unwrap();
        // Decay at rate α is resolved once α exceeds the tolerance.
        assert!(e.estimate <= ALPHA_FLOOR + 0.04, "{e:?}");
        let l = dim_hausdorff_lower(&trees, 0.02).unwrap();
        assert!(l.estimate <= ALPHA_FLOOR + 0.04);
    }

    #[test]
    fn too_few_shells() {
        let trees = full_trees(2, 5);
        assert!(matches!(dim_hausdorff(&trees, 0.02), Err(DimensionError::InsufficientData { .. })));
        assert!(matches!(dim_hausdorff(&[], 0.02), Err(DimensionError::NoShells)));
    }

    #[test]
    fn shell_csv_round_trip() {
        let text = "k,x1,x2\n1,1,-2\n1,-2,0\n0,0,0\n";
        let shells = read_shell_csv(text.as_bytes(), 2).unwrap();
        assert_eq!(shells.len(), 2);
        assert_eq!(shells[1].cells(), &[p(&[-2, 0]), p(&[1, -2])]);
        assert!(read_shell_csv("k,x\n1,2,3\n".as_bytes(), 1).is_err());
    }
}

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{killed, run_walk, spectral, walk_rng, BoundingBox, Preset, StepDistribution, WalkEnd, WalkError};
use crate::lattice::{box_points, cube_range, order_cmp, shell_of, LatticePoint, MAX_DIM};
use crate::stats::{fit_line, Estimate};

/// How a [`GreenTable`] was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GreenMethod {
    /// Mean visit counts over `walks` paths of `horizon` steps, optionally
    /// killed on leaving `[-kill_radius, kill_radius]^d`.
    MonteCarlo { walks: u64, horizon: u64, kill_radius: Option<i64>, seed: u64 },
    /// The Green function of the walk killed on leaving `[-box_radius, box_radius]^d`,
    /// i.e. the full series `Σ_n P_B^n δ_0`, by conjugate gradients on `(I - P_B) g = δ_0`.
    Convolution { box_radius: i64, tolerance: f64, max_iterations: usize },
    /// The periodic Green function on `(Z/period)^d` by FFT, with the zero
    /// mode, the uniform background and the image constant removed.
    Spectral { period: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GreenDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_visits_half_horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_visits_full_horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walks_at_horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walks_killed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_residual: Option<f64>,
    /// `g_B(0,0) - g_{B/2}(0,0)`, the mass the half box loses to the exterior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exterior_remainder: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_constant: Option<f64>,
    pub caveats: Vec<String>,
}

/// Region argument of [`GreenFunction::potential`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Box(u32),
    Shell(u32),
    Points(Vec<LatticePoint>),
}

/// A Green function oracle `g(x, y)` with standard errors.
pub trait GreenFunction: Sync {
    fn dim(&self) -> usize;

    /// `g(0, v)` and its standard error.
    fn g0(&self, v: &LatticePoint) -> Option<(f64, f64)>;

    /// `g(x, y)`; translation invariance gives `g(0, y - x)`.
    fn g(&self, x: &LatticePoint, y: &LatticePoint) -> Option<(f64, f64)> {
        self.g0(&(*y - *x))
    }

    /// `U(A) = Σ_{x∈A} g(0, x)`; errors add linearly.
    fn potential(&self, region: &Region) -> Result<Estimate, WalkError> {
        let d = self.dim();
        let mut value = 0.0;
        let mut err = 0.0;
        let mut add = |x: &LatticePoint| -> Result<(), WalkError> {
            let (g, e) = self.g0(x).ok_or(WalkError::MissingGreen(*x))?;
            value += g;
            err += e;
            Ok(())
        };
        match region {
            Region::Box(n) => box_points(d, *n).try_for_each(|x| add(&x))?,
            Region::Shell(k) => box_points(d, *k).filter(|x| shell_of(x) == *k).try_for_each(|x| add(&x))?,
            Region::Points(pts) => pts.iter().try_for_each(add)?,
        }
        Ok(Estimate::new(value, err))
    }
}

/// Estimated `g(0, ·)` on the box `[-radius, radius]^d` plus optional extra points.
#[derive(Clone, Debug)]
pub struct GreenTable {
    d: usize,
    preset: Preset,
    method: GreenMethod,
    radius: i64,
    estimate: Vec<f64>,
    std_err: Vec<f64>,
    extras: HashMap<LatticePoint, (f64, f64)>,
    box_occupation: Vec<Estimate>,
    shell_occupation: Vec<Estimate>,
    diagnostics: GreenDiagnostics,
}

/// JSON sidecar written next to a table's CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenSidecar {
    pub d: usize,
    pub preset: Preset,
    pub method: GreenMethod,
    pub radius: i64,
    pub box_occupation: Vec<Estimate>,
    pub shell_occupation: Vec<Estimate>,
    pub diagnostics: GreenDiagnostics,
}

fn box_index(x: &LatticePoint, r: i64) -> Option<usize> {
    let side = 2 * r + 1;
    let mut idx = 0i64;
    for &c in x.coords().iter().rev() {
        if c < -r || c > r {
            return None;
        }
        idx = idx * side + (c + r);
    }
    Some(idx as usize)
}

fn box_len(d: usize, r: i64) -> usize {
    (2 * r as usize + 1).pow(d as u32)
}

impl GreenTable {
    pub(super) fn from_box(
        dist: &StepDistribution,
        method: GreenMethod,
        radius: i64,
        estimate: Vec<f64>,
        std_err: Vec<f64>,
        diagnostics: GreenDiagnostics,
    ) -> Self {
        Self {
            d: dist.dim(),
            preset: dist.preset().clone(),
            method,
            radius,
            estimate,
            std_err,
            extras: HashMap::new(),
            box_occupation: Vec::new(),
            shell_occupation: Vec::new(),
            diagnostics,
        }
    }

    pub fn preset(&self) -> &Preset {
        &self.preset
    }

    pub fn method(&self) -> &GreenMethod {
        &self.method
    }

    /// Half-width of the dense box.
    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn diagnostics(&self) -> &GreenDiagnostics {
        &self.diagnostics
    }

    /// Whether `g(x, y) = g(0, y - x)` holds for this table. Killed walks break it.
    pub fn translation_invariant(&self) -> bool {
        match self.method {
            GreenMethod::MonteCarlo { kill_radius, .. } => kill_radius.is_none(),
            GreenMethod::Convolution { .. } => false,
            GreenMethod::Spectral { .. } => true,
        }
    }

    /// Per-walk exact estimates of the occupation time of `V_n`, for the
    /// boxes inside the table (Monte Carlo tables only).
    pub fn box_occupation(&self) -> &[Estimate] {
        &self.box_occupation
    }

    pub fn shell_occupation(&self) -> &[Estimate] {
        &self.shell_occupation
    }

    /// All stored entries: the box in row-major order, then extras in forest order.
    pub fn entries(&self) -> Vec<(LatticePoint, f64, f64)> {
        let mut out: Vec<_> = cube_range(self.d, -self.radius, self.radius + 1)
            .map(|x| {
                let i = box_index(&x, self.radius).expect("inside box");
                (x, self.estimate[i], self.std_err[i])
            })
            .collect();
        let mut extra: Vec<_> = self.extras.iter().map(|(x, (g, e))| (*x, *g, *e)).collect();
        extra.sort_by(|a, b| order_cmp(&a.0, &b.0));
        out.extend(extra);
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), WalkError> {
        let mut header: Vec<String> = (1..=self.d).map(|i| format!("x{i}")).collect();
        header.push("estimate".into());
        header.push("std_err".into());
        writeln!(w, "{}", header.join(","))?;
        for (x, g, e) in self.entries() {
            for c in x.coords() {
                write!(w, "{c},")?;
            }
            writeln!(w, "{g},{e}")?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> GreenSidecar {
        GreenSidecar {
            d: self.d,
            preset: self.preset.clone(),
            method: self.method.clone(),
            radius: self.radius,
            box_occupation: self.box_occupation.clone(),
            shell_occupation: self.shell_occupation.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn read_csv<R: BufRead>(reader: R, sidecar: GreenSidecar) -> Result<Self, WalkError> {
        let d = sidecar.d;
        let r = sidecar.radius;
        if d == 0 || d > MAX_DIM || r < 0 {
            return Err(WalkError::Parse(format!("bad sidecar dimension {d} or radius {r}")));
        }
        let n = box_len(d, r);
        let mut estimate = vec![f64::NAN; n];
        let mut std_err = vec![f64::NAN; n];
        let mut extras = HashMap::new();
        let mut lines = reader.lines();
        lines.next().transpose()?.ok_or_else(|| WalkError::Parse("missing header".into()))?;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || WalkError::Parse(format!("line {}: {line:?}", lineno + 2));
            if fields.len() != d + 2 {
                return Err(bad());
            }
            let coords: Vec<i64> = fields[..d].iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
            let g: f64 = fields[d].parse().map_err(|_| bad())?;
            let e: f64 = fields[d + 1].parse().map_err(|_| bad())?;
            let x = LatticePoint::new(&coords)?;
            match box_index(&x, r) {
                Some(i) => {
                    estimate[i] = g;
                    std_err[i] = e;
                }
                None => {
                    extras.insert(x, (g, e));
                }
            }
        }
        if estimate.iter().any(|v| v.is_nan()) {
            return Err(WalkError::Parse("box entries missing".into()));
        }
        Ok(Self {
            d,
            preset: sidecar.preset,
            method: sidecar.method,
            radius: r,
            estimate,
            std_err,
            extras,
            box_occupation: sidecar.box_occupation,
            shell_occupation: sidecar.shell_occupation,
            diagnostics: sidecar.diagnostics,
        })
    }
}

impl GreenFunction for GreenTable {
    fn dim(&self) -> usize {
        self.d
    }

    fn g0(&self, v: &LatticePoint) -> Option<(f64, f64)> {
        if v.dim() != self.d {
            return None;
        }
        match box_index(v, self.radius) {
            Some(i) => Some((self.estimate[i], self.std_err[i])),
            None => self.extras.get(v).copied(),
        }
    }

    fn g(&self, x: &LatticePoint, y: &LatticePoint) -> Option<(f64, f64)> {
        if self.translation_invariant() || x.coords().iter().all(|&c| c == 0) {
            self.g0(&(*y - *x))
        } else {
            None
        }
    }

    fn potential(&self, region: &Region) -> Result<Estimate, WalkError> {
        let from_walks = match region {
            Region::Box(n) => self.box_occupation.get(*n as usize),
            Region::Shell(k) => self.shell_occupation.get(*k as usize),
            Region::Points(_) => None,
        };
        if let Some(e) = from_walks {
            return Ok(*e);
        }
        let d = self.d;
        let mut value = 0.0;
        let mut err = 0.0;
        let mut add = |x: &LatticePoint| -> Result<(), WalkError> {
            let (g, e) = self.g0(x).ok_or(WalkError::MissingGreen(*x))?;
            value += g;
            err += e;
            Ok(())
        };
        match region {
            Region::Box(n) => box_points(d, *n).try_for_each(|x| add(&x))?,
            Region::Shell(k) => box_points(d, *k).filter(|x| shell_of(x) == *k).try_for_each(|x| add(&x))?,
            Region::Points(pts) => pts.iter().try_for_each(add)?,
        }
        Ok(Estimate::new(value, err))
    }
}

/// Estimates `g(0, ·)` on `[-radius, radius]^d` and at `extras`.
pub fn green_estimate(
    dist: &StepDistribution,
    radius: i64,
    extras: &[LatticePoint],
    method: &GreenMethod,
) -> Result<GreenTable, WalkError> {
    if radius < 0 {
        return Err(WalkError::BadParameter(format!("table radius {radius} is negative")));
    }
    match *method {
        GreenMethod::MonteCarlo { walks, horizon, kill_radius, seed } => {
            monte_carlo(dist, radius, extras, walks, horizon, kill_radius, seed, method.clone())
        }
        GreenMethod::Convolution { box_radius, tolerance, max_iterations } => {
            if radius > box_radius {
                return Err(WalkError::BadParameter(format!(
                    "table radius {radius} exceeds the killing box {box_radius}"
                )));
            }
            let full = killed::killed_green(dist, box_radius, tolerance, max_iterations)?;
            let half = killed::killed_green(dist, box_radius / 2, tolerance, max_iterations)?;
            let mut diagnostics = GreenDiagnostics {
                iterations: Some(full.iterations),
                relative_residual: Some(full.relative_residual),
                exterior_remainder: Some(full.at(&LatticePoint::origin(dist.dim())?) - half.at(&LatticePoint::origin(dist.dim())?)),
                ..Default::default()
            };
            diagnostics.caveats.push(format!(
                "values are for the walk killed on leaving [-{box_radius},{box_radius}]^d"
            ));
            let pts: Vec<LatticePoint> = cube_range(dist.dim(), -radius, radius + 1).collect();
            let mut estimate = vec![0.0; pts.len()];
            let mut std_err = vec![0.0; pts.len()];
            for x in &pts {
                let i = box_index(x, radius).expect("inside box");
                estimate[i] = full.at(x);
                std_err[i] = full.relative_residual * full.at(x).abs().max(1.0);
            }
            let mut t = GreenTable::from_box(dist, method.clone(), radius, estimate, std_err, diagnostics);
            for x in extras {
                if x.norm_inf() <= box_radius {
                    t.extras.insert(*x, (full.at(x), full.relative_residual));
                } else {
                    t.extras.insert(*x, (0.0, 0.0));
                }
            }
            Ok(t)
        }
        GreenMethod::Spectral { period } => {
            let s = spectral::spectral_green(dist, period, radius)?;
            let diagnostics = GreenDiagnostics {
                image_constant: Some(s.image_constant),
                caveats: vec![format!("periodic images on (Z/{period})^d removed to leading order")],
                ..Default::default()
            };
            let mut extra = HashMap::new();
            for x in extras {
                if box_index(x, radius).is_none() {
                    extra.insert(*x, s.lookup(x).ok_or(WalkError::MissingGreen(*x))?);
                }
            }
            let mut t = GreenTable::from_box(dist, method.clone(), radius, s.estimate, s.std_err, diagnostics);
            t.extras = extra;
            Ok(t)
        }
    }
}

#[derive(Clone)]
struct McTally {
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
    shell_sum: Vec<u64>,
    shell_sq: Vec<u128>,
    box_sum: Vec<u64>,
    box_sq: Vec<u128>,
    origin_half: u64,
    at_horizon: u64,
    killed: u64,
}

impl McTally {
    fn new(n: usize, shells: usize) -> Self {
        Self {
            sum: vec![0; n],
            sum_sq: vec![0; n],
            shell_sum: vec![0; shells],
            shell_sq: vec![0; shells],
            box_sum: vec![0; shells],
            box_sq: vec![0; shells],
            origin_half: 0,
            at_horizon: 0,
            killed: 0,
        }
    }

    fn merge(&mut self, o: &McTally) {
        for (a, b) in self.sum.iter_mut().zip(&o.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&o.sum_sq) {
            *a += b;
        }
        for i in 0..self.shell_sum.len() {
            self.shell_sum[i] += o.shell_sum[i];
            self.shell_sq[i] += o.shell_sq[i];
            self.box_sum[i] += o.box_sum[i];
            self.box_sq[i] += o.box_sq[i];
        }
        self.origin_half += o.origin_half;
        self.at_horizon += o.at_horizon;
        self.killed += o.killed;
    }
}

#[allow(clippy::too_many_arguments)]
fn monte_carlo(
    dist: &StepDistribution,
    radius: i64,
    extras: &[LatticePoint],
    walks: u64,
    horizon: u64,
    kill: Option<i64>,
    seed: u64,
    method: GreenMethod,
) -> Result<GreenTable, WalkError> {
    if walks < 2 {
        return Err(WalkError::BadParameter("Monte Carlo needs at least two walks".into()));
    }
    let d = dist.dim();
    let n_box = box_len(d, radius);
    let extra_index: HashMap<LatticePoint, usize> = extras
        .iter()
        .filter(|x| box_index(x, radius).is_none())
        .enumerate()
        .map(|(i, x)| (*x, n_box + i))
        .collect::<HashMap<_, _>>();
    let n_targets = n_box + extra_index.len();
    let mut watch = BoundingBox::centered(d, radius);
    if let Some(b) = BoundingBox::of_points(&extra_index.keys().copied().collect::<Vec<_>>()) {
        watch = watch.union(&b);
    }
    // Shells S_k with V_k inside the dense box.
    let n_shells = if radius >= 1 { (63 - (radius as u64).leading_zeros()) as usize + 1 } else { 0 };
    let origin = LatticePoint::origin(d)?;
    let origin_idx = box_index(&origin, radius).expect("origin in box");
    let half = horizon / 2;

    let chunk = 1024u64;
    let partials: Vec<McTally> = (0..walks.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut tally = McTally::new(n_targets, n_shells);
            let mut counts = vec![0u32; n_targets];
            let mut touched: Vec<usize> = Vec::new();
            let mut occ = vec![0u64; n_shells];
            for w in (c * chunk)..((c + 1) * chunk).min(walks) {
                let mut rng = walk_rng(seed, w);
                occ.iter_mut().for_each(|o| *o = 0);
                let end = run_walk(dist, &mut rng, origin, horizon, kill, &watch, |x, t| {
                    let idx = box_index(x, radius).or_else(|| extra_index.get(x).copied());
                    if let Some(i) = idx {
                        if counts[i] == 0 {
                            touched.push(i);
                        }
                        counts[i] += 1;
                        if i == origin_idx && t <= half {
                            tally.origin_half += 1;
                        }
                        let k = shell_of(x) as usize;
                        if k < n_shells {
                            occ[k] += 1;
                        }
                    }
                    ControlFlow::Continue(())
                });
                match end {
                    WalkEnd::Horizon => tally.at_horizon += 1,
                    WalkEnd::Killed => tally.killed += 1,
                    WalkEnd::Stopped => {}
                }
                for &i in &touched {
                    let v = counts[i] as u64;
                    tally.sum[i] += v;
                    tally.sum_sq[i] += (v * v) as u128;
                    counts[i] = 0;
                }
                touched.clear();
                let mut cumulative = 0u64;
                for k in 0..n_shells {
                    cumulative += occ[k];
                    tally.shell_sum[k] += occ[k];
                    tally.shell_sq[k] += (occ[k] * occ[k]) as u128;
                    tally.box_sum[k] += cumulative;
                    tally.box_sq[k] += (cumulative * cumulative) as u128;
                }
            }
            tally
        })
        .collect();
    let mut total = McTally::new(n_targets, n_shells);
    for p in &partials {
        total.merge(p);
    }

    let late = total.sum[origin_idx] as f64 / walks as f64;
    let early = total.origin_half as f64 / walks as f64;
    if late > 0.0 && (late - early) / late > 0.01 {
        return Err(WalkError::NonTransient { early, late });
    }
    let est = |s: u64, q: u128| Estimate::from_moments(walks, s as f64, q as f64);
    let mut estimate = vec![0.0; n_box];
    let mut std_err = vec![0.0; n_box];
    for i in 0..n_box {
        let e = est(total.sum[i], total.sum_sq[i]);
        estimate[i] = e.value;
        std_err[i] = e.std_err;
    }
    let mut diagnostics = GreenDiagnostics {
        origin_visits_half_horizon: Some(early),
        origin_visits_full_horizon: Some(late),
        walks_at_horizon: Some(total.at_horizon),
        walks_killed: Some(total.killed),
        ..Default::default()
    };
    if total.at_horizon > 0 {
        diagnostics.caveats.push(format!(
            "{} of {walks} walks were cut at horizon {horizon}; visits after it are not counted",
            total.at_horizon
        ));
    }
    if let Some(l) = kill {
        diagnostics.caveats.push(format!("values are for the walk killed on leaving [-{l},{l}]^d"));
    }
    let mut table = GreenTable::from_box(dist, method, radius, estimate, std_err, diagnostics);
    for (x, &i) in &extra_index {
        let e = est(total.sum[i], total.sum_sq[i]);
        table.extras.insert(*x, (e.value, e.std_err));
    }
    table.shell_occupation = (0..n_shells).map(|k| est(total.shell_sum[k], total.shell_sq[k])).collect();
    table.box_occupation = (0..n_shells).map(|k| est(total.box_sum[k], total.box_sq[k])).collect();
    Ok(table)
}

/// Power law `g(0, x) ≈ A ‖x‖₂^{-β}` fitted to table entries with
/// `r_lo ≤ ‖x‖₂ ≤ r_hi`. Returns `(A, β, max relative misfit)`.
pub fn fit_far_field(table: &GreenTable, r_lo: f64, r_hi: f64) -> Result<(f64, f64, f64), WalkError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, g, _) in table.entries() {
        let r = x.norm2();
        if r >= r_lo && r <= r_hi && g > 0.0 {
            xs.push(r.ln());
            ys.push(g.ln());
        }
    }
    let fit = fit_line(&xs, &ys)
        .ok_or_else(|| WalkError::BadParameter(format!("no usable entries in [{r_lo}, {r_hi}]")))?;
    let misfit = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (fit.intercept + fit.slope * x - y).exp_m1().abs())
        .fold(0.0, f64::max);
    Ok((fit.intercept.exp(), -fit.slope, misfit))
}

/// A translation-invariant table extended beyond its box by a fitted power law.
#[derive(Clone, Debug)]
pub struct ExtendedGreen {
    table: GreenTable,
    pub amplitude: f64,
    pub exponent: f64,
    pub relative_error: f64,
    fit_from: f64,
}

impl ExtendedGreen {
    /// Fits the far field on `[R/2, R]` with `R` the table radius.
    pub fn new(table: GreenTable) -> Result<Self, WalkError> {
        if !table.translation_invariant() {
            return Err(WalkError::BadParameter("far-field extension needs a translation-invariant table".into()));
        }
        let r = table.radius() as f64;
        let (amplitude, exponent, misfit) = fit_far_field(&table, r / 2.0, r)?;
        let table_rel = table
            .entries()
            .iter()
            .filter(|(x, g, _)| x.norm2() >= r / 2.0 && *g > 0.0)
            .map(|(_, g, e)| e / g)
            .fold(0.0, f64::max);
        Ok(Self { table, amplitude, exponent, relative_error: misfit + table_rel, fit_from: r / 2.0 })
    }

    pub fn table(&self) -> &GreenTable {
        &self.table
    }
}

impl GreenFunction for ExtendedGreen {
    fn dim(&self) -> usize {
        self.table.dim()
    }

    fn g0(&self, v: &LatticePoint) -> Option<(f64, f64)> {
        if let Some(e) = self.table.g0(v) {
            return Some(e);
        }
        let r = v.norm2();
        if v.dim() != self.table.dim() || r < self.fit_from {
            return None;
        }
        let g = self.amplitude * r.powf(-self.exponent);
        Some((g, g * self.relative_error))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn box_index_layout() {
        let r = 2;
        let pts: Vec<_> = cube_range(2, -r, r + 1).collect();
        let idx: Vec<_> = pts.iter().map(|x| box_index(x, r).unwrap()).collect();
        let mut sorted = idx.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 25);
        assert_eq!(box_index(&p(&[3, 0]), 2), None);
    }

    #[test]
    fn monte_carlo_small() {
        let s = StepDistribution::srw(3).unwrap();
        let m = GreenMethod::MonteCarlo { walks: 20_000, horizon: 20_000, kill_radius: None, seed: 3 };
        let t = green_estimate(&s, 3, &[p(&[0, 0, 6])], &m).unwrap();
        let (g00, e00) = t.g0(&p(&[0, 0, 0])).unwrap();
        assert!((g00 - 1.5164).abs() < 4.0 * e00 + 0.01, "{g00} ± {e00}");
        for (x, g, e) in t.entries() {
            assert!(g <= g00 + 3.0 * e.max(e00), "{x}");
        }
        let (a, ea) = t.g0(&p(&[1, 0, 0])).unwrap();
        let (b, eb) = t.g0(&p(&[-1, 0, 0])).unwrap();
        assert!((a - b).abs() < 4.0 * (ea * ea + eb * eb).sqrt());
        assert!(t.g0(&p(&[0, 0, 6])).is_some());
        let u1 = t.potential(&Region::Box(1)).unwrap();
        let u1_sum = GreenFunction::potential(&PlainSum(&t), &Region::Box(1)).unwrap();
        assert!((u1.value - u1_sum.value).abs() < 1e-9);
        assert!(u1.std_err <= u1_sum.std_err);
    }

    struct PlainSum<'a>(&'a GreenTable);
    impl GreenFunction for PlainSum<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn g0(&self, v: &LatticePoint) -> Option<(f64, f64)> {
            self.0.g0(v)
        }
    }

    #[test]
    fn recurrent_law_is_refused() {
        let e = LatticePoint::new(&[1]).unwrap();
        let s = StepDistribution::from_support(1, vec![(e, 0.5), (-e, 0.5)]).unwrap();
        let m = GreenMethod::MonteCarlo { walks: 2000, horizon: 4000, kill_radius: None, seed: 1 };
        assert!(matches!(green_estimate(&s, 2, &[], &m), Err(WalkError::NonTransient { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let s = StepDistribution::srw(3).unwrap();
        let m = GreenMethod::MonteCarlo { walks: 500, horizon: 1000, kill_radius: Some(10), seed: 1 };
        let t = green_estimate(&s, 1, &[p(&[0, 0, 4])], &m).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,estimate,std_err\n"));
        let json = serde_json::to_string(&t.sidecar()).unwrap();
        let back = GreenTable::read_csv(&buf[..], serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.entries(), t.entries());
        assert_eq!(back.sidecar(), t.sidecar());
        assert!(GreenTable::read_csv(&b"h\n1,2\n"[..], t.sidecar()).is_err());
    }
}

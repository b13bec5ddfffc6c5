//! The experiment subcommands. Each is a pure function of its config.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{LoadedConfig, Tolerances};
use super::report::{Artifact, CommandOutput, Measurement, Report, ResultRecord};
use super::CliError;
use crate::capacity::{
    cp_capacity, p_c_estimate, recurrence_test, shell_capacities, CapacityOptions, KernelMode, ShellFamily,
};
use crate::dimension::{dim_hausdorff, minkowski_dims, CubeTree, ShellCells, DEFAULT_ALPHA_TOL};
use crate::hashing::derive_seed;
use crate::lattice::{delta, shell_cardinality, LatticePoint, MAX_DIM};
use crate::percolation::{
    galton_watson_survival, galton_watson_survival_exact, write_survivor_csv, PercolationField, MAX_RASTER_SHELL,
};
use crate::stats::Estimate;
use crate::walk::{
    green_estimate, percolated_hit_mc, sample_path, walk_rng, ExtendedGreen, GreenFunction,
    GreenTable, Preset, StepDistribution, WATSON_SRW3,
};

/// Default cap on listed survivor cells.
pub const DEFAULT_MAX_CELLS: usize = 1 << 22;
/// Default cap on cube-tree nodes per shell.
pub const DEFAULT_MAX_NODES: usize = 1 << 25;
/// Default escape radius of joint walk × percolation trials.
pub const DEFAULT_ESCAPE: i64 = 128;
/// Default horizon of hitting trials; the escape radius ends walks first.
pub const DEFAULT_HORIZON: u64 = 1 << 40;

fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as u64;
    Estimate::from_moments(n, xs.iter().sum(), xs.iter().map(|x| x * x).sum())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `occupied[t][k]`: whether `Π_p ∩ S_k` is nonempty in trial `t`.
pub(crate) fn shell_occupancy(d: usize, p: f64, k_max: u32, trials: u64, seed: u64) -> Result<Vec<Vec<bool>>, CliError> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let field = PercolationField::for_trial(seed, t, d)?;
            (0..=k_max).map(|k| Ok(field.shell_nonempty(p, k)?)).collect()
        })
        .collect()
}

/// Largest nonempty shell per trial, `-1` when all are empty.
pub(crate) fn max_nonempty(occupied: &[Vec<bool>]) -> Vec<f64> {
    occupied.iter().map(|row| row.iter().rposition(|&b| b).map_or(-1.0, |k| k as f64)).collect()
}

/// Fraction of the shells `lo..=hi` that are nonempty in at least half the trials.
pub(crate) fn typically_occupied(occupied: &[Vec<bool>], lo: u32, hi: u32) -> f64 {
    let n = occupied.len() as f64;
    let good = (lo..=hi)
        .filter(|&k| {
            let hits = occupied.iter().filter(|row| row[k as usize]).count() as f64;
            hits >= 0.5 * n
        })
        .count();
    good as f64 / (hi - lo + 1) as f64
}

/// `(d + log₂ p)⁺`.
pub fn percolation_dimension(d: usize, p: f64) -> f64 {
    (d as f64 + p.log2()).max(0.0)
}

/// Per-trial `Dim(Π_p)` estimates from shells `0..=k_max`.
pub(crate) fn dim_perc_runs(
    d: usize,
    p: f64,
    k_max: u32,
    trials: u64,
    seed: u64,
    alpha_tol: f64,
    max_nodes: usize,
) -> Result<Vec<crate::dimension::DimEstimate>, CliError> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let field = PercolationField::for_trial(seed, t, d)?;
            let trees = (0..=k_max)
                .map(|k| CubeTree::from_percolation(&field, p, k, max_nodes))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(dim_hausdorff(&trees, alpha_tol)?)
        })
        .collect()
}

/// Dimension estimates of one walk range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeDims {
    pub path: u64,
    /// Largest shell the path visits.
    pub k_max: u32,
    /// Shells `0..=k_used` enter the estimates.
    pub k_used: u32,
    pub range_size: usize,
    pub minkowski_upper: f64,
    pub minkowski_lower: f64,
    pub secant_upper: f64,
    pub secant_lower: f64,
    pub hausdorff: f64,
}

/// Simulates `paths` walks of `steps` steps from the origin and estimates
/// the dimensions of each range. The outermost visited shell is only partly
/// explored, so estimates use shells up to `k_max - 1`.
pub(crate) fn range_dims(
    dist: &StepDistribution,
    steps: u64,
    paths: u64,
    seed: u64,
    alpha_tol: f64,
) -> Result<Vec<RangeDims>, CliError> {
    let d = dist.dim();
    let origin = LatticePoint::origin(d).map_err(crate::walk::WalkError::from)?;
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let w = sample_path(dist, origin, steps, derive_seed(seed, i));
            let k_max = w.shells.keys().next_back().copied().unwrap_or(0);
            let mut r = RangeDims {
                path: i,
                k_max,
                k_used: k_max.saturating_sub(1),
                range_size: w.range.len(),
                minkowski_upper: 0.0,
                minkowski_lower: 0.0,
                secant_upper: 0.0,
                secant_lower: 0.0,
                hausdorff: 0.0,
            };
            if r.k_used < 2 {
                return Ok(r);
            }
            let m = minkowski_dims(&w.box_counts(r.k_used))?;
            r.minkowski_upper = m.upper;
            r.minkowski_lower = m.lower;
            r.secant_upper = m.secant_upper.unwrap_or(m.upper);
            r.secant_lower = m.secant_lower.unwrap_or(m.lower);
            let trees = (0..=r.k_used)
                .map(|k| {
                    let cells = ShellCells::new(k, d, w.shells.get(&k).cloned().unwrap_or_default())?;
                    Ok(CubeTree::from_cells(&cells))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            r.hausdorff = dim_hausdorff(&trees, alpha_tol)?.estimate;
            Ok(r)
        })
        .collect()
}

/// Limits predicted for the range of a walk: `(γ_c, Dim)`.
pub fn range_targets(preset: &Preset) -> Option<(f64, f64)> {
    match *preset {
        Preset::Srw { d } if d >= 3 => Some((2.0, 2.0)),
        Preset::HeavyTail { d, alpha, .. } if (d as f64) > alpha.min(2.0) => {
            Some((alpha.min(2.0), alpha.min(2.0)))
        }
        _ => None,
    }
}

/// One sandwich comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichCase {
    pub set: usize,
    pub size: usize,
    pub p: f64,
    pub capacity: Estimate,
    pub hit: Estimate,
    pub escaped: u64,
    pub truncated: u64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
    pub certified: bool,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn sandwich_case<G: GreenFunction + ?Sized>(
    dist: &StepDistribution,
    green: &G,
    a: &LatticePoint,
    f: &[LatticePoint],
    set: usize,
    p: f64,
    trials: u64,
    seed: u64,
    escape: i64,
    horizon: u64,
    sigma: f64,
) -> Result<SandwichCase, CliError> {
    let opts = CapacityOptions { seed, ..CapacityOptions::default() };
    let c = cp_capacity(f, a, p, green, &opts)?;
    let h = percolated_hit_mc(dist, *a, f, p, horizon, trials, seed, Some(escape))?;
    // Binomial σ at the bound itself, so that zero hits still carry an error.
    let at = |b: f64| (b.clamp(0.0, 1.0) * (1.0 - b.clamp(0.0, 1.0)) / trials as f64).sqrt();
    let lower = 0.5 * c.value - sigma * at(0.5 * c.value).hypot(0.5 * c.std_err);
    let upper = 128.0 * c.value + sigma * at(128.0 * c.value).hypot(128.0 * c.std_err);
    let v = h.probability.value;
    Ok(SandwichCase {
        set,
        size: c.minimizer.len(),
        p,
        capacity: Estimate::new(c.value, c.std_err),
        hit: h.probability,
        escaped: h.escaped,
        truncated: h.truncated,
        lower,
        upper,
        holds: lower <= v && v <= upper,
        certified: c.diagnostics.certified,
    })
}

/// `size` distinct uniform points of `V_n`, sorted.
pub(crate) fn random_set<R: Rng>(rng: &mut R, d: usize, n: u32, size: usize) -> Vec<LatticePoint> {
    let r = 1i64 << n;
    let size = size.min((2 * r as usize).pow(d as u32));
    let mut set = std::collections::BTreeSet::new();
    while set.len() < size {
        let mut c = [0i64; MAX_DIM];
        for x in c.iter_mut().take(d) {
            *x = rng.random_range(-r..r);
        }
        set.insert(c);
    }
    set.into_iter().map(|c| LatticePoint::new(&c[..d]).expect("valid point")).collect()
}

/// Kolmogorov's constant `2/σ²` for `Binomial(2^d, 2^{-d})` offspring.
pub fn kolmogorov_target(d: usize) -> f64 {
    2.0 / (1.0 - (-(d as f64)).exp2())
}

fn walk_of(l: &LoadedConfig) -> Result<StepDistribution, CliError> {
    let preset = l.require("walk", &l.config.walk)?;
    StepDistribution::from_preset(&preset).map_err(|e| l.invalid("walk", e))
}

fn green_table(l: &LoadedConfig, dist: &StepDistribution) -> Result<GreenTable, CliError> {
    let method = l.require("green", &l.config.green)?;
    let radius = l.require("radius", &l.config.radius)?;
    green_estimate(dist, radius, &[], &method).map_err(|e| l.invalid("green", e))
}

fn extended_green(l: &LoadedConfig, dist: &StepDistribution) -> Result<ExtendedGreen, CliError> {
    ExtendedGreen::new(green_table(l, dist)?).map_err(|e| l.invalid("green", e))
}

fn start_of(l: &LoadedConfig, d: usize) -> Result<LatticePoint, CliError> {
    match l.config.start {
        Some(a) if a.dim() != d => Err(l.invalid("start", format!("point {a} is not in dimension {d}"))),
        Some(a) => Ok(a),
        None => Ok(LatticePoint::origin(d).expect("valid dimension")),
    }
}

fn output(command: &str, l: &LoadedConfig, records: Vec<ResultRecord>, artifacts: Vec<Artifact>) -> CommandOutput {
    CommandOutput { report: Report::new(command, &l.config, records), artifacts, timings: BTreeMap::new() }
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

pub fn cmd_percolate(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let d = l.dimension()?;
    let p = l.check_p("p", l.require("p", &c.p)?)?;
    let k = l.require("k", &c.k)?;
    let tol = &c.tolerances;
    let field = PercolationField::new(c.seed, d)?;
    let mut artifacts = Vec::new();
    let inputs = json!({ "d": d, "p": p, "k": k, "seed": c.seed });
    let mut rec = ResultRecord::new("survivors", &["percolation"], "cells of Π_p per shell", inputs.clone());
    if d == 2 && k <= MAX_RASTER_SHELL {
        artifacts.push(Artifact::new("raster.pgm", field.raster2d(p, k)?));
    } else {
        rec.note(format!("no raster: it needs d = 2 and K ≤ {MAX_RASTER_SHELL}"));
    }
    let max_cells = c.max_cells.unwrap_or(DEFAULT_MAX_CELLS);
    let shells = (0..=k)
        .map(|j| Ok((j, field.survivor_cells(p, j, max_cells)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut buf = Vec::new();
    write_survivor_csv(&mut buf, d, &shells)?;
    artifacts.push(Artifact::new("survivors.csv", buf));
    for (j, cells) in &shells {
        let mean = p.powi(*j as i32 + 1) * shell_cardinality(d, *j) as f64;
        rec.push(Measurement::exact(format!("cells_k{j}"), cells.len() as f64).with_target(mean));
    }
    rec.note("targets are the means p^{k+1} |S_k|");
    let mut records = vec![rec];
    if let Some(trials) = c.trials {
        let occ = shell_occupancy(d, p, k, trials, derive_seed(c.seed, 0xb0))?;
        let maxes = max_nonempty(&occ);
        let mut r = ResultRecord::new(
            "max_nonempty_shell",
            &["percolation"],
            "largest nonempty shell of Π_p over independent seeds",
            json!({ "d": d, "p": p, "k": k, "trials": trials }),
        );
        let med = median(&maxes);
        r.push(Measurement::exact("median_max_shell", med));
        let lo = k.div_ceil(2);
        let frac = typically_occupied(&occ, lo, k);
        r.push(Measurement::exact("typically_occupied_fraction", frac));
        if p <= (-(d as f64)).exp2() {
            r.judge(format!("median ≤ {}", tol.bounded_median_shell), med <= tol.bounded_median_shell as f64);
        } else {
            r.judge(
                format!("≥ {} of shells {lo}..={k} nonempty in at least half the seeds", tol.unbounded_fraction),
                frac >= tol.unbounded_fraction,
            );
        }
        records.push(r);
    }
    Ok(output("percolate", l, records, artifacts))
}

/// Judges a mean dimension estimate against `(d + log₂ p)⁺`.
pub(crate) fn judge_dim(r: &mut ResultRecord, mean: f64, target: f64, tol: f64) -> bool {
    if target > 0.0 {
        let ok = (mean - target).abs() <= tol;
        r.judge(format!("|mean - {target:.3}| ≤ {tol}"), ok);
        ok
    } else {
        let ok = mean <= tol;
        r.judge(format!("mean ≤ {tol}"), ok);
        ok
    }
}

pub fn cmd_dim_perc(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let d = l.dimension()?;
    let k = l.require("k", &c.k)?;
    let trials = l.require("trials", &c.trials)?;
    let alpha_tol = c.alpha_tol.unwrap_or(DEFAULT_ALPHA_TOL);
    let max_nodes = c.max_nodes.unwrap_or(DEFAULT_MAX_NODES);
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (i, p) in l.p_list()?.into_iter().enumerate() {
        let runs = dim_perc_runs(d, p, k, trials, derive_seed(c.seed, i as u64), alpha_tol, max_nodes)?;
        let est: Vec<f64> = runs.iter().map(|e| e.estimate).collect();
        let target = percolation_dimension(d, p);
        let mut r = ResultRecord::new(
            &format!("dim_perc_p{p}"),
            &["percolation", "dimension"],
            "macroscopic Hausdorff dimension of Π_p",
            json!({ "d": d, "p": p, "k": k, "trials": trials, "alpha_tol": alpha_tol }),
        );
        let m = mean_estimate(&est);
        r.push(Measurement::estimate("mean_estimate", m).with_target(target));
        judge_dim(&mut r, m.value, target, c.tolerances.dim_perc);
        for (t, e) in runs.iter().enumerate() {
            rows.push(format!(
                "{p},{t},{},{},{},{},{}",
                e.estimate, e.bracket[0], e.bracket[1], e.at_floor, e.at_ceiling
            ));
        }
        records.push(r);
    }
    let table = csv("p,trial,estimate,bracket_lo,bracket_hi,at_floor,at_ceiling", rows);
    Ok(output("dim-perc", l, records, vec![Artifact::new("dim_perc.csv", table)]))
}

pub fn cmd_walk_range(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let dist = walk_of(l)?;
    let steps = l.require("steps", &c.steps)?;
    let paths = l.require("paths", &c.paths)?;
    let alpha_tol = c.alpha_tol.unwrap_or(DEFAULT_ALPHA_TOL);
    let tol = &c.tolerances;
    let inputs = json!({ "walk": dist.preset(), "steps": steps, "paths": paths, "alpha_tol": alpha_tol });
    let mut r = ResultRecord::new("walk_range", &["walk", "dimension"], "dimensions of the walk range", inputs);
    if steps == 0 {
        for name in ["minkowski_upper", "minkowski_lower", "hausdorff"] {
            r.push(Measurement::exact(name, 0.0));
        }
        r.note("zero steps: the range is the singleton {a}, of dimension 0");
        return Ok(output("walk-range", l, vec![r], Vec::new()));
    }
    let runs = range_dims(&dist, steps, paths, c.seed, alpha_tol)?;
    let col = |f: fn(&RangeDims) -> f64| mean_estimate(&runs.iter().map(f).collect::<Vec<_>>());
    let upper = col(|r| r.minkowski_upper);
    let haus = col(|r| r.hausdorff);
    let targets = range_targets(dist.preset());
    let mut m_up = Measurement::estimate("minkowski_upper", upper);
    let mut m_h = Measurement::estimate("hausdorff", haus);
    if let Some((g, h)) = targets {
        m_up = m_up.with_target(g);
        m_h = m_h.with_target(h);
    }
    r.push(m_up);
    r.push(Measurement::estimate("minkowski_lower", col(|r| r.minkowski_lower)));
    r.push(m_h);
    r.push(Measurement::estimate("minkowski_upper_secant", col(|r| r.secant_upper)));
    r.push(Measurement::estimate("minkowski_lower_secant", col(|r| r.secant_lower)));
    r.note("Minkowski values are max and min of n⁻¹ log₂ card over the upper half window; secant values are slopes from the quarter-window base");
    if runs.iter().any(|x| x.k_used < 2) {
        r.note("some ranges reach fewer than three shells and were reported as dimension 0");
    }
    if let Some((g, h)) = targets {
        let ok = (upper.value - g).abs() <= tol.minkowski && (haus.value - h).abs() <= tol.hausdorff;
        r.judge(format!("|Minkowski - {g}| ≤ {} and |Hausdorff - {h}| ≤ {}", tol.minkowski, tol.hausdorff), ok);
    } else {
        r.note("no predicted limit for this walk");
    }
    let mut records = vec![r];
    if c.green.is_some() {
        let g = extended_green(l, &dist)?;
        let n_max = c.k.unwrap_or(7);
        let gamma = crate::capacity::gamma_c_estimate(&g, n_max)?;
        let mut gr = ResultRecord::new(
            "gamma_c_comparison",
            &["walk", "potential"],
            "upper Minkowski dimension of the range against γ_c of the Green function",
            json!({ "n_max": n_max }),
        );
        gr.push(Measurement::exact("gamma_c_series", gamma.series));
        gr.push(Measurement::exact("gamma_c_potential", gamma.potential));
        gr.push(Measurement::estimate("minkowski_upper", upper).with_target(gamma.potential));
        let ok = (upper.value - gamma.potential).abs() <= tol.minkowski;
        gr.judge(format!("|Minkowski - γ_c| ≤ {}", tol.minkowski), ok);
        records.push(gr);
    }
    let rows = runs.iter().map(|x| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            x.path,
            x.k_max,
            x.k_used,
            x.range_size,
            x.minkowski_upper,
            x.minkowski_lower,
            x.secant_upper,
            x.secant_lower,
            x.hausdorff
        )
    });
    let table = csv(
        "path,k_max,k_used,range_size,minkowski_upper,minkowski_lower,secant_upper,secant_lower,hausdorff",
        rows,
    );
    Ok(output("walk-range", l, records, vec![Artifact::new("walk_range.csv", table)]))
}

pub fn cmd_sandwich(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let dist = walk_of(l)?;
    let d = dist.dim();
    let green = extended_green(l, &dist)?;
    let a = start_of(l, d)?;
    let trials = l.require("trials", &c.trials)?;
    let escape = c.escape.unwrap_or(DEFAULT_ESCAPE);
    let horizon = c.horizon.unwrap_or(DEFAULT_HORIZON);
    let sigma = c.tolerances.sigma;
    let sets: Vec<Vec<LatticePoint>> = match &c.points {
        Some(pts) => vec![pts.clone()],
        None => {
            let n = c.random_sets.unwrap_or(20);
            let max = c.max_set_size.unwrap_or(64);
            let box_n = c.set_box.unwrap_or(5);
            (0..n)
                .map(|i| {
                    let mut rng = walk_rng(derive_seed(c.seed, 0x5e75), i as u64);
                    let size = rng.random_range(1..=max);
                    random_set(&mut rng, d, box_n, size)
                })
                .collect()
        }
    };
    let ps = l.p_list()?;
    let mut cases = Vec::new();
    for (i, f) in sets.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let seed = derive_seed(c.seed, (i * ps.len() + j) as u64);
            cases.push(sandwich_case(&dist, &green, &a, f, i, p, trials, seed, escape, horizon, sigma)?);
        }
    }
    let mut r = ResultRecord::new(
        "sandwich",
        &["capacity", "walk", "percolation"],
        "P(walk hits Π_p ∩ F) between c_p/2 and 128 c_p",
        json!({ "sets": sets.len(), "p": ps, "trials": trials, "escape": escape, "horizon": horizon }),
    );
    let held = cases.iter().filter(|x| x.holds).count();
    r.push(Measurement::exact("cases", cases.len() as f64));
    r.push(Measurement::exact("cases_holding", held as f64).with_target(cases.len() as f64));
    r.judge(format!("every P̂ in [c_p/2 - {sigma}σ, 128 c_p + {sigma}σ]"), held == cases.len());
    r.note(format!("walks leaving [-{escape}, {escape}]^d count as misses, which can only lower P̂"));
    if cases.iter().any(|x| x.truncated > 0) {
        r.note("some walks reached the horizon without hitting or escaping");
    }
    let mut records = vec![r];
    for (i, f) in sets.iter().enumerate() {
        if f.len() != 1 {
            continue;
        }
        let x = f[0];
        let (gax, e_ax) = green.g(&a, &x).ok_or(crate::capacity::CapacityError::MissingGreen(a, x))?;
        let (g0, e0) = green.g(&x, &x).ok_or(crate::capacity::CapacityError::MissingGreen(x, x))?;
        for case in cases.iter().filter(|cs| cs.set == i) {
            let pd = case.p.powi(delta(&x) as i32);
            let target = pd * gax / g0;
            let target_err = target * (e_ax / gax + e0 / g0);
            // A walk leaving the escape box could still hit x later.
            let gap = escape + 1 - x.norm_inf();
            let mut coords = [0i64; MAX_DIM];
            coords[0] = gap.max(1);
            let far = LatticePoint::new(&coords[..d]).expect("valid point");
            let bias = pd * green.g0(&far).map_or(0.0, |(g, _)| g) / g0;
            let s = case.hit.std_err.hypot(target_err);
            let v = case.hit.value;
            let mut sr = ResultRecord::new(
                &format!("singleton_{i}_p{}", case.p),
                &["capacity", "walk", "percolation"],
                "singleton identity P̂ = p^Δ g(a,x)/g(x,x)",
                json!({ "x": x, "p": case.p }),
            );
            sr.push(Measurement::estimate("hit", case.hit).with_target(target));
            sr.push(Measurement::exact("escape_bias_bound", bias));
            sr.judge(
                format!("target - bias - {sigma}σ ≤ P̂ ≤ target + {sigma}σ"),
                target - bias - sigma * s <= v && v <= target + sigma * s,
            );
            records.push(sr);
        }
    }
    let rows = cases.iter().map(|x| {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            x.set, x.size, x.p, x.capacity.value, x.capacity.std_err, x.hit.value, x.hit.std_err, x.lower, x.upper, x.holds
        )
    });
    let table = csv("set,size,p,c_p,c_p_err,hit,hit_err,lower,upper,holds", rows);
    Ok(output("sandwich", l, records, vec![Artifact::new("sandwich.csv", table)]))
}

/// `k P̂{Z_k > 0}` at each checkpoint, from one simulated survival curve.
pub(crate) fn kolmogorov_record(
    d: usize,
    p: f64,
    generations: usize,
    trees: u64,
    seed: u64,
    tol: &Tolerances,
) -> Result<ResultRecord, CliError> {
    let curve = galton_watson_survival(d, p, generations, trees, seed)?;
    let exact = galton_watson_survival_exact(d, p, generations);
    let critical = p == (-(d as f64)).exp2();
    let mut r = ResultRecord::new(
        &format!("kolmogorov_d{d}"),
        &["percolation", "branching"],
        if critical { "k P{Z_k > 0} → 2/σ² at criticality" } else { "survival of Binomial(2^d, p) branching" },
        json!({ "d": d, "p": p, "generations": generations, "trees": trees }),
    );
    let se = |q: f64| (q * (1.0 - q) / trees as f64).sqrt();
    let checkpoints: Vec<usize> = [20, 40, 80].into_iter().filter(|&k| k < generations).chain([generations]).collect();
    if critical {
        let target = kolmogorov_target(d);
        for &k in &checkpoints {
            let q = curve[k];
            let kf = k as f64;
            r.push(Measurement::estimate(format!("k_survival_k{k}"), Estimate::new(kf * q, kf * se(q))).with_target(target));
            r.push(Measurement::exact(format!("k_survival_exact_k{k}"), kf * exact[k]));
        }
        let last = generations as f64 * curve[generations];
        r.judge(
            format!("|{generations} P̂ - {target:.4}| ≤ {}", tol.kolmogorov),
            (last - target).abs() <= tol.kolmogorov,
        );
    } else {
        let m = (1u64 << d) as f64 * p;
        let mut ok = true;
        for &k in &checkpoints {
            let bound = m.powi(k as i32);
            r.push(Measurement::estimate(format!("survival_k{k}"), Estimate::new(curve[k], se(curve[k]))).with_target(exact[k]));
            if m < 1.0 {
                ok &= curve[k] <= bound + tol.sigma * se(bound.min(1.0));
            }
        }
        if m < 1.0 {
            r.judge(format!("P̂(Z_k > 0) ≤ (2^d p)^k + {}σ", tol.sigma), ok);
        }
    }
    Ok(r)
}

pub fn cmd_kolmogorov(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let ds = match (&c.d_values, c.d) {
        (Some(v), _) => v.clone(),
        (None, Some(d)) => vec![d],
        _ => return Err(CliError::Config("missing field \"d\" or \"d_values\" for this experiment".into())),
    };
    let generations = c.generations.unwrap_or(80);
    let trees = l.require("trials", &c.trials)?;
    let mut records = Vec::new();
    for (i, &d) in ds.iter().enumerate() {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(l.invalid("d_values", format!("dimension {d} is outside 1..={MAX_DIM}")));
        }
        let p = match c.p {
            Some(p) => l.check_p("p", p)?,
            None => (-(d as f64)).exp2(),
        };
        records.push(kolmogorov_record(d, p, generations, trees, derive_seed(c.seed, i as u64), &c.tolerances)?);
    }
    Ok(output("kolmogorov", l, records, Vec::new()))
}

pub fn cmd_green(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let dist = walk_of(l)?;
    let table = green_table(l, &dist)?;
    let d = dist.dim();
    let origin = LatticePoint::origin(d).expect("valid dimension");
    let mut r = ResultRecord::new(
        "green",
        &["walk", "green"],
        "Green function table g(0, x)",
        json!({ "walk": dist.preset(), "radius": table.radius(), "method": table.method() }),
    );
    if let Some((g, e)) = table.g0(&origin) {
        let m = Measurement::estimate("g_origin", Estimate::new(g, e));
        r.push(if *dist.preset() == (Preset::Srw { d: 3 }) { m.with_target(WATSON_SRW3) } else { m });
    }
    let unit = LatticePoint::unit(d, 0).expect("valid dimension");
    if let Some((g, e)) = table.g0(&unit) {
        r.push(Measurement::estimate("g_unit", Estimate::new(g, e)));
    }
    if table.translation_invariant() && table.radius() >= 4 {
        if let Ok(ext) = ExtendedGreen::new(table.clone()) {
            r.push(Measurement::estimate("far_field_exponent", Estimate::new(ext.exponent, ext.relative_error * ext.exponent)));
            r.push(Measurement::estimate("far_field_amplitude", Estimate::new(ext.amplitude, ext.relative_error * ext.amplitude)));
        }
    }
    r.notes.extend(table.diagnostics().caveats.iter().cloned());
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let mut side = serde_json::to_string_pretty(&table.sidecar()).expect("sidecar serializes");
    side.push('\n');
    Ok(output("green", l, vec![r], vec![Artifact::new("green.csv", buf), Artifact::new("green.json", side)]))
}

pub fn cmd_capacity(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let dist = walk_of(l)?;
    let d = dist.dim();
    let green = extended_green(l, &dist)?;
    let a = start_of(l, d)?;
    let k = l.require("k", &c.k)?;
    let family = match (&c.family, &c.points) {
        (Some(f), _) => f.clone(),
        (None, Some(pts)) => ShellFamily::Points { points: pts.clone() },
        _ => return Err(CliError::Config("missing field \"family\" or \"points\" for this experiment".into())),
    };
    if family.dim().is_some_and(|fd| fd != d) {
        return Err(l.invalid("family", format!("the set lives in a different dimension than the walk ({d})")));
    }
    let opts = CapacityOptions { mode: c.capacity_mode.unwrap_or(KernelMode::Martin), seed: c.seed, ..Default::default() };
    let verdict = recurrence_test(&family, &a, &green, k, &opts)?;
    let mut r = ResultRecord::new(
        "recurrence",
        &["capacity"],
        "trend of Σ_k c_1(F ∩ S_k; a)",
        json!({ "family": family, "k": k, "mode": opts.mode }),
    );
    r.push(Measurement::estimate(
        "partial_sum",
        Estimate::new(*verdict.partial_sums.last().unwrap_or(&0.0), verdict.shells.iter().map(|s| s.std_err).sum()),
    ));
    r.push(Measurement::exact("tail_fraction", verdict.diagnostics.tail_fraction));
    if let Some(v) = verdict.diagnostics.ratio_slope {
        r.push(Measurement::exact("ratio_slope", v));
    }
    if let Some(v) = verdict.diagnostics.ratio_r_squared {
        r.push(Measurement::exact("ratio_r_squared", v));
    }
    if let Some(lc) = &verdict.lamperti {
        r.push(Measurement::exact("lamperti_constant", lc.constant));
    }
    r.note(format!("trend: {:?}", verdict.trend));
    r.notes.extend(verdict.caveats.iter().cloned());
    let mut records = vec![r];
    let mut detail = serde_json::Map::new();
    detail.insert("recurrence".into(), serde_json::to_value(&verdict).expect("serializes"));
    if let Some(p) = c.p.filter(|&p| p < 1.0) {
        let p = l.check_p("p", p)?;
        let keep = c.keep_minimizers.unwrap_or(false);
        let shells = shell_capacities(&family, &a, p, &green, k, &opts, keep)?;
        let mut sr = ResultRecord::new(
            &format!("shells_p{p}"),
            &["capacity"],
            "per-shell capacities c_p(F ∩ S_k; a)",
            json!({ "p": p, "k": k }),
        );
        for s in &shells {
            sr.push(Measurement::estimate(format!("c_k{}", s.shell), Estimate::new(s.value, s.std_err)));
        }
        detail.insert("shells".into(), serde_json::to_value(&shells).expect("serializes"));
        records.push(sr);
    }
    if let Some(grid) = c.p_values.as_ref().filter(|g| !g.is_empty()) {
        for &p in grid {
            l.check_p("p_values", p)?;
        }
        let pc = p_c_estimate(&family, &a, &green, k, grid, &opts)?;
        let mut pr = ResultRecord::new(
            "p_c",
            &["capacity"],
            "critical retention probability of F from the capacity series",
            json!({ "p_values": grid, "k": k }),
        );
        pr.push(Measurement::exact("p_c", pc.p_c));
        pr.push(Measurement::exact("bracket_lo", pc.bracket.0));
        pr.push(Measurement::exact("bracket_hi", pc.bracket.1));
        pr.push(Measurement::exact("dimension", pc.dimension));
        if pc.no_transition {
            pr.note("no transition inside the grid");
        }
        detail.insert("p_c".into(), serde_json::to_value(&pc).expect("serializes"));
        records.push(pr);
    }
    let mut body = serde_json::to_string_pretty(&serde_json::Value::Object(detail)).expect("serializes");
    body.push('\n');
    Ok(output("capacity", l, records, vec![Artifact::new("capacity.json", body)]))
}

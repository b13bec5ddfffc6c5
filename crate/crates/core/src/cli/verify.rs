//! The acceptance suite run by `macrodim verify`.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::commands::{
    dim_perc_runs, judge_dim, kolmogorov_record, max_nonempty, percolation_dimension, random_set, range_dims,
    sandwich_case, shell_occupancy, typically_occupied, RangeDims, DEFAULT_ESCAPE, DEFAULT_HORIZON,
    DEFAULT_MAX_NODES,
};
use super::config::{LoadedConfig, Tolerances};
use super::report::{CommandOutput, Measurement, Report, ResultRecord};
use super::CliError;
use crate::capacity::{
    cp_capacity, gamma_c_estimate, recurrence_test, symmetrized_kernel, CapacityOptions, KernelMode, ShellFamily,
    Trend,
};
use crate::dimension::{cover_cost, n_alpha, ShellCells, DEFAULT_ALPHA_TOL};
use crate::hashing::{derive_seed, hash_words};
use crate::lattice::{delta, shell_of, shell_points, tree_dist, LatticePoint};
use crate::oracle::{brute_force_cover, simplex_grid_min};
use crate::percolation::PercolationField;
use crate::stats::Estimate;
use crate::walk::{
    green_estimate, walk_rng, ExtendedGreen, GreenFunction, GreenMethod, Region, StepDistribution, WATSON_SRW3,
};

/// Period and radius of the shared spectral Green table of `srw(3)`.
pub const SPECTRAL_PERIOD: usize = 256;
pub const SPECTRAL_RADIUS: i64 = 64;

/// Shared, lazily computed inputs of the criteria.
pub struct Context {
    pub seed: u64,
    /// Multiplies sample budgets; 1 is canonical.
    pub scale: f64,
    pub tol: Tolerances,
    green: OnceLock<Result<ExtendedGreen, String>>,
    range: OnceLock<Result<Vec<RangeDims>, String>>,
}

impl Context {
    pub fn new(seed: u64, scale: f64, tol: Tolerances) -> Self {
        Self { seed, scale, tol, green: OnceLock::new(), range: OnceLock::new() }
    }

    /// A sample budget scaled by `scale`, at least 1.
    pub fn budget(&self, base: u64) -> u64 {
        ((base as f64 * self.scale).round() as u64).max(1)
    }

    /// The master seed of one criterion.
    pub fn seed_for(&self, id: &str) -> u64 {
        let words: Vec<u64> = id.bytes().map(u64::from).collect();
        hash_words(self.seed, &words)
    }

    fn srw3() -> StepDistribution {
        StepDistribution::srw(3).expect("srw(3) is transient")
    }

    /// The spectral `srw(3)` table extended by its far-field fit.
    pub fn green(&self) -> Result<&ExtendedGreen, CliError> {
        self.green
            .get_or_init(|| {
                let method = GreenMethod::Spectral { period: SPECTRAL_PERIOD };
                green_estimate(&Self::srw3(), SPECTRAL_RADIUS, &[], &method)
                    .and_then(ExtendedGreen::new)
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| CliError::Config(format!("spectral Green table: {e}")))
    }

    fn range(&self) -> Result<&[RangeDims], CliError> {
        self.range
            .get_or_init(|| {
                let paths = self.budget(10);
                let seed = self.seed_for("range");
                range_dims(&Self::srw3(), 1_000_000, paths, seed, DEFAULT_ALPHA_TOL).map_err(|e| e.to_string())
            })
            .as_ref()
            .map(|v| v.as_slice())
            .map_err(|e| CliError::Config(format!("walk ranges: {e}")))
    }
}

type Check = fn(&Context, ResultRecord) -> Result<ResultRecord, CliError>;

/// One acceptance criterion.
pub struct Criterion {
    pub id: &'static str,
    pub tags: &'static [&'static str],
    pub description: &'static str,
    /// Cheap enough to rerun for the reproducibility check.
    pub rerun: bool,
    check: Check,
}

impl Criterion {
    pub fn matches(&self, filter: &str) -> bool {
        self.id == filter || self.tags.contains(&filter)
    }

    /// Runs the check; an error becomes a failed record.
    pub fn run(&self, ctx: &Context) -> ResultRecord {
        let blank = ResultRecord::new(self.id, self.tags, self.description, json!({}));
        match (self.check)(ctx, blank.clone()) {
            Ok(r) => r,
            Err(e) => {
                let mut r = blank;
                r.judge("runs without error", false);
                r.note(format!("error: {e}"));
                r
            }
        }
    }
}

pub const REPRODUCIBILITY: &str = "reproducibility";

pub fn criteria() -> &'static [Criterion] {
    const LIST: &[Criterion] = &[
        Criterion {
            id: "one_point_law",
            tags: &["percolation"],
            description: "P(x ∈ Π_p) = p^{k+1}",
            rerun: true,
            check: one_point_law,
        },
        Criterion {
            id: "two_point_law",
            tags: &["percolation"],
            description: "P(x, y ∈ Π_p) = p^{2k+2-d(x,y)}",
            rerun: true,
            check: two_point_law,
        },
        Criterion {
            id: "coupling_monotonicity",
            tags: &["percolation"],
            description: "Π_p grows with p under the coupling",
            rerun: true,
            check: coupling_monotonicity,
        },
        Criterion {
            id: "boundedness",
            tags: &["percolation"],
            description: "Π_p bounded at p = 0.2, unbounded at p = 0.3 (d = 2)",
            rerun: true,
            check: boundedness,
        },
        Criterion {
            id: "kolmogorov_limit",
            tags: &["percolation", "branching"],
            description: "k P(Z_k > 0) → 2/σ² at k = 80",
            rerun: true,
            check: kolmogorov_limit,
        },
        Criterion {
            id: "n_alpha_exact",
            tags: &["dimension"],
            description: "tree DP for N_α equals exhaustive dyadic covers",
            rerun: true,
            check: n_alpha_exact,
        },
        Criterion {
            id: "dim_percolation",
            tags: &["percolation", "dimension"],
            description: "Dim(Π_p) = (2 + log₂ p)⁺ (d = 2, K = 12)",
            rerun: false,
            check: dim_percolation,
        },
        Criterion {
            id: "green_function",
            tags: &["walk", "green"],
            description: "srw(3) Green function: Monte Carlo against the convolution oracle",
            rerun: false,
            check: green_function,
        },
        Criterion {
            id: "volume_doubling",
            tags: &["walk", "green", "potential"],
            description: "U(V_{n+1}) ≤ 4^d U(V_n) for srw(3)",
            rerun: true,
            check: volume_doubling,
        },
        Criterion {
            id: "gamma_c",
            tags: &["walk", "potential"],
            description: "γ_c of srw(3) is 2 in series and potential modes",
            rerun: true,
            check: gamma_c,
        },
        Criterion {
            id: "range_minkowski",
            tags: &["walk", "dimension"],
            description: "upper Minkowski dimension of the srw(3) range is 2",
            rerun: true,
            check: range_minkowski,
        },
        Criterion {
            id: "range_hausdorff",
            tags: &["walk", "dimension"],
            description: "Hausdorff dimension of the srw(3) range is 2",
            rerun: true,
            check: range_hausdorff,
        },
        Criterion {
            id: "capacity_solver",
            tags: &["capacity"],
            description: "Frank–Wolfe minima against grid search; singleton identity",
            rerun: true,
            check: capacity_solver,
        },
        Criterion {
            id: "sandwich",
            tags: &["capacity", "walk", "percolation"],
            description: "c_p/2 ≤ P(walk hits Π_p ∩ F) ≤ 128 c_p",
            rerun: false,
            check: sandwich,
        },
        Criterion {
            id: "recurrence_dichotomy",
            tags: &["capacity"],
            description: "axis cubes transient, subsampled Z³ recurrent for srw(3), K = 8",
            rerun: true,
            check: recurrence_dichotomy,
        },
        Criterion {
            id: REPRODUCIBILITY,
            tags: &[REPRODUCIBILITY],
            description: "rerun in a fresh context gives byte-identical records",
            rerun: false,
            check: |_, r| Ok(r),
        },
    ];
    LIST
}

fn pt(c: &[i64]) -> LatticePoint {
    LatticePoint::new(c).expect("valid point")
}

/// Fixed panel of points in shells `0..=4`, six in `d = 2` and six in `d = 3`.
pub fn one_point_panel() -> Vec<LatticePoint> {
    [
        &[0, 0][..],
        &[1, -2],
        &[3, 1],
        &[-5, 2],
        &[9, -12],
        &[-16, 7],
        &[0, 0, -1],
        &[1, 0, 0],
        &[2, -3, 1],
        &[-7, 4, 0],
        &[15, -15, 3],
        &[-9, 0, 12],
    ]
    .iter()
    .map(|c| pt(c))
    .collect()
}

/// Ten same-shell pairs covering every tree distance `0..=k+1` for
/// `(d, k) = (2, 3)` and `(3, 2)`, plus `(d, k, dist) = (2, 1, 2)`.
pub fn two_point_panel() -> Vec<(LatticePoint, LatticePoint)> {
    let mut out = Vec::new();
    let mut add = |d: usize, k: u32, dist: u32| {
        let x = shell_points(d, k).next().expect("nonempty shell");
        let y = shell_points(d, k).find(|y| tree_dist(&x, y).ok() == Some(dist)).expect("distance attained");
        out.push((x, y));
    };
    for dist in 0..=4 {
        add(2, 3, dist);
    }
    for dist in 0..=3 {
        add(3, 2, dist);
    }
    add(2, 1, 2);
    out
}

/// Counts, per trial chunk, how often `hit(field_2d, field_3d, t)` holds per slot.
fn count_trials<F>(ctx: &Context, seed: u64, n: u64, slots: usize, hit: F) -> Result<Vec<u64>, CliError>
where
    F: Fn(&PercolationField, &PercolationField, &mut [u64]) -> Result<(), CliError> + Sync,
{
    let _ = ctx;
    let chunk = 4096u64;
    (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; slots];
            for t in (c * chunk)..((c + 1) * chunk).min(n) {
                let f2 = PercolationField::for_trial(seed, t, 2)?;
                let f3 = PercolationField::for_trial(seed, t, 3)?;
                hit(&f2, &f3, &mut counts)?;
            }
            Ok(counts)
        })
        .try_reduce(
            || vec![0u64; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

fn binomial_check(r: &mut ResultRecord, name: String, hits: u64, n: u64, target: f64, sigma: f64) -> bool {
    let sd = (target * (1.0 - target) / n as f64).sqrt();
    let est = Estimate::proportion(hits, n);
    r.push(Measurement::estimate(name, est).with_target(target));
    (est.value - target).abs() <= sigma * sd
}

fn one_point_law(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let panel = one_point_panel();
    let ps = [0.3, 0.5, 0.8];
    let n = ctx.budget(1_000_000);
    r.inputs = json!({ "points": panel, "p": ps, "seeds": n });
    let counts = count_trials(ctx, ctx.seed_for(r.id.as_str()), n, panel.len() * ps.len(), |f2, f3, c| {
        for (i, x) in panel.iter().enumerate() {
            let f = if x.dim() == 2 { f2 } else { f3 };
            let th = f.survival_threshold(x)?;
            for (j, &p) in ps.iter().enumerate() {
                c[i * ps.len() + j] += u64::from(th < p);
            }
        }
        Ok(())
    })?;
    let mut ok = true;
    for (i, x) in panel.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let target = p.powi(delta(x) as i32);
            ok &= binomial_check(&mut r, format!("{x}_p{p}"), counts[i * ps.len() + j], n, target, ctx.tol.sigma);
        }
    }
    r.judge(format!("|P̂ - p^(k+1)| ≤ {} binomial σ at all 36 checks", ctx.tol.sigma), ok);
    Ok(r)
}

fn two_point_law(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let pairs = two_point_panel();
    let p = 0.5;
    let n = ctx.budget(1_000_000);
    let dists: Vec<u32> = pairs.iter().map(|(x, y)| tree_dist(x, y)).collect::<Result<_, _>>().map_err(crate::walk::WalkError::from)?;
    r.inputs = json!({ "pairs": pairs, "tree_distances": dists, "p": p, "seeds": n });
    let counts = count_trials(ctx, ctx.seed_for(r.id.as_str()), n, pairs.len(), |f2, f3, c| {
        for (i, (x, y)) in pairs.iter().enumerate() {
            let f = if x.dim() == 2 { f2 } else { f3 };
            let th = f.survival_threshold(x)?.max(f.survival_threshold(y)?);
            c[i] += u64::from(th < p);
        }
        Ok(())
    })?;
    let mut ok = true;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let k = shell_of(x) as i32;
        let target = p.powi(2 * k + 2 - dists[i] as i32);
        ok &= binomial_check(&mut r, format!("{x}_{y}"), counts[i], n, target, ctx.tol.sigma);
    }
    r.judge(format!("|P̂ - p^(2k+2-d(x,y))| ≤ {} binomial σ for all pairs", ctx.tol.sigma), ok);
    Ok(r)
}

fn coupling_monotonicity(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let n = ctx.budget(100_000);
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let seed = ctx.seed_for(r.id.as_str());
    r.inputs = json!({ "pairs": n, "p": grid, "points": "uniform in V_6, d alternating 2 and 3" });
    let violations: u64 = (0..n)
        .into_par_iter()
        .map(|t| -> Result<u64, CliError> {
            let d = 2 + (t % 2) as usize;
            let mut rng = walk_rng(seed, t);
            let c: Vec<i64> = (0..d).map(|_| rng.random_range(-64..64)).collect();
            let x = pt(&c);
            let field = PercolationField::for_trial(seed, t, d)?;
            let mut seen = false;
            let mut bad = 0;
            for &p in &grid {
                let inside = field.contains(p, &x)?;
                bad += u64::from(seen && !inside);
                seen |= inside;
            }
            Ok(bad)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    r.push(Measurement::exact("violations", violations as f64).with_target(0.0));
    r.judge("zero violations", violations == 0);
    Ok(r)
}

fn boundedness(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let n = ctx.budget(200);
    let k = 40;
    r.inputs = json!({ "d": 2, "seeds": n, "k": k, "p": [0.2, 0.3] });
    let seed = ctx.seed_for(r.id.as_str());
    let low = shell_occupancy(2, 0.2, k, n, derive_seed(seed, 0))?;
    let maxes = max_nonempty(&low);
    let mut sorted = maxes.clone();
    sorted.sort_by(f64::total_cmp);
    let med = if n % 2 == 1 { sorted[n as usize / 2] } else { 0.5 * (sorted[n as usize / 2 - 1] + sorted[n as usize / 2]) };
    r.push(Measurement::exact("median_max_shell_p0.2", med).with_target(ctx.tol.bounded_median_shell as f64));
    let high = shell_occupancy(2, 0.3, k, n, derive_seed(seed, 1))?;
    let frac = typically_occupied(&high, 20, 40);
    r.push(Measurement::exact("typically_occupied_fraction_p0.3", frac).with_target(ctx.tol.unbounded_fraction));
    let occupancy: Vec<f64> =
        (20..=40).map(|j| high.iter().filter(|row| row[j]).count() as f64 / n as f64).collect();
    let mean_occ = occupancy.iter().sum::<f64>() / occupancy.len() as f64;
    r.push(Measurement::estimate(
        "mean_nonempty_rate_p0.3",
        Estimate::new(mean_occ, (mean_occ * (1.0 - mean_occ) / n as f64).sqrt()),
    ));
    r.note("at p = 0.3 a shell is nonempty with probability near the survival probability of its branching process, about 0.34, so no shell is nonempty in half the seeds");
    let ok = med <= ctx.tol.bounded_median_shell as f64 && frac >= ctx.tol.unbounded_fraction;
    r.judge(
        format!(
            "median ≤ {} at p = 0.2 and ≥ {} of shells 20..=40 nonempty in half the seeds at p = 0.3",
            ctx.tol.bounded_median_shell, ctx.tol.unbounded_fraction
        ),
        ok,
    );
    Ok(r)
}

fn kolmogorov_limit(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let n = ctx.budget(1_000_000);
    r.inputs = json!({ "d": [2, 3], "trees": n, "k": 80 });
    let mut ok = true;
    for (i, d) in [2usize, 3].into_iter().enumerate() {
        let seed = derive_seed(ctx.seed_for(r.id.as_str()), i as u64);
        let sub = kolmogorov_record(d, (-(d as f64)).exp2(), 80, n, seed, &ctx.tol)?;
        ok &= sub.pass == Some(true);
        for m in sub.measurements {
            r.push(Measurement { name: format!("d{d}_{}", m.name), ..m });
        }
    }
    r.judge(format!("|80 P̂(Z_80 > 0) - 2/σ²| ≤ {} for d = 2, 3", ctx.tol.kolmogorov), ok);
    Ok(r)
}

fn n_alpha_exact(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let cases = ctx.budget(50);
    let seed = ctx.seed_for(r.id.as_str());
    r.inputs = json!({ "d": 2, "subsets": cases, "k": "0..=3", "alpha": "uniform in [0.05, 2]", "max_cells": 40 });
    let mut mismatches = 0u64;
    let mut max_float_gap = 0.0f64;
    for i in 0..cases {
        let mut rng = walk_rng(seed, i);
        let k = rng.random_range(0..=3u32);
        let all: Vec<LatticePoint> = shell_points(2, k).collect();
        let size = rng.random_range(1..=all.len().min(40));
        let mut cells = Vec::with_capacity(size);
        let mut pool = all;
        for _ in 0..size {
            let j = rng.random_range(0..pool.len());
            cells.push(pool.swap_remove(j));
        }
        let alpha = rng.random_range(0.05..2.0);
        let dp = n_alpha(&ShellCells::new(k, 2, cells.clone())?, alpha)?;
        let brute = brute_force_cover(&cells, k, alpha, k + 2).expect("within the oracle limits");
        let (low, high) = brute.histogram.split_at(k as usize + 1);
        let same = dp.histogram() == low && high.iter().all(|&c| c == 0) && dp.value == cover_cost(low, k, alpha);
        mismatches += u64::from(!same);
        max_float_gap = max_float_gap.max((dp.value - brute.value).abs());
    }
    r.push(Measurement::exact("subsets", cases as f64));
    r.push(Measurement::exact("mismatches", mismatches as f64).with_target(0.0));
    r.push(Measurement::exact("max_summation_gap", max_float_gap));
    r.note("the oracle allows cube levels up to k + 2; equality is on the optimal level histogram and its cost");
    r.judge("identical optimal covers on every subset", mismatches == 0);
    Ok(r)
}

fn dim_percolation(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let n = ctx.budget(20);
    let k = 12;
    let ps = [0.5, 0.8, 0.25];
    r.inputs = json!({ "d": 2, "k": k, "seeds": n, "p": ps, "alpha_tol": DEFAULT_ALPHA_TOL });
    let seed = ctx.seed_for(r.id.as_str());
    let mut ok = true;
    let mut clauses = Vec::new();
    for (i, &p) in ps.iter().enumerate() {
        let runs = dim_perc_runs(2, p, k, n, derive_seed(seed, i as u64), DEFAULT_ALPHA_TOL, DEFAULT_MAX_NODES)?;
        let est: Vec<f64> = runs.iter().map(|e| e.estimate).collect();
        let m = Estimate::from_moments(n, est.iter().sum(), est.iter().map(|x| x * x).sum());
        let target = percolation_dimension(2, p);
        r.push(Measurement::estimate(format!("mean_p{p}"), m).with_target(target));
        let mut sub = ResultRecord::new("", &[], "", json!({}));
        ok &= judge_dim(&mut sub, m.value, target, ctx.tol.dim_perc);
        clauses.push(format!("p = {p}: {}", sub.tolerance));
    }
    r.judge(clauses.join("; "), ok);
    Ok(r)
}

/// Panel of the Green comparison: axis, face and body diagonals with `‖x‖₂ ≤ 10`.
pub fn green_panel() -> Vec<LatticePoint> {
    let mut v: Vec<LatticePoint> = (0..=10).map(|k| pt(&[k, 0, 0])).collect();
    v.extend((1..=7).map(|k| pt(&[k, k, 0])));
    v.extend((1..=5).map(|k| pt(&[k, k, k])));
    v
}

fn green_function(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let walks = ctx.budget(1_000_000);
    let s = Context::srw3();
    let mc = GreenMethod::MonteCarlo {
        walks,
        horizon: DEFAULT_HORIZON,
        kill_radius: Some(60),
        seed: ctx.seed_for(r.id.as_str()),
    };
    let oracle = GreenMethod::Convolution { box_radius: 60, tolerance: 1e-10, max_iterations: 100_000 };
    r.inputs = json!({ "monte_carlo": mc, "oracle": oracle, "table_radius": 10 });
    let a = green_estimate(&s, 10, &[], &mc)?;
    let b = green_estimate(&s, 10, &[], &oracle)?;
    let sigma = ctx.tol.sigma;
    let mut worst_panel = 0.0f64;
    for x in green_panel() {
        let (ga, ea) = a.g0(&x).expect("inside the table");
        let (gb, eb) = b.g0(&x).expect("inside the table");
        worst_panel = worst_panel.max((ga - gb).abs() / ea.hypot(eb));
    }
    let mut chi2 = 0.0;
    let mut worst_box = 0.0f64;
    let entries = b.entries();
    for (x, gb, eb) in &entries {
        let (ga, ea) = a.g0(x).expect("same box");
        let z = (ga - gb) / ea.hypot(*eb);
        chi2 += z * z;
        worst_box = worst_box.max(z.abs());
    }
    let origin = pt(&[0, 0, 0]);
    let (g_mc, e_mc) = a.g0(&origin).expect("origin");
    let (g_or, e_or) = b.g0(&origin).expect("origin");
    let target = WATSON_SRW3;
    r.push(Measurement::exact("panel_max_abs_z", worst_panel).with_target(sigma));
    r.push(Measurement::estimate("g_origin_monte_carlo", Estimate::new(g_mc, e_mc)).with_target(target));
    r.push(Measurement::estimate("g_origin_oracle", Estimate::new(g_or, e_or)).with_target(target));
    r.push(Measurement::exact("box_chi_square", chi2).with_target(entries.len() as f64));
    r.push(Measurement::exact("box_max_abs_z", worst_box));
    if let Some(rem) = b.diagnostics().exterior_remainder {
        r.push(Measurement::exact("oracle_exterior_remainder", rem));
    }
    r.note("both tables are the Green function of the walk killed outside [-60, 60]^3");
    r.note("the chi-square has one degree of freedom per box point and is a diagnostic");
    let tol = ctx.tol.green_origin;
    let ok = worst_panel <= sigma && (g_mc - target).abs() <= tol && (g_or - target).abs() <= tol;
    r.judge(format!("panel |z| ≤ {sigma}; both g(0,0) within {tol} of {target:.6}"), ok);
    Ok(r)
}

fn volume_doubling(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let g = ctx.green()?;
    let d = g.dim() as i32;
    r.inputs = json!({ "green": { "method": "spectral", "period": SPECTRAL_PERIOD, "radius": SPECTRAL_RADIUS }, "n_max": 5 });
    let u: Vec<Estimate> = (0..=6).map(|n| g.potential(&Region::Box(n))).collect::<Result<_, _>>()?;
    let mut violations = 0u64;
    for n in 0..=5 {
        let rel = u[n].std_err / u[n].value + u[n + 1].std_err / u[n + 1].value;
        let ratio = u[n + 1].value / u[n].value;
        r.push(Measurement::estimate(format!("ratio_n{n}"), Estimate::new(ratio, ratio * rel)));
        violations += u64::from(u[n + 1].value > 4f64.powi(d) * u[n].value * (1.0 + 3.0 * rel));
    }
    r.push(Measurement::exact("violations", violations as f64).with_target(0.0));
    r.judge("U(V_{n+1}) ≤ 4^d U(V_n)(1 + 3 rel.err) for n ≤ 5", violations == 0);
    Ok(r)
}

fn gamma_c(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let g = ctx.green()?;
    let n_max = 7;
    r.inputs = json!({ "green": { "method": "spectral", "period": SPECTRAL_PERIOD, "radius": SPECTRAL_RADIUS }, "n_max": n_max });
    let est = gamma_c_estimate(g, n_max)?;
    let t = &ctx.tol;
    r.push(Measurement::exact("series", est.series).with_target(2.0));
    r.push(Measurement::exact("potential", est.potential).with_target(2.0));
    r.push(Measurement::exact("potential_raw_max", est.potential_raw));
    r.note("potential mode is the secant slope of log₂ U(V_n) from the quarter-window base; the raw max of n⁻¹ log₂ U(V_n) is reported alongside");
    let ok = (est.series - 2.0).abs() <= t.gamma
        && (est.potential - 2.0).abs() <= t.gamma
        && (est.series - est.potential).abs() <= t.gamma_agreement;
    r.judge(format!("both within {} of 2 and within {} of each other", t.gamma, t.gamma_agreement), ok);
    Ok(r)
}

fn range_inputs(ctx: &Context) -> serde_json::Value {
    json!({ "walk": "srw(3)", "steps": 1_000_000, "paths": ctx.budget(10), "alpha_tol": DEFAULT_ALPHA_TOL })
}

fn range_minkowski(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let runs = ctx.range()?;
    r.inputs = range_inputs(ctx);
    let v: Vec<f64> = runs.iter().map(|x| x.minkowski_upper).collect();
    let m = Estimate::from_moments(v.len() as u64, v.iter().sum(), v.iter().map(|x| x * x).sum());
    let sec: Vec<f64> = runs.iter().map(|x| x.secant_upper).collect();
    r.push(Measurement::estimate("mean_upper", m).with_target(2.0));
    r.push(Measurement::estimate(
        "mean_upper_secant",
        Estimate::from_moments(sec.len() as u64, sec.iter().sum(), sec.iter().map(|x| x * x).sum()),
    ));
    r.note("estimates use boxes up to the last fully explored shell");
    r.judge(format!("|mean - 2| ≤ {}", ctx.tol.minkowski), (m.value - 2.0).abs() <= ctx.tol.minkowski);
    Ok(r)
}

fn range_hausdorff(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let runs = ctx.range()?;
    r.inputs = range_inputs(ctx);
    let v: Vec<f64> = runs.iter().map(|x| x.hausdorff).collect();
    let m = Estimate::from_moments(v.len() as u64, v.iter().sum(), v.iter().map(|x| x * x).sum());
    r.push(Measurement::estimate("mean_hausdorff", m).with_target(2.0));
    r.judge(format!("|mean - 2| ≤ {}", ctx.tol.hausdorff), (m.value - 2.0).abs() <= ctx.tol.hausdorff);
    Ok(r)
}

fn capacity_solver(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let g = ctx.green()?;
    let seed = ctx.seed_for(r.id.as_str());
    let a = pt(&[0, 0, 0]);
    let instances = ctx.budget(20);
    let singletons = ctx.budget(10);
    r.inputs = json!({
        "instances": instances, "max_size": 4, "set_box": 3, "grid_resolution": 200, "zoom_rounds": 3,
        "singletons": singletons, "singleton_box": 4,
    });
    let mut worst_rel = 0.0f64;
    for i in 0..instances {
        let mut rng = walk_rng(seed, i);
        let size = rng.random_range(1..=4);
        let f = random_set(&mut rng, 3, 3, size);
        let p = rng.random_range(0.2..1.0);
        let opts = CapacityOptions { seed: derive_seed(seed, i), ..Default::default() };
        let c = cp_capacity(&f, &a, p, g, &opts)?;
        let (pts, q) = symmetrized_kernel(&f, &a, p, g, KernelMode::Martin)?;
        let (grid, _) = simplex_grid_min(&q, pts.len(), 200, 3);
        worst_rel = worst_rel.max((c.energy - grid).abs() / grid.abs());
    }
    r.push(Measurement::exact("max_relative_gap", worst_rel).with_target(ctx.tol.solver_rel));
    let mut worst_singleton = 0.0f64;
    let mut singleton_ok = true;
    for i in 0..singletons {
        let mut rng = walk_rng(seed, instances + i);
        let x = random_set(&mut rng, 3, 4, 1)[0];
        let p = rng.random_range(0.2..1.0);
        let c = cp_capacity(&[x], &a, p, g, &CapacityOptions::default())?;
        let (gax, eax) = g.g(&a, &x).expect("inside the table");
        let (gxx, exx) = g.g(&x, &x).expect("inside the table");
        let target = p.powi(delta(&x) as i32) * gax / gxx;
        let err = target * (eax / gax + exx / gxx) + c.std_err;
        let gap = (c.value - target).abs();
        worst_singleton = worst_singleton.max(gap / err.max(f64::MIN_POSITIVE));
        singleton_ok &= gap <= err.max(1e-12 * target);
    }
    r.push(Measurement::exact("singleton_max_gap_over_error", worst_singleton).with_target(1.0));
    let ok = worst_rel <= ctx.tol.solver_rel && singleton_ok;
    r.judge(
        format!("energy gap to grid search ≤ {} relative; singleton identity within the Green error", ctx.tol.solver_rel),
        ok,
    );
    Ok(r)
}

fn sandwich(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let g = ctx.green()?;
    let s = Context::srw3();
    let sets = ctx.budget(20) as usize;
    let trials = ctx.budget(100_000);
    let ps = [0.3, 0.6, 0.9];
    let seed = ctx.seed_for(r.id.as_str());
    r.inputs = json!({
        "sets": sets, "set_box": 5, "max_set_size": 64, "p": ps, "trials": trials,
        "escape": DEFAULT_ESCAPE, "horizon": DEFAULT_HORIZON,
    });
    let a = pt(&[0, 0, 0]);
    let mut held = 0usize;
    let mut total = 0usize;
    let mut worst_low = f64::INFINITY;
    let mut worst_high = 0.0f64;
    for i in 0..sets {
        let mut rng = walk_rng(seed, i as u64);
        let size = rng.random_range(1..=64);
        let f = random_set(&mut rng, 3, 5, size);
        for (j, &p) in ps.iter().enumerate() {
            let cs = derive_seed(seed, (1000 + i * ps.len() + j) as u64);
            let c = sandwich_case(&s, g, &a, &f, i, p, trials, cs, DEFAULT_ESCAPE, DEFAULT_HORIZON, ctx.tol.sigma)?;
            total += 1;
            held += usize::from(c.holds);
            if c.capacity.value > 0.0 {
                worst_low = worst_low.min(c.hit.value / c.capacity.value);
                worst_high = worst_high.max(c.hit.value / c.capacity.value);
            }
        }
    }
    r.push(Measurement::exact("cases", total as f64));
    r.push(Measurement::exact("cases_holding", held as f64).with_target(total as f64));
    r.push(Measurement::exact("min_hit_over_capacity", worst_low).with_target(0.5));
    r.push(Measurement::exact("max_hit_over_capacity", worst_high).with_target(128.0));
    r.note(format!("walks leaving [-{DEFAULT_ESCAPE}, {DEFAULT_ESCAPE}]^3 count as misses, which can only lower P̂"));
    r.note("σ is the binomial error at each bound plus the capacity error");
    r.judge(format!("P̂ in [c_p/2 - {0}σ, 128 c_p + {0}σ] in every case", ctx.tol.sigma), held == total);
    Ok(r)
}

fn recurrence_dichotomy(ctx: &Context, mut r: ResultRecord) -> Result<ResultRecord, CliError> {
    let g = ctx.green()?;
    let k = 8;
    let seed = ctx.seed_for(r.id.as_str());
    let cubes = ShellFamily::AxisCubes { d: 3 };
    let full = ShellFamily::FullLattice { d: 3, cap: 512, seed };
    r.inputs = json!({ "k": k, "transient_set": cubes, "recurrent_set": full });
    let a = pt(&[0, 0, 0]);
    let opts = CapacityOptions { seed, ..Default::default() };
    let vc = recurrence_test(&cubes, &a, g, k, &opts)?;
    let vf = recurrence_test(&full, &a, g, k, &opts)?;
    for (name, v) in [("axis_cubes", &vc), ("full_lattice", &vf)] {
        r.push(Measurement::exact(format!("{name}_tail_fraction"), v.diagnostics.tail_fraction));
        if let Some(x) = v.diagnostics.ratio_slope {
            r.push(Measurement::exact(format!("{name}_ratio_slope"), x));
        }
        if let Some(x) = v.diagnostics.ratio_r_squared {
            r.push(Measurement::exact(format!("{name}_ratio_r_squared"), x));
        }
        r.note(format!("{name}: {:?}", v.trend));
    }
    if let Some(l) = &vf.lamperti {
        r.push(Measurement::exact("lamperti_constant", l.constant));
    }
    r.notes.extend(vf.caveats.iter().map(|c| format!("full_lattice: {c}")));
    let ok = vc.trend == Trend::Converging && vf.trend == Trend::Diverging;
    r.judge("axis cubes converging and subsampled Z³ diverging", ok);
    Ok(r)
}

/// Runs the selected criteria, then reruns the cheap ones in a fresh context.
pub fn run_suite(seed: u64, scale: f64, tol: &Tolerances, filter: Option<&str>) -> (Vec<ResultRecord>, BTreeMap<String, f64>) {
    let selected: Vec<&Criterion> = criteria().iter().filter(|c| filter.is_none_or(|f| c.matches(f))).collect();
    let ctx = Context::new(seed, scale, tol.clone());
    let mut records = Vec::new();
    let mut timings = BTreeMap::new();
    for c in selected.iter().filter(|c| c.id != REPRODUCIBILITY) {
        let start = Instant::now();
        records.push(c.run(&ctx));
        timings.insert(c.id.to_string(), start.elapsed().as_secs_f64());
    }
    if selected.iter().any(|c| c.id == REPRODUCIBILITY) {
        let start = Instant::now();
        let fresh = Context::new(seed, scale, tol.clone());
        // Alone, the check reruns every cheap criterion.
        let pool: Vec<&Criterion> = if selected.len() == 1 { criteria().iter().collect() } else { selected.clone() };
        let rerun: Vec<&Criterion> = pool.into_iter().filter(|c| c.rerun).collect();
        let mut r = ResultRecord::new(
            REPRODUCIBILITY,
            &[REPRODUCIBILITY],
            "rerun in a fresh context gives byte-identical records",
            json!({ "rerun": rerun.iter().map(|c| c.id).collect::<Vec<_>>() }),
        );
        let mut differing = Vec::new();
        for c in &rerun {
            let again = serde_json::to_vec(&c.run(&fresh)).expect("serializes");
            let first = records.iter().find(|x| x.id == c.id).map(|x| serde_json::to_vec(x).expect("serializes"));
            let first = match first {
                Some(f) => f,
                None => serde_json::to_vec(&c.run(&ctx)).expect("serializes"),
            };
            if first != again {
                differing.push(c.id);
            }
        }
        r.push(Measurement::exact("compared", rerun.len() as f64));
        r.push(Measurement::exact("differing", differing.len() as f64).with_target(0.0));
        for id in &differing {
            r.note(format!("{id} differs between runs"));
        }
        r.note("criteria marked as expensive are excluded from the rerun");
        r.judge("identical serialized records", differing.is_empty() && !rerun.is_empty());
        records.push(r);
        timings.insert(REPRODUCIBILITY.to_string(), start.elapsed().as_secs_f64());
    }
    (records, timings)
}

pub fn cmd_verify(l: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let c = &l.config;
    let scale = c.budget_scale.unwrap_or(1.0);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(l.invalid("budget_scale", format!("{scale} is not a positive number")));
    }
    let filter = c.filter.as_deref();
    if let Some(f) = filter {
        if !criteria().iter().any(|x| x.matches(f)) {
            return Err(l.invalid("filter", format!("no criterion has the tag or id {f:?}")));
        }
    }
    let (records, timings) = run_suite(c.seed, scale, &c.tolerances, filter);
    Ok(CommandOutput { report: Report::new("verify", c, records), artifacts: Vec::new(), timings })
}

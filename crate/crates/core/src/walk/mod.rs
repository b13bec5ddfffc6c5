//! Transient random walks with i.i.d. increments: increment laws, paths,
//! hitting probabilities, Green functions `g(0, x)` and the potential `U`.

mod engine;
mod green;
mod killed;
mod path;
mod spectral;
mod step;

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::hashing::derive_seed;
use crate::lattice::{LatticeError, LatticePoint};
use crate::percolation::PercolationError;

pub use engine::BoundingBox;
pub use green::{
    fit_far_field, green_estimate, ExtendedGreen, GreenDiagnostics, GreenFunction, GreenMethod,
    GreenSidecar, GreenTable, Region,
};
pub use path::{hit_prob_mc, percolated_hit_mc, sample_path, HitEstimate, WalkPath};
pub use step::{Preset, StepDistribution};

pub(crate) use engine::{run_walk, WalkEnd};

/// `g(0, 0)` of the simple random walk on `Z^3` (Watson's integral).
pub const WATSON_SRW3: f64 = 1.516_386_059_151_978;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("the simple random walk in dimension {0} is recurrent")]
    RecurrentPreset(usize),
    #[error("{0}")]
    BadParameter(String),
    #[error("walk looks recurrent: mean origin visits grew from {early:.6} to {late:.6} when the horizon doubled")]
    NonTransient { early: f64, late: f64 },
    #[error("no Green function value for displacement {0}")]
    MissingGreen(LatticePoint),
    #[error("the periodic symbol 1 - φ vanishes away from the origin; the law lives on a sublattice")]
    DegenerateSymbol,
    #[error("conjugate gradient stalled at relative residual {0:e}")]
    NoConvergence(f64),
    #[error("malformed Green table: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
}

/// Random stream of the `index`-th walk under a seed.
pub fn walk_rng(seed: u64, index: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(derive_seed(seed, index))
}

//! Drift families, Euler–Maruyama simulation and increment datasets.

mod dataset;
mod drift;

pub use dataset::{make_increments, simulate, IncrementPairs, InitialLaw, SimConfig, TrajectoryDataset};
pub use drift::{DriftFamily, DriftSpec};

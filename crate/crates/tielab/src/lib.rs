//! Numerical core for studying spurious-feature learning in log-linear DPO
//! and how tie-augmented training data suppresses it.

pub mod datagen;
pub mod deployment;
pub mod equilibrium;
pub mod error;
pub mod moments;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use error::{LabError, Result};
pub use moments::{BlockMatrix, BlockMoments, BlockVector};

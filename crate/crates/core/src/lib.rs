//! Central limit theory for random sums of triangular arrays, evaluated numerically.
//!
//! The crate builds triangular arrays of independent random variables, evaluates the
//! classical and randomized condition functionals (Lindeberg, Lyapunov, Feller,
//! infinitesimality, Rotar), and measures Kolmogorov and Zolotarev distances between
//! random sums and the standard normal law, both exactly and by Monte Carlo.

pub mod cli;
pub mod conditions;
pub mod config;
pub mod counterexample;
pub mod dist;
pub mod error;
pub mod mc;
pub mod metrics;
pub mod output;
pub mod param;
pub mod quad;
pub mod rng;
pub mod selfcheck;
pub mod special;
pub mod tri_array;

pub use dist::{Estimate, IndexTable, RandomIndex, ScalarDistribution};
pub use error::{Error, Result};
pub use tri_array::{Rows, SeriesBase, SumModel, TriangularArray, ValidationReport, ValidationTolerance};

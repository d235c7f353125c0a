//! Bayesian adaptive lasso for linear and generalized models.
//!
//! The crate provides, bottom to top:
//!
//! - [`dist`]: reproducible samplers for the full-conditional distributions.
//! - [`solver`]: coordinate-descent conditional-mode solvers (weighted l1,
//!   quadratic l1, group lasso).
//! - [`linear`]: the Gibbs sampler for Gaussian linear regression with
//!   per-coefficient shrinkage and pluggable penalty regimes.
//! - [`general`]: the quadratic-surrogate extension to general parametric
//!   models, plus grouped and composite (ordered-group) penalties.
//! - [`inference`]: model selection, posterior model probabilities, and
//!   sparse model averaging computed from chains.
//! - [`harness`]: scenario generators, CSV ingestion, and the replication
//!   engine behind the CLI's `run` command.
//! - [`persistence`]: chain/report serialization with checksums and
//!   provenance manifests.

pub mod chain;
pub mod data;
pub mod dist;
pub mod error;
pub mod general;
pub mod groups;
pub mod harness;
pub mod inference;
pub mod linear;
pub mod penalty;
pub mod persistence;
pub mod solver;

pub use chain::{ChainConfig, ChainKind, ChainStore};
pub use data::Dataset;
pub use dist::{InverseGaussianParams, RngHandle};
pub use error::{Error, Result};
pub use groups::{CapStructure, GroupMap};
pub use penalty::{DeltaSetting, PenaltyMode, SaSchedule};
pub use solver::{GroupL1Problem, QuadraticL1Problem, SolverConfig, WeightedL1Problem};

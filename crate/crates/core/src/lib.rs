//! Collaborative filtering under model uncertainty.
//!
//! Trains grids of biased matrix-factorization recommenders, audits which
//! items each Top-N recommender can make available to some user, solves
//! per-user recourse problems, and measures how much availability changes
//! across an ε-level set of near-equivalent models.
//!
//! Modules follow the pipeline: [`ingest`] → [`factorize`] →
//! [`reachability`] → [`multiplicity`] → [`report`].

pub mod checkpoint;
pub mod error;
pub mod factorize;
pub mod ingest;
pub mod linalg;
pub mod multiplicity;
pub mod reachability;
pub mod report;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use factorize::{AlsParams, FactorModel, ModelGridEntry};
pub use ingest::{Rating, RatingDataset};
pub use reachability::{AvailabilitySet, ModelKey};

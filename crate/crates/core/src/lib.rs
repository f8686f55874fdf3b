//! Interest-based re-identification analytics.
//!
//! The crate answers one question against a fully observable population:
//! how many of a user's interests does it take before the audience matching
//! all of them shrinks to that single user? It is organised bottom-up:
//!
//! - [`population`]: synthetic generation, file ingestion, summary statistics
//!   and demographic subgroup views.
//! - [`index`]: an inverted index answering exact audience cardinalities for
//!   interest combinations, plus the reporting-floor censoring an ad platform
//!   applies to the numbers it shows advertisers.
//! - [`selection`]: least-popular and random interest selection, and the
//!   per-user prefix audience vectors for N = 1..=25.
//! - [`estimator`]: quantile vectors, the censored log-log fit and its
//!   cutpoint, row bootstrap confidence intervals, and uniqueness reports.
//! - [`campaign`]: nanotargeting campaign simulation and platform policy gates.
//! - [`risk`]: per-interest risk levels and what-if sessions.
//!
//! Data-parallel loops (matrix construction, bootstrap replicates, campaign
//! batches) go through [`exec`], which runs on rayon when the `parallel`
//! feature is enabled and sequentially otherwise. Results are identical in
//! both modes.

pub mod campaign;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod index;
pub mod population;
pub mod risk;
pub mod seed;
pub mod selection;

pub use error::{Error, ErrorKind, Result};

/// Identifier of an interest in the catalog.
pub type InterestId = u32;

/// Identifier of a user profile.
pub type UserId = u64;

/// Largest interest combination an audience query may use.
pub const MAX_QUERY_INTERESTS: usize = 25;

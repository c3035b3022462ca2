//! Temporal follow-network analysis.
//!
//! The crate covers the whole quantitative pipeline for a growing directed
//! follow network whose nodes carry a weekly numeric attribute:
//!
//! - [`temporal`]: event ingestion, cumulative weekly snapshots, score panels
//!   with gap filling and standardization.
//! - [`metrics`]: density, degree histograms, reciprocity, clustering and
//!   average path length inside the largest strongly connected component.
//! - [`nulls`]: configuration-model and joint-degree null ensembles.
//! - [`homophily`]: numeric assortativity and null-band z-scores.
//! - [`selection`]: formation-only temporal ERGM fitted by maximum
//!   pseudo-likelihood on rolling blocks.
//! - [`influence`]: two-way fixed-effects panel regressions, cluster-robust
//!   errors, a distance-two instrument and 2SLS diagnostics.
//! - [`synth`]: a planted-parameter simulator producing data in the same
//!   input formats, used to check that every estimator recovers the truth.

pub mod error;
pub mod homophily;
pub mod influence;
pub mod metrics;
pub mod nulls;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use temporal::{AgentId, FollowEvent, ScorePanel, Snapshot, TemporalNetwork};

//! Controlled selection-bias induction and class-aware self-training.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] – datasets, CSV ingestion, standardisation and stratified splits.
//! * [`cluster`] – exact agglomerative clustering (Ward and single linkage).
//! * [`bias`] – hierarchy, random, joint and Dirichlet selection bias.
//! * [`learners`] – logistic regression, a small MLP and a bagged forest behind
//!   one fit / predict / embed contract.
//! * [`selftrain`] – conventional self-training and (D)CAST.
//! * [`eval`] – KS and Wilcoxon tests plus the benchmarking protocol.
//! * [`synth`] – seeded Gaussian blob fixtures.

pub mod bias;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod learners;
pub mod rng;
pub mod selftrain;
pub mod synth;

pub use error::{Error, Result};

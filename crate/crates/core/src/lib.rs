//! Connectedness statistics for labeled networks released under
//! edge-adjacent differential privacy.
//!
//! Binary labels: randomized response on labels, debiased Hájek estimate of
//! cross-type connectedness, and Laplace noise calibrated to one edge
//! ([`binary`]). Continuous ranks: truncated Laplace on ranks, a private
//! regression of average friend rank on own rank, and an errors-in-variables
//! slope correction ([`continuous`]).

pub mod binary;
pub mod continuous;
pub mod error;
pub mod exec;
pub mod graph;
pub mod harness;
pub mod indices;
pub mod io;
pub mod netgen;
pub mod noise;
pub mod oracle;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
pub use graph::{BinaryLabel, CellMode, CellSelection, LabeledGraph};
pub use noise::{NoiseMode, PrivacyBudget, RngStream};

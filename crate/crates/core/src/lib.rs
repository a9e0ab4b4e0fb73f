//! Flow-based community detection for bike-share trip networks.
//!
//! The pipeline turns trip records into a directed origin-destination
//! network ([`network`]), computes flow rates ([`flow`]), partitions stations
//! by minimizing the map equation ([`mapeq`], [`infomap`]) and reports how
//! the resulting communities interact ([`analytics`]) and change over the day
//! ([`dynamics`]). Modularity methods are provided for comparison
//! ([`baselines`]).

pub mod analytics;
pub mod baselines;
pub mod compare;
pub mod dynamics;
pub mod error;
pub mod flow;
pub mod infomap;
pub mod ingest;
pub mod manifest;
pub mod mapeq;
pub mod network;
pub mod output;
pub mod synth;

pub use error::{Error, Result};
pub use flow::{FlowModel, FlowOptions, FlowState};
pub use infomap::{infomap, Objective, OptimizationResult, OptimizerConfig};
pub use mapeq::{codelength, Partition};
pub use network::{FlowNetwork, Station};

//! Local exceptionality detection on multi-channel time series.
//!
//! The crate covers the full mining workflow: CSV ingestion and slicing
//! ([`ingest`]), the per-slice feature catalog ([`features`]), tercile
//! discretization ([`discretize`]), the dynamic complexity target
//! ([`dyncomp`]), top-k subgroup discovery ([`sd`]) and the end-to-end
//! pipeline with its configuration and run documents ([`pipeline`]).

pub mod discretize;
pub mod dyncomp;
pub mod error;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod sd;
mod stats;

pub use error::{ConfigError, DiscretizeError, DynCompError, FeatureError, IngestError, PipelineError, SearchError};

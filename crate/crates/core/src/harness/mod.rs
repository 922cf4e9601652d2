//! Circuit grammar, count datasets, the simulated shot backend, config and
//! report emission.

pub mod circuit;
pub mod acceptance;
pub mod backend;
pub mod config;
pub mod dataset;

pub use backend::{DriftModel, OpDurations, SimBackend, SimBackendConfig};
pub use config::{ConfigError, Settings, DEFAULT_CONFIG};
pub use circuit::{parse_circuit, serialize_circuit, Circuit, GateLabel};
pub use dataset::{CountDataset, DatasetError, Record};

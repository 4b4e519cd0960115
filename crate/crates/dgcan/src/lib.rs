//! File formats, training and evaluation runs and plotting on top of
//! `dgcan-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod plot;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use dataset::{Dataset, DatasetPlan, GraspRecord, Manifest, ManifestEntry, StoredScene};
pub use error::{Error, Result};

//! Real-time person search: a load-adaptive backbone scheduler, appearance
//! association with probationary containers, and an orientation-pooled
//! identity gallery.

pub mod config;
pub mod driver;
pub mod error;
pub mod formats;
pub mod matcher;
pub mod metrics;
pub mod provider;
pub mod scheduler;
pub mod simulator;
pub mod types;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use matcher::{Engine, EngineConfig, FrameReport, PooledTable};
pub use scheduler::{derive_thresholds, select_backbone, ThresholdTable};
pub use types::{
    Backbone, BBox, Container, ContainerLabel, ContainerState, CropRef, CropSource, DetectionEvent, EmbeddingRecord,
    GtId, LatencyProfile, Orientation, Payload, PersonId, ProfileSet, FEATURE_DIM, ORIENTATION_COUNT,
};

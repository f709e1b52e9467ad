//! Conditional outlier detection over segmented patient event streams.
//!
//! The pipeline learns, for every patient-management action, a calibrated
//! model of P(action | patient state), scores observed actions by how
//! improbable they are, and raises alerts when an action stays anomalous
//! across two consecutive cut points.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod learner;
pub mod pipeline;
pub mod record;
pub mod review;
pub mod scoring;
pub mod segmentation;
pub mod selection;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use evaluation::{AssessmentRecord, RateWithCI};
pub use features::{FeatureCatalog, FeatureMatrix};
pub use learner::CalibratedActionModel;
pub use pipeline::{PipelineConfig, RunManifest};
pub use record::{PatientRecord, Timestamp};
pub use scoring::{Alert, ScoredPair};
pub use segmentation::{Action, ActionKind, SegmentationPolicy, StateActionInstance};

//! Multi-feature tracking-by-detection.
//!
//! Detections are linked across frames with a weighted pool of eight
//! similarity features. The weights are learned offline with AdaBoost, and
//! tracking quality is scored against ground truth.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod learning;
pub mod model;
pub mod point_tracking;
pub mod similarity;
pub mod synth;
pub mod tracking;

pub use config::{parse_config, validate_config, GaussianMode, LevelWeighting, TrackerConfig};
pub use error::{Error, Result};
pub use evaluation::{evaluate, m_bar, GroundTruthTrack, MetricReport, OutputTrack};
pub use features::{extract_appearance, Appearance, RegionPixels};
pub use learning::{learn_weights, run_adaboost, TrainingPair, TrainingReport};
pub use model::{BBox2D, DetectedObject, FeatureId, FeatureWeights, ObjectKey, WorldPoint3};
pub use similarity::{link_similarity, SimilarityVector};
pub use synth::{synth_generate, ScenarioSpec};
pub use tracking::{track, Tracker, Trajectory};

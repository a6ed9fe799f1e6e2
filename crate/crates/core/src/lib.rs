//! Contamination auditing for time-series forecasting models.
//!
//! The toolkit builds ground-truth contaminated/clean candidate models by
//! controlled pretraining on a synthetic corpus, probes them with a short
//! fine-tuning protocol, and detects contamination from the resulting
//! adaptation dynamics after reference-model debiasing. Decisions are
//! calibrated conservatively so that clean calibration pairs are never (or
//! at most k times) flagged.

pub mod audit;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod forecaster;
pub mod pipeline;
pub mod probe;
pub mod scorer;
pub mod util;

pub use audit::{AuditCalibration, AuditDecision};
pub use corpus::{CorpusManifest, Dataset, LabelManifest, SeriesRecord, WindowSample, WindowSpec};
pub use error::AuditError;
pub use features::{DebiasMode, FeatureConfig, TraceSummary};
pub use forecaster::{Architecture, Checkpoint, Forecaster, OptimizerConfig};
pub use probe::{ProbeConfig, ProbeTrace, TraceStore};
pub use scorer::{EpochScorer, ScorerSelection};

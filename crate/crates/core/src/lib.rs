//! Unified outlier-detection toolkit: nine detectors behind one
//! fit/score/threshold contract, a dataset profiler, a tag-based model
//! selector with optional LLM assistance, and a rank benchmark harness.

pub mod classical;
pub mod data;
pub mod deep;
pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod llm;
pub mod matrix;
pub mod nn;
pub mod profiler;
pub mod registry;
pub mod selector;

pub use data::{DataMatrix, LabeledDataset, ScoreVector};
pub use detector::{
    standardize, threshold_from_contamination, DetectorId, DetectorState, FittedDetector,
    HpValue, Hyperparams, Scaler,
};
pub use error::{OdError, Result};
pub use eval::{
    auroc, average_precision, benchmark, rank_table, render_text, BenchConfig, BenchDataset,
    BenchmarkReport, RankTable,
};
pub use io::{
    censor_labels, load_csv, load_model, make_synthetic, save_csv, save_model, SyntheticDataset,
    SyntheticKind,
};
pub use llm::{ChatMessage, LlmClient, LlmConfig, TranscriptRecord};
pub use matrix::{sq_dist, Matrix};
pub use profiler::{profile, profile_summary_text, DatasetProfile};
pub use registry::{builtin_registry, load_registry, save_registry, ModelMetadata, Registry, Tag};
pub use selector::{select, SelectionResult, SelectorConfig, SelectorMode, TagSet};

//! Continuous suspicion-progression scoring for event-annotated video.
//!
//! The crate turns a track of detected action instances into a per-frame
//! suspicion curve. Ongoing and completed events feed a duration/frequency
//! kernel with exponential decay of finished activity; the three kernel
//! coefficients can either stay fixed or be predicted per frame by a small
//! multimodal network trained against reference curves with a
//! smoothness-aware loss. Evaluation, synthetic data generation and the
//! file formats used by the command-line tool live here too.

pub mod anchor;
pub mod config;
pub mod error;
pub mod event;
pub mod engine;
pub mod eval;
pub mod io;
pub mod loss;
pub mod modulator;
pub mod seeding;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use config::RunConfig;
pub use io::{load_curve_csv, load_dataset_manifest, load_features, save_curve_csv, save_dataset_manifest, save_features, DatasetEntry, DatasetManifest};
pub use synth::{generate as generate_dataset, split_dataset, synthetic_anchor_bank, SynthConfig, SynthDataset};
pub use train::{
    engine_backward, gradcheck, pooled_validation, predict_curve, sequence_loss, train,
    AdamState, CoefficientGrads, GradCheckConfig, GradCheckReport, OptimizerConfig, TrainConfig,
    TrainReport, TrainSequence, ValStats,
};
pub use modulator::{
    backward, load_checkpoint, modulate, modulate_traced, save_checkpoint, FrameFeatureBundle,
    ForwardTape, ModulatorGrads, ModulatorInit, ModulatorOutput, ModulatorParams,
};
pub use event::{
    builtin_categories, partition_at, validate_sequence, ActionCategory, ActionEvent,
    FramePartition, Sequence, Violation, NUM_CATEGORIES,
};
pub use engine::{
    duration_effect, frequency_effect, kernel, score_frame, score_sequence, score_sequence_fast,
    CoefficientTriple, SuspicionCurve,
};

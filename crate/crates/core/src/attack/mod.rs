//! Per-sample and universal attacks through a domain mapping.

mod artifact;
mod deepfool;
mod universal;

pub use artifact::{
    read_history_csv, read_updates_csv, write_history_csv, write_updates_csv, AttackArtifact,
};
pub use deepfool::{deepfool, deepfool_step, DeepFoolConfig, DeepFoolOutcome};
pub use universal::{
    fool_rate, fool_report, l2_target_from_snr, mean_snr_db, universal_attack, AttackConfig,
    AttackState, ClassDelta, FoolReport, IterationRecord, SnrConvention,
};

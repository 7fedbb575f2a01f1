//! Zero-shot transfer evaluation, calibration diagnostics and the
//! two-morphology value-interference probe.

mod metrics;
mod probe;
mod transfer;

pub use metrics::{
    advantage_noise, bucketed_explained_variance, explained_variance, morph_distance, stable_speed_metrics,
    SpeedMetrics,
};
pub use probe::{interference_probe, OracleTask, ProbeConfig, ProbeReport};
pub use transfer::{load_policy, zero_shot_eval, EpisodeRecord, EvalConfig, TargetReport, TraceRow, TransferReport};

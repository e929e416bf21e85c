//! The end-to-end audit loop: fine-tune the target and, every
//! `epoch_interval` epochs, extract properties, train every attack on
//! audit-train and score audit-test.

mod config;
mod report;
mod run;

pub use config::{Attack, DatasetSource, RunConfig, Seeds};
pub use report::{
    compute_peaks, emit_replicate_summary, emit_report, load_report, roc_file_name, summarize_replicates,
    write_report_json, AttackPeaks, AttackResult, AuditCheckpointReport, AuditTrajectory, EpochPeak, ReplicateRow,
    ReplicateSummary, RocPoints, RANDOM_GUESS, SCHEMA_VERSION, TOOLKIT_VERSION,
};
pub use run::{load_pool, run_audit, run_audit_to, CheckpointTiming, Timings};

/// Runs `config` once per seed in `seeds` (all stages seeded uniformly).
pub fn replicate(config: &RunConfig, seeds: &[u64]) -> crate::Result<Vec<AuditTrajectory>> {
    seeds
        .iter()
        .map(|&s| {
            let cfg = RunConfig {
                seeds: Seeds::uniform(s),
                ..config.clone()
            };
            run_audit(&cfg)
        })
        .collect()
}

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Attack, RunConfig, Seeds};
use crate::audit::AuditTrainLog;
use crate::error::{Error, Result};
use crate::metrics::{self, fmt_f64, AttackMetrics, MeanStd, RocSidecar};
use crate::model::Evaluation;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoints {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: Attack,
    pub metrics: AttackMetrics,
    pub roc: RocPoints,
    pub n_members: usize,
    pub n_nonmembers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCheckpointReport {
    pub epoch: usize,
    pub target_train: Evaluation,
    pub target_test: Option<Evaluation>,
    pub attacks: Vec<AttackResult>,
    /// Training losses of the contrastive audit model, when it ran.
    pub parsing_log: Option<AuditTrainLog>,
}

impl AuditCheckpointReport {
    pub fn attack(&self, a: Attack) -> Option<&AttackResult> {
        self.attacks.iter().find(|r| r.attack == a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochPeak {
    pub epoch: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPeaks {
    pub attack: Attack,
    pub balanced_accuracy: EpochPeak,
    pub auc: EpochPeak,
    #[serde(rename = "tpr_at_fpr_0.1")]
    pub tpr_at_fpr_0_1: EpochPeak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTrajectory {
    pub schema_version: u32,
    pub toolkit_version: String,
    /// False while a run is in progress or after it aborted.
    pub complete: bool,
    pub seeds: Seeds,
    pub config: RunConfig,
    pub checkpoints: Vec<AuditCheckpointReport>,
    pub peaks: Vec<AttackPeaks>,
}

impl AuditTrajectory {
    pub fn new(config: &RunConfig) -> Self {
        let mut config = config.clone();
        config.output_dir = None;
        Self {
            schema_version: SCHEMA_VERSION,
            toolkit_version: TOOLKIT_VERSION.to_string(),
            complete: false,
            seeds: config.seeds,
            config,
            checkpoints: Vec::new(),
            peaks: Vec::new(),
        }
    }

    pub fn push(&mut self, report: AuditCheckpointReport) {
        self.checkpoints.push(report);
        self.peaks = compute_peaks(&self.checkpoints);
    }

    pub fn attacks(&self) -> Vec<Attack> {
        let mut a: Vec<Attack> = self.checkpoints.iter().flat_map(|c| c.attacks.iter().map(|r| r.attack)).collect();
        a.sort();
        a.dedup();
        a
    }

    /// One metric across checkpoints for an attack.
    pub fn series(&self, attack: Attack, metric: impl Fn(&AttackMetrics) -> f64) -> Vec<f64> {
        self.checkpoints
            .iter()
            .filter_map(|c| c.attack(attack).map(|r| metric(&r.metrics)))
            .collect()
    }

    pub fn peak(&self, attack: Attack) -> Option<&AttackPeaks> {
        self.peaks.iter().find(|p| p.attack == attack)
    }
}

/// Per-attack maxima (first occurrence) with the epoch they occurred at.
pub fn compute_peaks(checkpoints: &[AuditCheckpointReport]) -> Vec<AttackPeaks> {
    let mut attacks: Vec<Attack> = checkpoints.iter().flat_map(|c| c.attacks.iter().map(|r| r.attack)).collect();
    attacks.sort();
    attacks.dedup();
    attacks
        .into_iter()
        .map(|attack| {
            let rows: Vec<(usize, &AttackMetrics)> = checkpoints
                .iter()
                .filter_map(|c| c.attack(attack).map(|r| (c.epoch, &r.metrics)))
                .collect();
            let at = |f: fn(&AttackMetrics) -> f64| {
                let values: Vec<f64> = rows.iter().map(|(_, m)| f(m)).collect();
                let p = metrics::peak(&values).expect("attack appears in at least one checkpoint");
                EpochPeak {
                    epoch: rows[p.index].0,
                    value: p.value,
                }
            };
            AttackPeaks {
                attack,
                balanced_accuracy: at(|m| m.balanced_accuracy),
                auc: at(|m| m.auc),
                tpr_at_fpr_0_1: at(|m| m.tpr_at_fpr_0_1),
            }
        })
        .collect()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `report.json` atomically (via a temporary file and rename).
pub fn write_report_json(trajectory: &AuditTrajectory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join("report.json.tmp");
    write(&tmp, serde_json::to_string_pretty(trajectory)?)?;
    let dst = dir.join("report.json");
    std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
}

/// Key of the reference entry in `risk_summary.json`.
pub const RANDOM_GUESS: &str = "random_guess";

pub fn roc_file_name(epoch: usize, attack: Attack) -> String {
    format!("roc_epoch{epoch}_{attack}.csv")
}

/// Writes the report, per-checkpoint ROC files with sidecars,
/// `summary.csv` and `risk_summary.json`.
pub fn emit_report(trajectory: &AuditTrajectory, dir: &Path) -> Result<()> {
    if trajectory.checkpoints.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    write_report_json(trajectory, dir)?;
    let mut summary = String::from("epoch,attack,balanced_accuracy,auc,tpr_at_fpr_0.1,target_train_acc,target_test_acc\n");
    for c in &trajectory.checkpoints {
        for r in &c.attacks {
            let curve = metrics::RocCurve {
                fpr: r.roc.fpr.clone(),
                tpr: r.roc.tpr.clone(),
                false_positives: Vec::new(),
                true_positives: Vec::new(),
                positives: r.n_members,
                negatives: r.n_nonmembers,
            };
            let side = RocSidecar {
                auc: r.metrics.auc,
                tpr_at_fpr_0_1: r.metrics.tpr_at_fpr_0_1,
                balanced_accuracy: r.metrics.balanced_accuracy,
                n_members: r.n_members,
                n_nonmembers: r.n_nonmembers,
            };
            metrics::write_roc_csv(&dir.join(roc_file_name(c.epoch, r.attack)), &curve, &side)?;
            let test_acc = c.target_test.map_or_else(String::new, |t| fmt_f64(t.accuracy));
            writeln!(
                summary,
                "{},{},{},{},{},{},{}",
                c.epoch,
                r.attack,
                fmt_f64(r.metrics.balanced_accuracy),
                fmt_f64(r.metrics.auc),
                fmt_f64(r.metrics.tpr_at_fpr_0_1),
                fmt_f64(c.target_train.accuracy),
                test_acc
            )
            .expect("writing to a String");
        }
    }
    write(&dir.join("summary.csv"), summary)?;

    let mut risk: serde_json::Map<String, serde_json::Value> = trajectory
        .peaks
        .iter()
        .map(|p| {
            let v = serde_json::json!({
                "balanced_accuracy": p.balanced_accuracy.value,
                "auc": p.auc.value,
                "tpr_at_fpr_0.1": p.tpr_at_fpr_0_1.value,
            });
            (p.attack.to_string(), v)
        })
        .collect();
    // What a coin-flip attacker scores; the floor of every peak above.
    risk.insert(
        RANDOM_GUESS.to_string(),
        serde_json::json!({
            "balanced_accuracy": 0.5,
            "auc": 0.5,
            "tpr_at_fpr_0.1": metrics::LOW_FPR,
        }),
    );
    write(&dir.join("risk_summary.json"), serde_json::to_string_pretty(&risk)?)
}

pub fn load_report(dir: &Path) -> Result<AuditTrajectory> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let t: AuditTrajectory = serde_json::from_str(&text)?;
    if t.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported report schema version {}", t.schema_version)));
    }
    Ok(t)
}

/// Mean and standard deviation of peak metrics across replicate runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub attack: Attack,
    pub metric: String,
    pub stats: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seeds: Vec<u64>,
    pub rows: Vec<ReplicateRow>,
}

type PeakValue = fn(&AttackPeaks) -> f64;

pub fn summarize_replicates(seeds: Vec<u64>, runs: &[AuditTrajectory]) -> ReplicateSummary {
    let mut rows = Vec::new();
    let attacks = runs.first().map(AuditTrajectory::attacks).unwrap_or_default();
    for attack in attacks {
        let pick: [(&str, PeakValue); 3] = [
            ("peak_balanced_accuracy", |p| p.balanced_accuracy.value),
            ("peak_auc", |p| p.auc.value),
            ("peak_tpr_at_fpr_0.1", |p| p.tpr_at_fpr_0_1.value),
        ];
        for (metric, f) in pick {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.peak(attack).map(f)).collect();
            if let Some(stats) = metrics::mean_std(&values) {
                rows.push(ReplicateRow {
                    attack,
                    metric: metric.to_string(),
                    stats,
                });
            }
        }
    }
    ReplicateSummary { seeds, rows }
}

/// Writes `replicate_summary.json` and `replicate_summary.csv`
/// (`attack,metric,mean,std,n`).
pub fn emit_replicate_summary(summary: &ReplicateSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("replicate_summary.json"), serde_json::to_string_pretty(summary)?)?;
    let mut csv = String::from("attack,metric,mean,std,n\n");
    for r in &summary.rows {
        writeln!(csv, "{},{},{},{},{}", r.attack, r.metric, fmt_f64(r.stats.mean), fmt_f64(r.stats.std), r.stats.n)
            .expect("writing to a String");
    }
    write(&dir.join("replicate_summary.csv"), csv)
}

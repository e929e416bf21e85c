use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Attack, DatasetSource, RunConfig};
use super::report::{write_report_json, AttackResult, AuditCheckpointReport, AuditTrajectory, RocPoints};
use crate::audit::{decide, train_audit_model, AuditModel, AuditTrainLog};
use crate::baselines::{BlackBoxClassifier, BlackBoxConfig, LossThreshold};
use crate::data::{generate_synthetic, load_jsonl, partition, task_examples, Partition, Sample, SyntheticDataset};
use crate::error::{Error, Result};
use crate::metrics::{AttackMetrics, ScoreSet};
use crate::model::{checkpoint, fine_tune, pretrain, EpochStats, TargetModel};
use crate::property::{align, fit_alignment, AlignedRecord, ExtractMode, PropertyCache, PropertyRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTiming {
    pub epoch: usize,
    pub seconds: f64,
}

/// Wall-clock timings, kept out of the report so that reports stay
/// byte-reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub checkpoints: Vec<CheckpointTiming>,
}

pub fn load_pool(config: &RunConfig) -> Result<Vec<Sample>> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => Ok(generate_synthetic(spec, config.seeds.data)?.samples),
        DatasetSource::Jsonl { path } => load_jsonl(path, config.model.vocab_size),
    }
}

/// Runs the audit loop without writing anything.
pub fn run_audit(config: &RunConfig) -> Result<AuditTrajectory> {
    Ok(run_audit_to(config, None)?.0)
}

/// Runs the audit loop. With `flush_dir`, `report.json` is rewritten after
/// every audited checkpoint (with `complete: false`) and on failure.
pub fn run_audit_to(config: &RunConfig, flush_dir: Option<&Path>) -> Result<(AuditTrajectory, Timings)> {
    config.validate()?;
    let start = Instant::now();
    let mut trajectory = AuditTrajectory::new(config);
    let mut timings = Timings::default();
    let result = run_inner(config, flush_dir, &mut trajectory, &mut timings);
    timings.total_seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => {
            trajectory.complete = true;
            Ok((trajectory, timings))
        }
        Err(e) => {
            if let Some(dir) = flush_dir {
                if let Err(flush) = write_report_json(&trajectory, dir) {
                    log::error!("could not flush partial trajectory: {flush}");
                }
            }
            Err(e)
        }
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn run_inner(config: &RunConfig, flush_dir: Option<&Path>, trajectory: &mut AuditTrajectory, timings: &mut Timings) -> Result<()> {
    let pool = stage("data", load_pool(config))?;
    let split = stage("partition", partition(&pool, &config.partition, config.seeds.partition))?;
    if let Some(dir) = flush_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = serde_json::to_string_pretty(&split.manifest(config.seeds.partition))?;
        let path = dir.join("partition_manifest.json");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    }

    let mut model = stage("target-init", TargetModel::new(config.model.clone(), config.seeds.target_init))?;
    if let Some(pre) = &config.pretrain {
        let corpus = stage("pretrain", pretrain_corpus(config, pre.corpus_size))?;
        stage("pretrain", pretrain(&mut model, &task_examples(&corpus), pre, config.seeds.finetune))?;
    }

    let train = task_examples(&split.ft_train);
    let test = task_examples(&split.ft_test);
    let mut ft = config.finetune.clone();
    ft.eval_interval = config.epoch_interval;

    let mut cache = PropertyCache::new();
    let mut previous: Option<AuditModel> = None;
    let mut checkpoint_start = Instant::now();
    let outcome = fine_tune(&mut model, &train, &test, &ft, config.seeds.finetune, |stats, model| {
        if stats.epoch % config.epoch_interval != 0 {
            return Ok(());
        }
        let (report, parsing) = audit_checkpoint(config, model, stats, &split, &mut cache, previous.as_ref())?;
        log::info!(
            "epoch {}: {}",
            stats.epoch,
            report
                .attacks
                .iter()
                .map(|r| format!("{} ba={:.3} auc={:.3}", r.attack, r.metrics.balanced_accuracy, r.metrics.auc))
                .collect::<Vec<_>>()
                .join(", ")
        );
        if config.audit.warm_start {
            previous = parsing;
        }
        trajectory.push(report);
        timings.checkpoints.push(CheckpointTiming {
            epoch: stats.epoch,
            seconds: checkpoint_start.elapsed().as_secs_f64(),
        });
        checkpoint_start = Instant::now();
        if let Some(dir) = flush_dir {
            write_report_json(trajectory, dir)?;
        }
        Ok(())
    });
    outcome.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        other => other.in_stage("finetune"),
    })?;
    Ok(())
}

/// Held-out pretraining text: the same generator under a distinct seed.
fn pretrain_corpus(config: &RunConfig, size: usize) -> Result<Vec<Sample>> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => {
            let spec = crate::data::SyntheticSpec {
                size,
                canaries: 0,
                ..spec.clone()
            };
            let SyntheticDataset { samples, .. } = generate_synthetic(&spec, config.seeds.data ^ 0x5052_4554_5241_494e)?;
            Ok(samples)
        }
        DatasetSource::Jsonl { .. } => Err(Error::Config("pretraining needs a synthetic dataset source".into())),
    }
}

fn extract_mode(config: &RunConfig) -> ExtractMode {
    let parsing = config.attacks.contains(&Attack::Parsing);
    let forward = config.attacks.iter().any(|a| matches!(a, Attack::ALoss | Attack::ABlack));
    match (parsing, config.audit.mode) {
        (false, _) => ExtractMode::Forward,
        (true, ExtractMode::Both) => ExtractMode::Both,
        (true, ExtractMode::Forward) => ExtractMode::Forward,
        (true, ExtractMode::Backward) if forward => ExtractMode::Both,
        (true, ExtractMode::Backward) => ExtractMode::Backward,
    }
}

fn result(attack: Attack, scores: Vec<f64>, decisions: Vec<u8>, labels: &[u8]) -> Result<AttackResult> {
    let set = ScoreSet::new(scores, labels.to_vec())?;
    let (metrics, curve) = AttackMetrics::compute(&set, &decisions)?;
    Ok(AttackResult {
        attack,
        metrics,
        roc: RocPoints {
            fpr: curve.fpr,
            tpr: curve.tpr,
        },
        n_members: set.positives(),
        n_nonmembers: set.negatives(),
    })
}

/// Audits one checkpoint with every configured attack.
fn audit_checkpoint(
    config: &RunConfig,
    model: &TargetModel,
    stats: &EpochStats,
    split: &Partition,
    cache: &mut PropertyCache,
    previous: Option<&AuditModel>,
) -> Result<(AuditCheckpointReport, Option<AuditModel>)> {
    let sum = checkpoint::checksum(model);
    cache.retain_checkpoint(&sum);
    let mode = extract_mode(config);
    let (audit_train, audit_test) = (&split.audit.train, &split.audit.test);
    let train_m = stage("extract", cache.extract_all(model, &audit_train.members, mode))?;
    let train_n = stage("extract", cache.extract_all(model, &audit_train.non_members, mode))?;
    let test: Vec<PropertyRecord> = stage("extract", cache.extract_all(model, audit_test.samples(), mode))?;
    let labels = audit_test.labels();
    let seed = config.seeds.audit ^ (stats.epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);

    let mut attacks = Vec::new();
    let mut parsing_log: Option<AuditTrainLog> = None;
    let mut parsing_model = None;
    for &attack in &config.attacks {
        let r = match attack {
            Attack::Parsing => stage("parsing", {
                let a = &config.audit;
                (|| {
                    let all: Vec<PropertyRecord> = train_m.iter().chain(&train_n).cloned().collect();
                    let alignment = fit_alignment(&all, a.mode, a.forward_layers.as_deref())?;
                    let al = |rs: &[PropertyRecord]| rs.iter().map(|r| align(r, &alignment)).collect::<Result<Vec<AlignedRecord>>>();
                    let (am, an, at) = (al(&train_m)?, al(&train_n)?, al(&test)?);
                    let (audit_model, log) = train_audit_model(&am, &an, alignment.clone(), a, sum.clone(), seed, previous)?;
                    let scores = audit_model.scores(&at)?;
                    let decisions = scores.iter().map(|&s| decide(s)).collect();
                    parsing_log = Some(log);
                    parsing_model = Some(audit_model);
                    result(attack, scores, decisions, &labels)
                })()
            })?,
            Attack::ALoss => stage("a_loss", {
                (|| {
                    let lm: Vec<f64> = train_m.iter().map(PropertyRecord::loss).collect();
                    let ln: Vec<f64> = train_n.iter().map(PropertyRecord::loss).collect();
                    let t = LossThreshold::fit(&lm, &ln)?;
                    let scores: Vec<f64> = test.iter().map(|r| LossThreshold::score(r.loss())).collect();
                    let decisions = scores.iter().map(|&s| t.decide_score(s)).collect();
                    result(attack, scores, decisions, &labels)
                })()
            })?,
            Attack::ABlack => stage("a_black", {
                (|| {
                    let bb = BlackBoxConfig {
                        hidden: config.audit.classifier_hidden,
                        lr: config.audit.lr,
                        epochs: config.audit.epochs,
                        batch_size: config.audit.batch_size,
                        zero_features: false,
                    };
                    let clf = BlackBoxClassifier::train(&train_m, &train_n, &bb, seed)?;
                    let scores = clf.scores(&test)?;
                    let decisions = scores.iter().map(|&s| decide(s)).collect();
                    result(attack, scores, decisions, &labels)
                })()
            })?,
        };
        attacks.push(r);
    }
    let target_train = stats.train.ok_or_else(|| Error::Config("checkpoint without train evaluation".into()))?;
    Ok((
        AuditCheckpointReport {
            epoch: stats.epoch,
            target_train,
            target_test: stats.test,
            attacks,
            parsing_log,
        },
        parsing_model,
    ))
}

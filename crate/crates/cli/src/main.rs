//! `privaudit`: generate data, fine-tune, audit and summarize.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privaudit::data::{partition, task_examples, write_jsonl};
use privaudit::model::{checkpoint, fine_tune, TargetModel};
use privaudit::orchestrator::{
    emit_replicate_summary, emit_report, load_pool, load_report, run_audit_to, summarize_replicates, Attack,
    DatasetSource, RunConfig, Seeds,
};
use privaudit::Error;

/// Environment variable that overrides the output directory unless
/// `--out` is given.
const OUT_ENV: &str = "PRIVAUDIT_OUT";
const DEFAULT_OUT: &str = "privaudit-out";

#[derive(Parser)]
#[command(name = "privaudit", version, about = "White-box membership-inference auditing of a fine-tuned transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic pool and its partition manifest.
    GenData(Common),
    /// Fine-tune the target model and save checkpoints.
    Finetune(Common),
    /// Run the full audit loop and write the report.
    Audit(Common),
    /// Re-emit ROC files and summaries from an existing report.json.
    Report(Common),
    /// Repeat `audit` over consecutive seeds and summarize mean and std.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, starting at --seed (or the config's audit seed).
        #[arg(long, default_value_t = 10)]
        n: u64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed every pipeline stage with this value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides $PRIVAUDIT_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    epoch_interval: Option<usize>,
    /// Target fine-tuning batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Target fine-tuning learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Synthetic task difficulty in [0, 1].
    #[arg(long)]
    difficulty: Option<f64>,
    /// Comma-separated subset of parsing,a_loss,a_black.
    #[arg(long, value_delimiter = ',')]
    attacks: Option<Vec<String>>,
    /// Audit-model training epochs.
    #[arg(long)]
    audit_epochs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf), Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = Seeds::uniform(s);
        }
        if let Some(e) = self.epochs {
            cfg.finetune.epochs = e;
        }
        if let Some(i) = self.epoch_interval {
            cfg.epoch_interval = i;
        }
        if let Some(b) = self.batch_size {
            cfg.finetune.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.finetune.lr = lr;
        }
        if let Some(d) = self.difficulty {
            match &mut cfg.dataset {
                DatasetSource::Synthetic(spec) => spec.difficulty = d,
                DatasetSource::Jsonl { .. } => return Err(Error::Config("--difficulty needs a synthetic dataset".into())),
            }
        }
        if let Some(a) = &self.attacks {
            cfg.attacks = a.iter().map(|s| s.parse::<Attack>()).collect::<Result<_, _>>()?;
        }
        if let Some(e) = self.audit_epochs {
            cfg.audit.epochs = e;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        cfg.output_dir = Some(out.clone());
        Ok((cfg, out))
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: String) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(common: &Common) -> Result<(), Error> {
    let (cfg, out) = common.resolve()?;
    create_dir(&out)?;
    let pool = load_pool(&cfg)?;
    let split = partition(&pool, &cfg.partition, cfg.seeds.partition)?;
    let path = out.join("dataset.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_jsonl(std::io::BufWriter::new(file), &pool)?;
    write(&out.join("partition_manifest.json"), serde_json::to_string_pretty(&split.manifest(cfg.seeds.partition))?)?;
    println!("wrote {} samples to {}", pool.len(), path.display());
    Ok(())
}

fn finetune(common: &Common) -> Result<(), Error> {
    let (cfg, out) = common.resolve()?;
    create_dir(&out)?;
    let pool = load_pool(&cfg)?;
    let split = partition(&pool, &cfg.partition, cfg.seeds.partition)?;
    let mut model = TargetModel::new(cfg.model.clone(), cfg.seeds.target_init)?;
    let mut ft = cfg.finetune.clone();
    ft.eval_interval = cfg.epoch_interval;
    let history = fine_tune(
        &mut model,
        &task_examples(&split.ft_train),
        &task_examples(&split.ft_test),
        &ft,
        cfg.seeds.finetune,
        |stats, m| {
            if stats.epoch % cfg.epoch_interval == 0 {
                checkpoint::save(m, &out.join(format!("checkpoint_epoch{}.json", stats.epoch)))?;
            }
            Ok(())
        },
    )?;
    write(&out.join("finetune_history.json"), serde_json::to_string_pretty(&history)?)?;
    println!("fine-tuned for {} epochs; checkpoints in {}", history.len(), out.display());
    Ok(())
}

fn audit_into(cfg: &RunConfig, out: &Path) -> Result<privaudit::orchestrator::AuditTrajectory, Error> {
    create_dir(out)?;
    let (trajectory, timings) = run_audit_to(cfg, Some(out))?;
    emit_report(&trajectory, out)?;
    write(&out.join("timings.json"), serde_json::to_string_pretty(&timings)?)?;
    Ok(trajectory)
}

fn print_peaks(t: &privaudit::orchestrator::AuditTrajectory) {
    for p in &t.peaks {
        println!(
            "{:<8} peak balanced_accuracy {:.4} (epoch {}), auc {:.4}, tpr@0.1 {:.4}",
            p.attack.to_string(),
            p.balanced_accuracy.value,
            p.balanced_accuracy.epoch,
            p.auc.value,
            p.tpr_at_fpr_0_1.value
        );
    }
}

fn audit(common: &Common) -> Result<(), Error> {
    let (cfg, out) = common.resolve()?;
    let t = audit_into(&cfg, &out)?;
    print_peaks(&t);
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

fn report(common: &Common) -> Result<(), Error> {
    let (_, out) = common.resolve()?;
    let t = load_report(&out)?;
    emit_report(&t, &out)?;
    print_peaks(&t);
    Ok(())
}

fn replicate(common: &Common, n: u64) -> Result<(), Error> {
    if n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let (cfg, out) = common.resolve()?;
    let base = common.seed.unwrap_or(cfg.seeds.audit);
    let seeds: Vec<u64> = (base..base + n).collect();
    let mut runs = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let run_cfg = RunConfig {
            seeds: Seeds::uniform(s),
            ..cfg.clone()
        };
        log::info!("replicate seed {s}");
        runs.push(audit_into(&run_cfg, &out.join(format!("seed_{s}")))?);
    }
    let summary = summarize_replicates(seeds, &runs);
    emit_replicate_summary(&summary, &out)?;
    for r in &summary.rows {
        println!("{:<8} {:<24} {:.4} ± {:.4}", r.attack.to_string(), r.metric, r.stats.mean, r.stats.std);
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    let root = match e {
        Error::Stage { source, .. } => source.as_ref(),
        other => other,
    };
    match root {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Finetune(c) => finetune(c),
        Command::Audit(c) => audit(c),
        Command::Report(c) => report(c),
        Command::Replicate { common, n } => replicate(common, *n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

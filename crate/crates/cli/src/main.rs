//! Command-line front end for the audit pipeline. Every subcommand reads
//! the declarative run configuration, applies flag overrides, and executes
//! one file-mediated stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use probe_audit_core::error::AuditError;
use probe_audit_core::pipeline::{
    probe_length_sweep, stage_audit, stage_deploy, stage_evaluate, stage_gen_corpus,
    stage_pretrain, stage_probe, stage_report, RunConfig,
};

#[derive(Parser)]
#[command(name = "probe-audit", about = "Contamination auditing for time-series forecasters", version)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the corpus/model seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the false-positive budget k.
    #[arg(long, global = true)]
    fp_budget: Option<usize>,

    /// Override the feature configuration tag
    /// (no_ref | single_ref:<id> | all_ref | all_ref_det | loss_only,
    /// optionally suffixed with @full/@diff/@ratio/@inter).
    #[arg(long, global = true)]
    feature_config: Option<String>,

    /// Override the number of probe epochs.
    #[arg(long, global = true)]
    probe_epochs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, filter, and persist the synthetic corpus and label grid.
    GenCorpus,
    /// Pretrain candidates and snapshot all probe-origin checkpoints.
    Pretrain,
    /// Run the fine-tuning probe over every (model, dataset) pair.
    Probe {
        /// Worker threads for the probe loop (each owns its models).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Fit epochwise scorers, select the epoch, calibrate the FP-k
    /// threshold, and emit per-repeat decisions plus the frozen audit.
    Audit,
    /// Evaluate the configured method and all baselines over repeated
    /// splits; write the aggregated metric report.
    Evaluate {
        /// Optional probe-length sweep values (traces are truncated, not
        /// re-probed); results are printed after the main report.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
    },
    /// Apply the frozen audit to an external feature file without
    /// re-fitting anything.
    Deploy {
        /// JSON-lines per-pair feature file produced under the same probe
        /// configuration.
        #[arg(long)]
        features: PathBuf,
    },
    /// Render the metric report as a readable summary table.
    Report,
}

fn exit_code_for(err: &AuditError) -> u8 {
    match err {
        AuditError::Config(_)
        | AuditError::Serde(_)
        | AuditError::Shape(_)
        | AuditError::DatasetRejected { .. }
        | AuditError::ConfigHashMismatch { .. } => 2,
        AuditError::MissingPrerequisite(_) | AuditError::Io(_) => 3,
        AuditError::Numerical(_) => 4,
    }
}

fn run(cli: &Cli) -> Result<(), AuditError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.to_string_lossy().to_string();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.fp_budget {
        cfg.fp_budget = k;
    }
    if let Some(fc) = &cli.feature_config {
        cfg.feature_config = fc.clone();
    }
    if let Some(t) = cli.probe_epochs {
        cfg.probe.t_probe = t;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    match &cli.command {
        Command::GenCorpus => stage_gen_corpus(&cfg),
        Command::Pretrain => stage_pretrain(&cfg),
        Command::Probe { workers } => stage_probe(&cfg, *workers),
        Command::Audit => stage_audit(&cfg),
        Command::Evaluate { sweep } => {
            stage_evaluate(&cfg)?;
            if !sweep.is_empty() {
                for (t, rows) in probe_length_sweep(&cfg, sweep)? {
                    for r in rows
                        .iter()
                        .filter(|r| r.level == "pair_micro" && r.metric == "mcc")
                    {
                        println!("T={t} {} pair_micro mcc {:.4} ± {:.4}", r.method, r.mean, r.std);
                    }
                }
            }
            Ok(())
        }
        Command::Deploy { features } => {
            let summary = stage_deploy(&cfg, features)?;
            for row in summary {
                println!(
                    "{}: {}/{} clean, non-leak rate {:.2}% (95% lower bound {:.2}%)",
                    row.candidate_id,
                    row.n_pairs - row.n_flagged,
                    row.n_pairs,
                    row.non_leak_rate,
                    row.cp_lower_95
                );
            }
            Ok(())
        }
        Command::Report => {
            stage_report(&cfg)?;
            let summary = cfg.paths().summary;
            print!("{}", std::fs::read_to_string(summary)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

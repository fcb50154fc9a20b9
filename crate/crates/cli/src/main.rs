use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mlkd::config::{Overrides, RunConfig};
use mlkd::data::Attribute;
use mlkd::losses::CorrelationLossRegistry;
use mlkd::mutual::train::TrainMode;
use mlkd::pipeline;

/// Mutual-learning knowledge distillation for low-light tracking.
#[derive(Parser)]
#[command(name = "mlkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic training and evaluation sets.
    GenData(Common),
    /// Train the teacher or a student cohort.
    Train(Common),
    /// Evaluate checkpoints and compare them.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoints to evaluate; defaults to every checkpoint of the run.
        models: Vec<PathBuf>,
    },
    /// Train every variant and write the ablation table.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags take precedence over its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// teacher, student-no-crl, students-independent or students-mutual.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated attribute names to restrict evaluation to.
    #[arg(long, value_delimiter = ',')]
    attributes: Option<Vec<String>>,
}

impl Common {
    fn resolve(&self, registry: &CorrelationLossRegistry) -> mlkd::Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let overrides = Overrides {
            seed: self.seed,
            out_dir: self.out.clone(),
            mode: self.mode.as_deref().map(str::parse::<TrainMode>).transpose()?,
            attributes: self
                .attributes
                .as_ref()
                .map(|v| v.iter().map(|a| a.parse::<Attribute>()).collect())
                .transpose()?,
        };
        base.apply(&overrides).resolve(registry)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let registry = CorrelationLossRegistry::default();
    match cli.command {
        Command::GenData(c) => {
            let cfg = c.resolve(&registry)?;
            let s = pipeline::cmd_gen_data(&cfg)?;
            println!(
                "wrote {} training sequences ({} frames) and {} evaluation sequences ({} frames) under {}",
                s.train_sequences,
                s.train_frames,
                s.eval_sequences,
                s.eval_frames,
                s.root.display()
            );
        }
        Command::Train(c) => {
            let cfg = c.resolve(&registry)?;
            let out = pipeline::cmd_train(&cfg, &registry)?;
            for m in &out.models {
                println!("{}", pipeline::model_checkpoint(&cfg, &m.name).display());
            }
            if out.mode == TrainMode::StudentsMutual {
                println!("election histogram: {:?}", out.election_histogram);
            }
        }
        Command::Eval { common, models } => {
            let cfg = common.resolve(&registry)?;
            let s = pipeline::cmd_eval(&cfg, &models)?;
            print!("{}", s.table.to_text());
            match &s.mlkd_track {
                Some(name) => println!("MLKD-Track: {name}"),
                None => println!("MLKD-Track: no mutual-learning student among the evaluated models"),
            }
        }
        Command::Ablate(c) => {
            let cfg = c.resolve(&registry)?;
            let r = pipeline::cmd_ablate(&cfg, &registry)?;
            print!("{}", r.table.to_text());
            println!("MLKD-Track: {}", r.mlkd_track);
            println!("election histogram: {:?}", r.election_histogram);
            println!("{}", r.csv_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli).context("mlkd failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let user = e.chain().any(|c| c.downcast_ref::<mlkd::Error>().is_some_and(mlkd::Error::is_user_error));
            ExitCode::from(if user { 2 } else { 1 })
        }
    }
}

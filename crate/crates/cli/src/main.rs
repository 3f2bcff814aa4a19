//! `riskbench` command-line driver.
//!
//! Every subcommand resolves a [`RunConfig`], maps it to its run directory
//! `<out>/run-<hash>` and executes one stage (or all of them) there.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskbench::features::Task;
use riskbench::model::{BackboneKind, ModelConfig};
use riskbench::pipeline::{Run, RunConfig, Stage, RUN_CONFIG};
use riskbench::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "riskbench", version, about = "Synthetic EMR risk-prediction benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus.
    Generate(Common),
    /// Filter and label episodes.
    Cohort(Common),
    /// Build ward contact graphs and network features.
    Network(Common),
    /// Assemble feature matrices and schemas.
    Featurize(Common),
    /// Cross-validate the selected models.
    Train(Common),
    /// Attributions, heatmaps and projections.
    Explain(Common),
    /// Summary tables and rank plots.
    Report(Common),
    /// Every stage in order.
    All(Common),
    /// Print the resolved configuration and its run directory.
    Config(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Directory with episodes.csv and beddays.csv (skips generation).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Comma-separated tasks or `all`.
    #[arg(long)]
    task: Option<String>,
    /// Comma-separated models or `all`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Riemann steps for Integrated Gradients.
    #[arg(long)]
    ig_steps: Option<usize>,
    /// Write one contact-edge CSV per day.
    #[arg(long)]
    emit_graphs: bool,
    /// Base configuration; a `run_config.json` inside a run directory
    /// reopens that run when no other flag changes it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_list<T: Copy>(spec: &str, all: &[T], parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if spec == "all" {
        return Ok(all.to_vec());
    }
    spec.split(',').map(|s| parse(s.trim())).collect()
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => riskbench::io::read_json(path)?,
            None => RunConfig::default(),
        };
        if let Some(input) = &self.input {
            cfg.input = Some(input.clone());
        }
        if let Some(t) = &self.task {
            cfg.tasks = parse_list(t, &Task::ALL, Task::parse)?;
        }
        if let Some(m) = &self.model {
            let kinds = parse_list(m, &BackboneKind::ALL, BackboneKind::parse)?;
            cfg.models = kinds
                .into_iter()
                .map(|k| {
                    cfg.models
                        .iter()
                        .find(|c| c.backbone.kind == k)
                        .cloned()
                        .unwrap_or_else(|| ModelConfig::for_kind(k))
                })
                .collect();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.folds {
            cfg.folds = f;
        }
        if let Some(m) = self.ig_steps {
            cfg.ig.steps = m;
        }
        if self.emit_graphs {
            cfg.emit_graphs = true;
        }
        Ok(cfg)
    }

    fn run(&self) -> Result<Run> {
        let cfg = self.resolve()?;
        if let Some(path) = &self.config {
            if path.file_name().is_some_and(|n| n == RUN_CONFIG) {
                let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                let opened = Run::open(dir)?;
                if opened.hash == cfg.hash() {
                    return Ok(opened);
                }
            }
        }
        Run::create(&self.out, cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let (common, stage) = match &cli.command {
        Command::Generate(c) => (c, Some(Stage::Generate)),
        Command::Cohort(c) => (c, Some(Stage::Cohort)),
        Command::Network(c) => (c, Some(Stage::Network)),
        Command::Featurize(c) => (c, Some(Stage::Featurize)),
        Command::Train(c) => (c, Some(Stage::Train)),
        Command::Explain(c) => (c, Some(Stage::Explain)),
        Command::Report(c) => (c, Some(Stage::Report)),
        Command::All(c) | Command::Config(c) => (c, None),
    };
    if let Command::Config(_) = cli.command {
        let cfg = common.resolve()?;
        cfg.validate()?;
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let run = common.run()?;
    match stage {
        Some(s) => run.run_stage(s)?,
        None => run.run_all()?,
    }
    println!("{}", run.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::MissingArtifact(_) => ExitCode::from(3),
                Error::Config(_) | Error::Schema(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use ecg_guard::identity::LikelihoodStrategy;

use crate::config::{keys_help, ExperimentConfig, ThresholdSource};
use crate::{commands, CliError, Context};

#[derive(Debug, Parser)]
#[command(name = "ecg-guard", version, about = "ECG same-patient verification and assignment-mistake detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort (dataset.ecgg, dataset.manifest, synth.json).
    Synth(Overrides),
    /// Convert JSON-lines recordings into a container (dataset.ecgg, dataset.manifest, ingest.json).
    Ingest(Overrides),
    /// Phase one: metric learning of the embedder (embedder.ckpt, train_embed.json).
    TrainEmbed(Overrides),
    /// Phase two: Siamese training of the discriminator head
    /// (discriminator.ckpt, siamese_embedder.ckpt, train_disc.json).
    TrainDisc(Overrides),
    /// Pairwise AUROC and gallery-probe accuracy (gallery_probe.json).
    GalleryProbe(Overrides),
    /// Overseer simulation (simulation.json, report.txt, summary.json).
    Simulate(Overrides),
    /// Latency of a single overseer check (bench.json).
    Bench(Overrides),
    /// Render a saved simulation (report.txt, summary.json).
    Report(Overrides),
    /// Embed the evaluation dataset into a vector database (vectors.ecgv, db_import.json).
    DbImport(Overrides),
    /// Dump a vector database as text lines (vectors.tsv).
    DbDump(Overrides),
    /// Print the effective configuration as TOML.
    PrintConfig(Overrides),
}

/// Flags shared by every command; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Experiment config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; relative config paths resolve against it.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run every loop sequentially.
    #[arg(long)]
    pub sequential: bool,
    /// JSON-lines input of `ingest`, or the simulation file of `report`.
    #[arg(long)]
    pub input: Option<String>,
    /// Training dataset (paths.dataset).
    #[arg(long)]
    pub data: Option<String>,
    /// Evaluation dataset (paths.eval_dataset).
    #[arg(long)]
    pub eval_data: Option<String>,
    /// Calibration dataset (paths.dev_dataset).
    #[arg(long)]
    pub dev_data: Option<String>,
    /// Embedder checkpoint: the phase-one input of train-disc, the trained
    /// embedder of evaluation commands.
    #[arg(long)]
    pub embedder: Option<String>,
    /// Discriminator checkpoint (paths.discriminator).
    #[arg(long)]
    pub discriminator: Option<String>,
    /// Vector database (paths.database).
    #[arg(long)]
    pub database: Option<String>,
    /// Patients to generate for synth, registered patients otherwise.
    #[arg(long)]
    pub n_patients: Option<usize>,
    /// First patient id of a synthetic cohort.
    #[arg(long)]
    pub first_patient_id: Option<u32>,
    #[arg(long)]
    pub n_probe: Option<usize>,
    #[arg(long)]
    pub mistake_rate: Option<f64>,
    /// vec_avg, disc_avg, weighted_disc_avg or weighted_consistency.
    #[arg(long)]
    pub strategy: Option<LikelihoodStrategy>,
    /// Fixed flagging threshold; disables dev calibration.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Gallery-probe sample size.
    #[arg(long)]
    pub sample_size: Option<usize>,
}

impl Overrides {
    /// Loads the config file (or defaults) and applies the flags.
    pub fn config(&self, command: &str) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.sequential {
            cfg.parallel = false;
        }
        let p = &mut cfg.paths;
        let set = |dst: &mut String, src: &Option<String>| {
            if let Some(s) = src {
                dst.clone_from(s);
            }
        };
        set(&mut p.dataset, &self.data);
        set(&mut p.eval_dataset, &self.eval_data);
        set(&mut p.dev_dataset, &self.dev_data);
        set(&mut p.discriminator, &self.discriminator);
        set(&mut p.database, &self.database);
        if command == "train-disc" {
            set(&mut p.embedder, &self.embedder);
        } else {
            set(&mut p.siamese_embedder, &self.embedder);
        }
        if command == "report" {
            set(&mut p.simulation, &self.input);
        }
        if let Some(n) = self.n_patients {
            if command == "synth" {
                cfg.data.n_patients = n;
            } else {
                cfg.simulation.n_initial_patients = n;
            }
        }
        if let Some(id) = self.first_patient_id {
            cfg.data.first_patient_id = id;
        }
        let sim = &mut cfg.simulation;
        if let Some(k) = self.n_probe {
            sim.n_probe = k;
        }
        if let Some(r) = self.mistake_rate {
            sim.mistake_rate = r;
        }
        if let Some(s) = self.strategy {
            sim.strategy = s;
        }
        if let Some(t) = self.threshold {
            sim.threshold = t;
            sim.threshold_source = ThresholdSource::Fixed;
        }
        if let Some(n) = self.sample_size {
            cfg.evaluation.gallery_sample_size = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn command() -> clap::Command {
    Cli::command().after_long_help(keys_help())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(&cli.command) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command) -> Result<String, CliError> {
    let (name, o) = match command {
        Command::Synth(o) => ("synth", o),
        Command::Ingest(o) => ("ingest", o),
        Command::TrainEmbed(o) => ("train-embed", o),
        Command::TrainDisc(o) => ("train-disc", o),
        Command::GalleryProbe(o) => ("gallery-probe", o),
        Command::Simulate(o) => ("simulate", o),
        Command::Bench(o) => ("bench", o),
        Command::Report(o) => ("report", o),
        Command::DbImport(o) => ("db-import", o),
        Command::DbDump(o) => ("db-dump", o),
        Command::PrintConfig(o) => ("print-config", o),
    };
    let cfg = o.config(name)?;
    if name == "print-config" {
        return Ok(cfg.to_toml());
    }
    let ctx = Context::new(cfg, &o.out);
    let json = |v: serde_json::Value| v.to_string();
    Ok(match command {
        Command::Synth(_) => {
            let s = commands::cmd_synth(&ctx)?;
            format!("synthesised {} records of {} patients", s.records, s.patients)
        }
        Command::Ingest(_) => {
            let input = o.input.as_ref().ok_or_else(|| CliError::Config("ingest needs --input".into()))?;
            let s = commands::cmd_ingest(&ctx, input.as_ref())?;
            format!("ingested {} records of {} patients", s.records, s.patients)
        }
        Command::TrainEmbed(_) => {
            let r = commands::cmd_train_embed(&ctx)?;
            format!("trained {} steps, best step {}", r.metric.steps_taken, r.metric.best_step)
        }
        Command::TrainDisc(_) => {
            let r = commands::cmd_train_disc(&ctx)?;
            let best = r.siamese.as_ref().or(r.warmup.as_ref()).map_or(0, |p| p.best_step);
            format!("trained discriminator, best step {best}")
        }
        Command::GalleryProbe(_) => {
            let r = commands::cmd_gallery_probe(&ctx)?;
            json(serde_json::json!({"pairwise_auroc": r.pairwise_auroc, "gallery_accuracy": r.mean_accuracy}))
        }
        Command::Simulate(_) => {
            let s = crate::render::summary(&commands::cmd_simulate(&ctx)?);
            json(
                serde_json::json!({"threshold": s.threshold, "recall": s.recall, "precision": s.precision, "f1": s.f1}),
            )
        }
        Command::Bench(_) => {
            let r = commands::cmd_bench(&ctx)?;
            format!("mean {:.3} ms, median {:.3} ms, p99 {:.3} ms", r.mean_ms, r.median_ms, r.p99_ms)
        }
        Command::Report(_) => {
            let s = commands::cmd_report(&ctx)?;
            json(serde_json::json!({"recall": s.recall, "precision": s.precision, "f1": s.f1}))
        }
        Command::DbImport(_) => {
            let r = commands::cmd_db_import(&ctx)?;
            format!("stored {} vectors of {} patients", r.vectors, r.patients)
        }
        Command::DbDump(_) => format!("wrote {}", commands::cmd_db_dump(&ctx)?.display()),
        Command::PrintConfig(_) => unreachable!(),
    })
}

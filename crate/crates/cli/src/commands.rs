use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ecg_guard::discriminator::{train_siamese, DiscriminatorHead, FineTune, SiameseTrainConfig, SiameseTrainReport};
use ecg_guard::ecgstore::{write_container, write_manifest, DatasetContainer, ModelInput};
use ecg_guard::embedder::{train_metric, EcgVector, Embedder, MetricTrainConfig};
use ecg_guard::evalharness::{
    accuracy_at, auroc, calibrate_threshold, gallery_probe, pair_scores, precision_at_recall, simulate_overseer,
    split_records, PairDataset, PairSampler, SimulationConfig, SimulationReport, TripletDataset,
};
use ecg_guard::identity::VectorDatabase;
use ecg_guard::synthgen::{generate_dataset, generate_patient, generate_recording};
use ecg_guard::tensornet::AdamConfig;
use ecg_guard::Exec;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, mix, ExperimentConfig, SimulationSection, Stream, Subset, ThresholdSource};
use crate::{files, render, CliError};

/// Network precision used by every command.
pub type Net = Embedder<f32>;
pub type Head = DiscriminatorHead<f32>;

/// Config plus output directory; relative config paths resolve against it.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>) -> Self {
        Self { config, out: out.into() }
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.output(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialise");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn exec(&self) -> Exec {
        self.config.exec()
    }

    fn seed(&self, stream: Stream) -> u64 {
        derive_seed(self.config.seed, stream)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn load_container(path: &Path) -> Result<DatasetContainer, CliError> {
    ecg_guard::ecgstore::read_container(&read_bytes(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_embedder(path: &Path) -> Result<Net, CliError> {
    Net::from_checkpoint(&read_bytes(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_head(path: &Path) -> Result<Head, CliError> {
    Head::from_checkpoint(&read_bytes(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn labels(container: &DatasetContainer) -> Vec<u32> {
    container.records().iter().map(|r| r.patient_id()).collect()
}

/// Record indices of one part of the configured split.
pub fn subset_indices(cfg: &ExperimentConfig, labels: &[u32], subset: Subset) -> Result<Vec<usize>, CliError> {
    if subset == Subset::All {
        return Ok((0..labels.len()).collect());
    }
    let splits = split_records(labels, &cfg.split)?;
    Ok(match subset {
        Subset::Train => splits.train,
        Subset::Dev => splits.dev,
        Subset::Test => splits.test,
        Subset::All => unreachable!(),
    })
}

/// Labels and embeddings of the chosen records, in record order.
pub fn embed_subset(
    embedder: &Net,
    container: &DatasetContainer,
    subset: &[usize],
    exec: Exec,
) -> Result<(Vec<u32>, Vec<EcgVector>), CliError> {
    let records = container.records();
    let vectors = exec
        .map(subset, |&i| -> Result<EcgVector, CliError> {
            Ok(embedder.embed(&ModelInput::from_record(&records[i])?)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok((subset.iter().map(|&i| records[i].patient_id()).collect(), vectors))
}

fn model_inputs(container: &DatasetContainer, exec: Exec) -> Result<Vec<ModelInput>, CliError> {
    Ok(ecg_guard::evalharness::model_inputs(container.records(), exec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub patients: usize,
    pub sample_rate_hz: u32,
    pub samples_per_record: usize,
    /// Record count of every patient, ascending by id.
    pub recordings_per_patient: Vec<(u32, usize)>,
}

fn summarize(container: &DatasetContainer) -> DatasetSummary {
    let mut counts = std::collections::BTreeMap::new();
    for r in container.records() {
        *counts.entry(r.patient_id()).or_insert(0usize) += 1;
    }
    DatasetSummary {
        records: container.len(),
        patients: counts.len(),
        sample_rate_hz: container.sample_rate_hz(),
        samples_per_record: container.samples_per_record(),
        recordings_per_patient: counts.into_iter().collect(),
    }
}

fn write_dataset(ctx: &Context, container: &DatasetContainer, summary_name: &str) -> Result<DatasetSummary, CliError> {
    ctx.write(files::DATASET, &write_container(container))?;
    ctx.write(files::MANIFEST, write_manifest(container).as_bytes())?;
    let summary = summarize(container);
    ctx.write_json(summary_name, &summary)?;
    Ok(summary)
}

/// Generates a synthetic cohort.
pub fn cmd_synth(ctx: &Context) -> Result<DatasetSummary, CliError> {
    let ds = generate_dataset(&ctx.config.synth_config(), ctx.exec())?;
    write_dataset(ctx, &ds.container, files::SYNTH_SUMMARY)
}

/// Converts JSON-lines recordings (see [`crate::ingest`]) into a container.
pub fn cmd_ingest(ctx: &Context, input: &Path) -> Result<DatasetSummary, CliError> {
    let file = fs::File::open(input).map_err(|e| CliError::Data(format!("cannot read {}: {e}", input.display())))?;
    let d = &ctx.config.data;
    let container = crate::ingest::read_jsonl(BufReader::new(file), d.sample_rate_hz, d.n_samples)?;
    write_dataset(ctx, &container, files::INGEST_SUMMARY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub steps_taken: usize,
    pub train_loss: Vec<f64>,
    pub validation: Vec<ValidationEntry>,
    pub best_step: usize,
    pub stopped_early: bool,
}

impl From<&SiameseTrainReport> for PhaseReport {
    fn from(r: &SiameseTrainReport) -> Self {
        Self {
            steps_taken: r.train_loss.len(),
            train_loss: r.train_loss.clone(),
            validation: r
                .validation
                .iter()
                .map(|v| ValidationEntry { step: v.step, loss: v.loss, accuracy: Some(v.accuracy) })
                .collect(),
            best_step: r.best_step,
            stopped_early: r.stopped_early,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEmbedReport {
    pub param_count: usize,
    pub train_records: usize,
    pub dev_records: usize,
    pub metric: PhaseReport,
}

/// Phase one: metric learning of the embedder on the dataset's train
/// split, early-stopped on dev triplets.
pub fn cmd_train_embed(ctx: &Context) -> Result<TrainEmbedReport, CliError> {
    let cfg = &ctx.config;
    let container = load_container(&ctx.resolve(&cfg.paths.dataset))?;
    let labels = labels(&container);
    let train = subset_indices(cfg, &labels, Subset::Train)?;
    let dev = subset_indices(cfg, &labels, Subset::Dev)?;
    let m = &cfg.training.metric;
    let mut source = TripletDataset::new(
        model_inputs(&container, ctx.exec())?,
        &labels,
        &train,
        &dev,
        m.validation_triplets,
        ctx.seed(Stream::Triplets),
    )?;
    let mut model = Net::new(cfg.embedder_config())?;
    let train_cfg = MetricTrainConfig {
        loss: m.loss,
        steps: m.steps,
        batch_size: m.batch_size,
        validate_every: m.validate_every,
        patience: m.patience,
        adam: AdamConfig { learning_rate: m.learning_rate, ..AdamConfig::default() },
        exec: ctx.exec(),
        ..MetricTrainConfig::default()
    };
    let r = train_metric(&mut model, &mut source, &train_cfg)?;
    ctx.write(files::EMBEDDER, &model.to_checkpoint())?;
    let report = TrainEmbedReport {
        param_count: model.param_count(),
        train_records: train.len(),
        dev_records: dev.len(),
        metric: PhaseReport {
            steps_taken: r.train_loss.len(),
            train_loss: r.train_loss,
            validation: r
                .validation
                .iter()
                .map(|v| ValidationEntry { step: v.step, loss: v.loss, accuracy: None })
                .collect(),
            best_step: r.best_step,
            stopped_early: r.stopped_early,
        },
    };
    ctx.write_json(files::TRAIN_EMBED_REPORT, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiscReport {
    pub head_param_count: usize,
    pub fine_tune: FineTune,
    pub warmup: Option<PhaseReport>,
    pub siamese: Option<PhaseReport>,
}

/// Phase two: Siamese training of the discriminator head on pairs, with
/// an optional head-only warm-up on frozen embeddings.
pub fn cmd_train_disc(ctx: &Context) -> Result<TrainDiscReport, CliError> {
    let cfg = &ctx.config;
    let container = load_container(&ctx.resolve(&cfg.paths.dataset))?;
    let mut embedder = load_embedder(&ctx.resolve(&cfg.paths.embedder))?;
    let mut head_cfg = cfg.head_config();
    head_cfg.embedding_dim = embedder.embedding_dim();
    let mut head = Head::new(head_cfg)?;
    let labels = labels(&container);
    let train = subset_indices(cfg, &labels, Subset::Train)?;
    let dev = subset_indices(cfg, &labels, Subset::Dev)?;
    let s = &cfg.training.siamese;
    let mut source = PairDataset::new(
        model_inputs(&container, ctx.exec())?,
        &labels,
        &train,
        &dev,
        s.validation_pairs,
        ctx.seed(Stream::Pairs),
    )?;
    let phase = |fine_tune, steps, batch_size, learning_rate| SiameseTrainConfig {
        fine_tune,
        steps,
        batch_size,
        validate_every: s.validate_every,
        patience: s.patience,
        adam: AdamConfig { learning_rate, ..AdamConfig::default() },
        exec: ctx.exec(),
    };
    let mut warmup = None;
    if s.warmup_steps > 0 {
        let c = phase(FineTune::Freeze, s.warmup_steps, s.warmup_batch_size, s.warmup_learning_rate);
        warmup = Some(PhaseReport::from(&train_siamese(&mut embedder, &mut head, &mut source, &c)?));
    }
    let mut siamese = None;
    if s.steps > 0 {
        let c = phase(s.fine_tune, s.steps, s.batch_size, s.learning_rate);
        siamese = Some(PhaseReport::from(&train_siamese(&mut embedder, &mut head, &mut source, &c)?));
    }
    ctx.write(files::DISCRIMINATOR, &head.to_checkpoint())?;
    ctx.write(files::SIAMESE_EMBEDDER, &embedder.to_checkpoint())?;
    let report =
        TrainDiscReport { head_param_count: head.params().scalar_count(), fine_tune: s.fine_tune, warmup, siamese };
    ctx.write_json(files::TRAIN_DISC_REPORT, &report)?;
    Ok(report)
}

/// Trained embedder and head plus the embedded evaluation subset.
struct Evaluation {
    head: Head,
    labels: Vec<u32>,
    vectors: Vec<EcgVector>,
}

fn load_evaluation(ctx: &Context, dataset: &str, subset: Subset) -> Result<Evaluation, CliError> {
    let cfg = &ctx.config;
    let embedder = load_embedder(&ctx.resolve(&cfg.paths.siamese_embedder))?;
    let head = load_head(&ctx.resolve(&cfg.paths.discriminator))?;
    if head.config().embedding_dim != embedder.embedding_dim() {
        return Err(CliError::Data(format!(
            "discriminator expects {}-d vectors, embedder produces {}",
            head.config().embedding_dim,
            embedder.embedding_dim()
        )));
    }
    let container = load_container(&ctx.resolve(dataset))?;
    let idx = subset_indices(cfg, &labels(&container), subset)?;
    let (labels, vectors) = embed_subset(&embedder, &container, &idx, ctx.exec())?;
    Ok(Evaluation { head, labels, vectors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryProbeReport {
    pub records: usize,
    pub pairs: usize,
    pub pairwise_auroc: f64,
    /// Pairs on the right side of 0.5.
    pub pairwise_accuracy: f64,
    pub sample_size: usize,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub discriminator_calls: usize,
}

/// Pairwise verification and gallery-probe matching on the evaluation
/// dataset.
pub fn cmd_gallery_probe(ctx: &Context) -> Result<GalleryProbeReport, CliError> {
    let cfg = &ctx.config;
    let ev = load_evaluation(ctx, &cfg.paths.eval_dataset, cfg.evaluation.subset)?;
    let all: Vec<usize> = (0..ev.labels.len()).collect();
    let e = &cfg.evaluation;
    let pairs = PairSampler::new(&ev.labels, &all, ctx.seed(Stream::EvalPairs))?.sample(e.pairs);
    let scores = pair_scores(&ev.vectors, &pairs, &ev.head, ctx.exec())?;
    let same: Vec<bool> = pairs.iter().map(|p| p.same).collect();
    let accuracies = (0..e.gallery_repeats)
        .map(|r| {
            let seed = mix(ctx.seed(Stream::Gallery).wrapping_add(r as u64));
            Ok(gallery_probe(&ev.vectors, &ev.labels, &all, &ev.head, e.gallery_sample_size, seed, ctx.exec())?
                .accuracy)
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    let report = GalleryProbeReport {
        records: ev.labels.len(),
        pairs: pairs.len(),
        pairwise_auroc: auroc(&scores, &same)?,
        pairwise_accuracy: accuracy_at(&scores, &same, 0.5)?,
        sample_size: e.gallery_sample_size,
        mean_accuracy: accuracies.iter().sum::<f64>() / accuracies.len() as f64,
        accuracies,
        discriminator_calls: e.gallery_repeats * e.gallery_sample_size * e.gallery_sample_size,
    };
    ctx.write_json(files::GALLERY_PROBE, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub runs: usize,
    pub steps: usize,
    pub mistakes: usize,
    pub target_recall: f64,
    pub threshold: f64,
    /// Precision of the calibrated threshold on the pooled dev steps.
    pub dev_precision: f64,
}

/// Everything `report` needs to render a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub simulation: SimulationSection,
    pub threshold: f64,
    pub calibration: Option<Calibration>,
    pub report: SimulationReport,
}

fn sim_config(ctx: &Context, threshold: f64, seed: u64) -> SimulationConfig {
    let s = &ctx.config.simulation;
    SimulationConfig {
        n_initial_patients: s.n_initial_patients,
        n_probe: s.n_probe,
        mistake_rate: s.mistake_rate,
        strategy: s.strategy,
        threshold,
        insert_flagged: s.insert_flagged,
        seed,
    }
}

/// Pools unflagged dev simulations and picks the threshold reaching the
/// target recall on them.
fn calibrate(ctx: &Context, ev_head: &Head) -> Result<Calibration, CliError> {
    let cfg = &ctx.config;
    let s = &cfg.simulation;
    let dev = load_evaluation(ctx, &cfg.paths.dev_dataset, s.calibration_subset)?;
    let subset: Vec<usize> = (0..dev.labels.len()).collect();
    let (mut likelihoods, mut mistakes) = (Vec::new(), Vec::new());
    for run in 0..s.calibration_runs {
        let seed = mix(ctx.seed(Stream::Calibration).wrapping_add(run as u64));
        let c = SimulationConfig { insert_flagged: true, ..sim_config(ctx, f64::NEG_INFINITY, seed) };
        let (l, m) = simulate_overseer(&dev.vectors, &dev.labels, &subset, ev_head, &c, ctx.exec())?.detection_scores();
        likelihoods.extend(l);
        mistakes.extend(m);
    }
    let threshold = calibrate_threshold(&likelihoods, &mistakes, s.target_recall)?;
    Ok(Calibration {
        runs: s.calibration_runs,
        steps: likelihoods.len(),
        mistakes: mistakes.iter().filter(|&&m| m).count(),
        target_recall: s.target_recall,
        threshold,
        dev_precision: precision_at_recall(&likelihoods, &mistakes, s.target_recall)?,
    })
}

/// Overseer simulation on the evaluation dataset; also renders the report.
pub fn cmd_simulate(ctx: &Context) -> Result<SimulationOutput, CliError> {
    let cfg = &ctx.config;
    let ev = load_evaluation(ctx, &cfg.paths.eval_dataset, cfg.evaluation.subset)?;
    let calibration = match cfg.simulation.threshold_source {
        ThresholdSource::Fixed => None,
        ThresholdSource::Dev => Some(calibrate(ctx, &ev.head)?),
    };
    let threshold = calibration.as_ref().map_or(cfg.simulation.threshold, |c| c.threshold);
    let subset: Vec<usize> = (0..ev.labels.len()).collect();
    let sim = sim_config(ctx, threshold, ctx.seed(Stream::Simulation));
    let report = simulate_overseer(&ev.vectors, &ev.labels, &subset, &ev.head, &sim, ctx.exec())?;
    let output = SimulationOutput { simulation: cfg.simulation.clone(), threshold, calibration, report };
    ctx.write_json(files::SIMULATION, &output)?;
    write_rendered(ctx, &output)?;
    Ok(output)
}

fn write_rendered(ctx: &Context, output: &SimulationOutput) -> Result<render::Summary, CliError> {
    let summary = render::summary(output);
    ctx.write(files::REPORT_TEXT, render::text(output, &summary).as_bytes())?;
    ctx.write_json(files::REPORT_SUMMARY, &summary)?;
    Ok(summary)
}

pub use render::Summary as ReportSummary;

/// Renders a saved simulation into text and a JSON summary.
pub fn cmd_report(ctx: &Context) -> Result<ReportSummary, CliError> {
    let path = ctx.resolve(&ctx.config.paths.simulation);
    let output: SimulationOutput =
        serde_json::from_slice(&read_bytes(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    write_rendered(ctx, &output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// `checkpoint` when trained weights were found, else `untrained`.
    pub weights: String,
    pub embedder_params: usize,
    pub embedding_dim: usize,
    pub cluster_size: usize,
    pub iterations: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Wall time of single overseer checks: embed one recording, then score
/// it against a database holding one cluster. Uses the trained networks
/// when both checkpoints exist, freshly initialised ones otherwise.
/// Timing runs sequentially on one core.
pub fn cmd_bench(ctx: &Context) -> Result<BenchReport, CliError> {
    let cfg = &ctx.config;
    let (emb_path, head_path) = (ctx.resolve(&cfg.paths.siamese_embedder), ctx.resolve(&cfg.paths.discriminator));
    let (embedder, head, weights) = if emb_path.exists() && head_path.exists() {
        (load_embedder(&emb_path)?, load_head(&head_path)?, "checkpoint")
    } else {
        let e = Net::new(cfg.embedder_config())?;
        let mut hc = cfg.head_config();
        hc.embedding_dim = e.embedding_dim();
        (e, Head::new(hc)?, "untrained")
    };
    let b = &cfg.bench;
    let patient = generate_patient(ctx.seed(Stream::Synth));
    let record = |i: usize| -> Result<ModelInput, CliError> {
        let r = generate_recording(&patient, 0, mix(i as u64), cfg.data.n_samples, cfg.data.sample_rate_hz)?;
        Ok(ModelInput::from_record(&r)?)
    };
    let cluster =
        (0..b.cluster_size).map(|i| Ok(embedder.embed(&record(i)?)?)).collect::<Result<Vec<_>, CliError>>()?;
    let mut db = VectorDatabase::new(embedder.embedding_dim());
    db.register_patient(0, cluster)?;
    let probe = record(b.cluster_size)?;
    let mut times = Vec::with_capacity(b.iterations);
    for i in 0..b.warmup + b.iterations {
        let t = Instant::now();
        let v = embedder.embed(&probe)?;
        std::hint::black_box(db.score_all(&v, &head, cfg.simulation.strategy, Exec::Sequential)?);
        if i >= b.warmup {
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let report = BenchReport {
        weights: weights.into(),
        embedder_params: embedder.param_count(),
        embedding_dim: embedder.embedding_dim(),
        cluster_size: b.cluster_size,
        iterations: n,
        mean_ms: times.iter().sum::<f64>() / n as f64,
        median_ms: if n % 2 == 1 { times[n / 2] } else { 0.5 * (times[n / 2 - 1] + times[n / 2]) },
        p99_ms: times[((0.99 * n as f64).ceil() as usize).clamp(1, n) - 1],
        min_ms: times[0],
        max_ms: times[n - 1],
    };
    ctx.write_json(files::BENCH, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbImportReport {
    pub patients: usize,
    pub vectors: usize,
    pub dim: usize,
}

/// Embeds the evaluation subset into a patient vector database.
pub fn cmd_db_import(ctx: &Context) -> Result<DbImportReport, CliError> {
    let cfg = &ctx.config;
    let embedder = load_embedder(&ctx.resolve(&cfg.paths.siamese_embedder))?;
    let container = load_container(&ctx.resolve(&cfg.paths.eval_dataset))?;
    let idx = subset_indices(cfg, &labels(&container), cfg.evaluation.subset)?;
    let (labels, vectors) = embed_subset(&embedder, &container, &idx, ctx.exec())?;
    let mut db = VectorDatabase::new(embedder.embedding_dim());
    for (id, v) in labels.into_iter().zip(vectors) {
        if db.contains(id) {
            db.insert(id, v)?;
        } else {
            db.register_patient(id, vec![v])?;
        }
    }
    ctx.write(files::DATABASE, &db.to_bytes())?;
    let report = DbImportReport { patients: db.len(), vectors: db.vector_count(), dim: db.dim() };
    ctx.write_json(files::DB_IMPORT_SUMMARY, &report)?;
    Ok(report)
}

/// Writes the database as `patient<TAB>index<TAB>comma-separated values` lines.
pub fn cmd_db_dump(ctx: &Context) -> Result<PathBuf, CliError> {
    let path = ctx.resolve(&ctx.config.paths.database);
    let db = VectorDatabase::from_bytes(&read_bytes(&path)?)?;
    let mut text = Vec::new();
    db.dump_text(&mut text).map_err(|e| CliError::Runtime(e.to_string()))?;
    ctx.write(files::DB_DUMP, &text)
}

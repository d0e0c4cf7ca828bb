//! The experiment configuration file.
//!
//! Every section and key is optional; missing keys take the defaults
//! below, unknown keys are rejected. Defaults describe the best-performing
//! configuration of the model family (CDIL, triplet loss, 256-d
//! embeddings, end-to-end fine-tuning, z-scoring and high-frequency noise
//! removal without baseline-wander removal, an l1-only discriminator with
//! a 16-unit hidden layer, weighted discriminator averaging).

use std::path::Path;

use ecg_guard::discriminator::{DistanceFeatureConfig, FamilyMode, FineTune, HeadConfig};
use ecg_guard::embedder::{Architecture, EmbedderConfig, MetricLoss};
use ecg_guard::evalharness::SplitConfig;
use ecg_guard::identity::LikelihoodStrategy;
use ecg_guard::preprocess::PreprocessConfig;
use ecg_guard::synthgen::SynthConfig;
use ecg_guard::Exec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every random choice of every command derives from it.
    pub seed: u64,
    /// Run data-parallel loops on the rayon pool.
    pub parallel: bool,
    pub data: DataSection,
    pub split: SplitConfig,
    pub preprocess: PreprocessConfig,
    pub embedder: EmbedderSection,
    pub discriminator: DiscriminatorSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
    pub simulation: SimulationSection,
    pub bench: BenchSection,
    pub paths: PathsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            parallel: true,
            data: DataSection::default(),
            split: SplitConfig::default(),
            preprocess: PreprocessConfig::default(),
            embedder: EmbedderSection::default(),
            discriminator: DiscriminatorSection::default(),
            training: TrainingSection::default(),
            evaluation: EvaluationSection::default(),
            simulation: SimulationSection::default(),
            bench: BenchSection::default(),
            paths: PathsSection::default(),
        }
    }
}

/// Synthetic cohort shape and the layout of ingested recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_patients: usize,
    pub min_recordings: usize,
    pub max_recordings: usize,
    pub n_samples: usize,
    pub sample_rate_hz: u32,
    pub first_patient_id: u32,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n_patients: s.n_patients,
            min_recordings: s.min_recordings,
            max_recordings: s.max_recordings,
            n_samples: s.n_samples,
            sample_rate_hz: s.sample_rate_hz,
            first_patient_id: s.first_patient_id,
        }
    }
}

/// Embedding network shape; preprocessing comes from `[preprocess]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub channels: Vec<usize>,
    pub blocks: usize,
    pub kernel_size: usize,
    pub mlp_hidden: Vec<usize>,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        let e = EmbedderConfig::cdil_full();
        Self {
            architecture: e.architecture,
            embedding_dim: e.embedding_dim,
            channels: e.channels,
            blocks: e.blocks,
            kernel_size: e.kernel_size,
            mlp_hidden: e.mlp_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub l1: FamilyMode,
    pub l2: FamilyMode,
    pub cos: FamilyMode,
    pub hidden_size: usize,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        let f = DistanceFeatureConfig::default();
        Self { l1: f.l1, l2: f.l2, cos: f.cos, hidden_size: HeadConfig::default().hidden_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub metric: MetricSection,
    pub siamese: SiameseSection,
}

/// Phase one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub loss: MetricLoss,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validate_every: usize,
    pub patience: usize,
    pub validation_triplets: usize,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            loss: MetricLoss::Triplet,
            steps: 1000,
            batch_size: 128,
            learning_rate: 1e-3,
            validate_every: 100,
            patience: 10,
            validation_triplets: 256,
        }
    }
}

/// Phase two. With `warmup_steps > 0` the head first trains alone on
/// frozen embeddings before the `fine_tune` phase starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiameseSection {
    pub fine_tune: FineTune,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validate_every: usize,
    pub patience: usize,
    pub validation_pairs: usize,
    pub warmup_steps: usize,
    pub warmup_batch_size: usize,
    pub warmup_learning_rate: f64,
}

impl Default for SiameseSection {
    fn default() -> Self {
        Self {
            fine_tune: FineTune::EndToEnd,
            steps: 1000,
            batch_size: 128,
            learning_rate: 1e-3,
            validate_every: 100,
            patience: 10,
            validation_pairs: 512,
            warmup_steps: 0,
            warmup_batch_size: 128,
            warmup_learning_rate: 1e-3,
        }
    }
}

/// Which records of a dataset a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Records of the evaluation dataset used by gallery-probe, simulate
    /// and db-import.
    pub subset: Subset,
    /// Balanced pairs scored for pairwise AUROC and accuracy.
    pub pairs: usize,
    pub gallery_sample_size: usize,
    /// Independent gallery draws; accuracy is reported per draw and averaged.
    pub gallery_repeats: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { subset: Subset::Test, pairs: 2000, gallery_sample_size: 100, gallery_repeats: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    /// Use `simulation.threshold` as given.
    Fixed,
    /// Calibrate on simulations over the dev dataset to reach `target_recall`.
    Dev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_initial_patients: usize,
    pub n_probe: usize,
    pub mistake_rate: f64,
    pub strategy: LikelihoodStrategy,
    pub threshold_source: ThresholdSource,
    pub threshold: f64,
    pub target_recall: f64,
    /// Records of the dev dataset used for calibration.
    pub calibration_subset: Subset,
    /// Independent calibration simulations whose steps are pooled.
    pub calibration_runs: usize,
    pub insert_flagged: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_initial_patients: 10_000,
            n_probe: 1000,
            mistake_rate: 0.02,
            strategy: LikelihoodStrategy::WeightedDiscAvg,
            threshold_source: ThresholdSource::Dev,
            threshold: 0.5,
            target_recall: 0.95,
            calibration_subset: Subset::Dev,
            calibration_runs: 5,
            insert_flagged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub iterations: usize,
    pub warmup: usize,
    pub cluster_size: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { iterations: 200, warmup: 10, cluster_size: 5 }
    }
}

/// Input and output files. Relative paths resolve against `--out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Training dataset.
    pub dataset: String,
    /// Dataset for gallery-probe, simulate and db-import.
    pub eval_dataset: String,
    /// Dataset for threshold calibration.
    pub dev_dataset: String,
    /// Phase-one embedder.
    pub embedder: String,
    /// Embedder saved after phase two; used by evaluation commands.
    pub siamese_embedder: String,
    pub discriminator: String,
    pub database: String,
    /// Simulation report rendered by `report`.
    pub simulation: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            dataset: crate::files::DATASET.into(),
            eval_dataset: crate::files::DATASET.into(),
            dev_dataset: crate::files::DATASET.into(),
            embedder: crate::files::EMBEDDER.into(),
            siamese_embedder: crate::files::SIAMESE_EMBEDDER.into(),
            discriminator: crate::files::DISCRIMINATOR.into(),
            database: crate::files::DATABASE.into(),
            simulation: crate::files::SIMULATION.into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.embedder_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.head_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synth_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let m = &self.training.metric;
        let s = &self.training.siamese;
        if m.batch_size == 0 || s.batch_size == 0 || s.warmup_batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if m.validate_every == 0 || s.validate_every == 0 {
            return bad("validate_every must be positive".into());
        }
        if m.validation_triplets == 0 || s.validation_pairs == 0 {
            return bad("validation sets must be non-empty".into());
        }
        let lr = [m.learning_rate, s.learning_rate, s.warmup_learning_rate];
        if lr.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("learning rates must be positive".into());
        }
        let sim = &self.simulation;
        if !(0.0..=1.0).contains(&sim.mistake_rate) {
            return bad(format!("mistake_rate {} outside [0, 1]", sim.mistake_rate));
        }
        if !(sim.target_recall > 0.0 && sim.target_recall <= 1.0) {
            return bad(format!("target_recall {} outside (0, 1]", sim.target_recall));
        }
        if !sim.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        if sim.calibration_runs == 0 {
            return bad("calibration_runs must be positive".into());
        }
        if self.bench.iterations == 0 || self.bench.cluster_size == 0 {
            return bad("bench iterations and cluster_size must be positive".into());
        }
        if self.evaluation.gallery_repeats == 0 {
            return bad("gallery_repeats must be positive".into());
        }
        Ok(())
    }

    pub fn embedder_config(&self) -> EmbedderConfig {
        let e = &self.embedder;
        EmbedderConfig {
            architecture: e.architecture,
            embedding_dim: e.embedding_dim,
            channels: e.channels.clone(),
            blocks: e.blocks,
            kernel_size: e.kernel_size,
            mlp_hidden: e.mlp_hidden.clone(),
            preprocess: self.preprocess,
            seed: derive_seed(self.seed, Stream::EmbedderInit),
        }
    }

    pub fn head_config(&self) -> HeadConfig {
        let d = &self.discriminator;
        HeadConfig {
            features: DistanceFeatureConfig { l1: d.l1, l2: d.l2, cos: d.cos },
            hidden_size: d.hidden_size,
            embedding_dim: self.embedder.embedding_dim,
            seed: derive_seed(self.seed, Stream::HeadInit),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let d = &self.data;
        SynthConfig {
            n_patients: d.n_patients,
            min_recordings: d.min_recordings,
            max_recordings: d.max_recordings,
            n_samples: d.n_samples,
            sample_rate_hz: d.sample_rate_hz,
            first_patient_id: d.first_patient_id,
            seed: derive_seed(self.seed, Stream::Synth),
        }
    }
}

/// Independent random streams derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Synth,
    EmbedderInit,
    HeadInit,
    Triplets,
    Pairs,
    EvalPairs,
    Gallery,
    Simulation,
    Calibration,
}

/// SplitMix64 finaliser over the root seed and the stream index.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    mix(seed ^ (stream as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Help text listing every key with its default value.
pub fn keys_help() -> String {
    let mut out = String::from("CONFIG KEYS (TOML, shown with defaults; unknown keys are rejected):\n\n");
    for line in ExperimentConfig::default().to_toml().lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

//! Embedding networks mapping a `(12, 4096)` recording to an ECG vector.
//!
//! Two architectures are provided, each with a shape-faithful `full`
//! preset and a much smaller `desk` preset for CPU training:
//!
//! - CDIL: circular dilated residual convolutions at full length, mean
//!   over time, one dense layer.
//! - ResNet1D: four pre-activation residual stages that each shorten the
//!   signal four-fold, flattening, and a three-layer perceptron.
//!
//! Preprocessing is part of the model: [`Embedder::embed`] runs the
//! configured filter chain before the network.

mod net;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecgstore::{ModelInput, MODEL_LEAD_COUNT, MODEL_SAMPLES};
use crate::preprocess::{preprocess, PreprocessConfig, PreprocessError};
use crate::tensornet::{
    read_checkpoint, write_checkpoint, CheckpointError, Graph, NodeId, ParamStore, Scalar, TensorError,
};
use crate::Exec;

pub use train::{
    train_metric, MetricLoss, MetricTrainConfig, MetricTrainReport, Triplet, TripletSource, ValidationPoint,
};

use net::Network;

/// Embedding sizes offered by the model family.
pub const EMBEDDING_DIMS: [usize; 4] = [128, 256, 384, 512];

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("triplet source is empty")]
    EmptySource,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

/// A D-dimensional embedding with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgVector(Vec<f64>);

impl EcgVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Cdil,
    Resnet1d,
}

/// Network shape.
///
/// For CDIL, `channels = [width, expanded]` and `blocks` is the number of
/// dilation-doubling base blocks before the deformable/base/deformable
/// tail. For ResNet1D, `channels` lists one width per stage, each stage
/// holds `blocks` residual blocks and `mlp_hidden` gives the two hidden
/// perceptron widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub channels: Vec<usize>,
    pub blocks: usize,
    pub kernel_size: usize,
    #[serde(default)]
    pub mlp_hidden: Vec<usize>,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    /// Weight initialisation seed.
    #[serde(default)]
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::cdil_full()
    }
}

/// Down-sampling factor of every ResNet1D stage.
pub const RESNET_STRIDE: usize = 4;

impl EmbedderConfig {
    pub fn cdil_full() -> Self {
        Self {
            architecture: Architecture::Cdil,
            embedding_dim: 256,
            channels: vec![32, 256],
            blocks: 7,
            kernel_size: 3,
            mlp_hidden: Vec::new(),
            preprocess: PreprocessConfig::default(),
            seed: 0,
        }
    }

    /// Quarter width; sized for CPU training and millisecond inference.
    pub fn cdil_desk() -> Self {
        Self { embedding_dim: 128, channels: vec![8, 32], ..Self::cdil_full() }
    }

    pub fn resnet_full() -> Self {
        Self {
            architecture: Architecture::Resnet1d,
            embedding_dim: 256,
            channels: vec![128, 196, 256, 320],
            blocks: 1,
            kernel_size: 7,
            mlp_hidden: vec![1024, 512],
            preprocess: PreprocessConfig::default(),
            seed: 0,
        }
    }

    /// Stage widths divided by eight.
    pub fn resnet_desk() -> Self {
        Self { embedding_dim: 128, channels: vec![16, 24, 32, 40], mlp_hidden: vec![128, 128], ..Self::resnet_full() }
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: String| Err(EmbedError::InvalidConfig(m));
        if !EMBEDDING_DIMS.contains(&self.embedding_dim) {
            return bad(format!("embedding_dim {} not one of {:?}", self.embedding_dim, EMBEDDING_DIMS));
        }
        if self.kernel_size == 0 {
            return bad("kernel_size must be positive".into());
        }
        if self.channels.contains(&0) {
            return bad("channel widths must be positive".into());
        }
        self.preprocess.validate()?;
        match self.architecture {
            Architecture::Cdil => {
                if self.channels.len() != 2 {
                    return bad(format!("cdil expects [width, expanded] channels, got {:?}", self.channels));
                }
                if self.blocks == 0 || self.blocks > 10 {
                    return bad(format!("cdil base block count {} outside 1..=10", self.blocks));
                }
                if !self.mlp_hidden.is_empty() {
                    return bad("cdil has no perceptron; mlp_hidden must be empty".into());
                }
            }
            Architecture::Resnet1d => {
                let stages = self.channels.len() as u32;
                if stages == 0 || RESNET_STRIDE.pow(stages) > MODEL_SAMPLES {
                    return bad(format!("{stages} stages do not fit {MODEL_SAMPLES} samples"));
                }
                if self.blocks == 0 {
                    return bad("resnet needs at least one block per stage".into());
                }
                if self.mlp_hidden.len() != 2 || self.mlp_hidden.contains(&0) {
                    return bad(format!("resnet expects two positive hidden widths, got {:?}", self.mlp_hidden));
                }
            }
        }
        Ok(())
    }
}

/// A named activation shape recorded by [`Embedder::forward_trace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// An embedding network with its weights.
#[derive(Debug, Clone)]
pub struct Embedder<T: Scalar> {
    config: EmbedderConfig,
    params: ParamStore<T>,
    net: Network,
}

impl<T: Scalar> Embedder<T> {
    /// Builds the network with seeded uniform `±sqrt(1 / fan_in)` weights.
    pub fn new(config: EmbedderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let net = Network::build(&config, &mut params, &mut rng)?;
        Ok(Self { config, params, net })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Number of scalar weights over all registered parameter blocks.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    /// Same network with weights converted to another float type.
    pub fn cast<U: Scalar>(&self) -> Embedder<U> {
        Embedder { config: self.config.clone(), params: self.params.cast(), net: self.net.clone() }
    }

    /// Adds the network to `g`; `x` must be a `(12, 4096)` node.
    pub fn forward<'p>(&'p self, g: &mut Graph<'p, T>, x: NodeId) -> Result<NodeId, EmbedError> {
        Ok(self.net.forward(g, &self.params, x, None)?)
    }

    /// Like [`Embedder::forward`] but reading weights from `params`, which
    /// must have this model's layout (used by finite-difference checks).
    pub fn forward_with_params<'p>(
        &self,
        g: &mut Graph<'p, T>,
        params: &'p ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, EmbedError> {
        let same_layout = params.len() == self.params.len()
            && params.iter().zip(self.params.iter()).all(|(a, b)| a.name() == b.name() && a.shape() == b.shape());
        if !same_layout {
            return Err(EmbedError::InvalidConfig("parameter store does not match the network".into()));
        }
        Ok(self.net.forward(g, params, x, None)?)
    }

    /// Forward pass recording every stage's output shape.
    pub fn forward_trace(&self, input: &ModelInput) -> Result<Vec<TraceEntry>, EmbedError> {
        let mut trace = Vec::new();
        let mut g = Graph::new();
        let x = self.input_node(&mut g, &preprocess(input, &self.config.preprocess)?)?;
        trace.push(TraceEntry { name: "input".into(), shape: g.shape(x).to_vec() });
        self.net.forward(&mut g, &self.params, x, Some(&mut trace))?;
        Ok(trace)
    }

    pub(crate) fn input_node(&self, g: &mut Graph<'_, T>, preprocessed: &ModelInput) -> Result<NodeId, EmbedError> {
        let values = preprocessed.values().iter().map(|&v| T::from_f64(v)).collect();
        Ok(g.input(&[MODEL_LEAD_COUNT, MODEL_SAMPLES], values)?)
    }

    /// Preprocesses `input` and adds the full model to `g`.
    pub fn embed_node<'p>(&'p self, g: &mut Graph<'p, T>, input: &ModelInput) -> Result<NodeId, EmbedError> {
        let pre = preprocess(input, &self.config.preprocess)?;
        let x = self.input_node(g, &pre)?;
        self.forward(g, x)
    }

    /// Runs the network on an already preprocessed input.
    pub fn embed_preprocessed(&self, preprocessed: &ModelInput) -> Result<EcgVector, EmbedError> {
        let mut g = Graph::new();
        let x = self.input_node(&mut g, preprocessed)?;
        let out = self.forward(&mut g, x)?;
        EcgVector::new(g.value(out).iter().map(|v| v.as_f64()).collect())
    }

    /// Preprocesses and embeds one recording.
    pub fn embed(&self, input: &ModelInput) -> Result<EcgVector, EmbedError> {
        self.embed_preprocessed(&preprocess(input, &self.config.preprocess)?)
    }

    /// Embeds recordings independently; results keep input order.
    pub fn embed_batch(&self, inputs: &[ModelInput], exec: Exec) -> Result<Vec<EcgVector>, EmbedError> {
        exec.map(inputs, |x| self.embed(x)).into_iter().collect()
    }

    /// Serialises config and weights into a weight file.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let meta = serde_json::to_string(&self.config).expect("config serialises");
        write_checkpoint(&self.params, &meta)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, EmbedError> {
        let (meta, stored) = read_checkpoint::<T>(bytes)?;
        let config: EmbedderConfig = serde_json::from_str(&meta).map_err(|e| EmbedError::Metadata(e.to_string()))?;
        let mut model = Self::new(config)?;
        model.params.copy_from(&stored)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests;

//! The discriminator head `f(u, v)`: distance features between two ECG
//! vectors, an optional ReLU hidden layer, a linear combination and a
//! sigmoid. Each distance family is excluded, merged (plain sum fed as a
//! single feature) or full (learned per-dimension weights inside the sum).

mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{EcgVector, EmbedError};
use crate::tensornet::{
    read_checkpoint, write_checkpoint, CheckpointError, Graph, NodeId, ParamId, ParamStore, Scalar, TensorError,
};

pub use train::{
    train_siamese, FineTune, Pair, PairSource, SiameseTrainConfig, SiameseTrainReport, SiameseValidationPoint,
};

/// Vectors with a norm at or below this are rejected by the cosine family.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DiscError {
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,
    #[error("invalid discriminator config: {0}")]
    InvalidConfig(String),
    #[error("pair source is empty")]
    EmptySource,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

/// Anything that scores a vector pair with a same-patient probability.
pub trait Discriminator: Sync {
    fn discriminate(&self, p: &EcgVector, q: &EcgVector) -> Result<f64, DiscError>;

    /// Identifies the weights for result caching; `None` disables caching.
    fn cache_key(&self) -> Option<u64> {
        None
    }
}

fn check_dims(p: &[f64], q: &[f64], weights: Option<&[f64]>) -> Result<(), DiscError> {
    if p.len() != q.len() {
        return Err(DiscError::DimMismatch { expected: p.len(), found: q.len() });
    }
    if let Some(w) = weights {
        if w.len() != p.len() {
            return Err(DiscError::DimMismatch { expected: p.len(), found: w.len() });
        }
    }
    Ok(())
}

fn weighted_sum(p: &[f64], q: &[f64], weights: Option<&[f64]>, f: impl Fn(f64, f64) -> f64) -> f64 {
    match weights {
        Some(w) => p.iter().zip(q).zip(w).map(|((&a, &b), &wi)| wi * f(a, b)).sum(),
        None => p.iter().zip(q).map(|(&a, &b)| f(a, b)).sum(),
    }
}

/// `sum_i w_i |p_i - q_i|` (unit weights when `weights` is `None`).
pub fn distance_l1(p: &[f64], q: &[f64], weights: Option<&[f64]>) -> Result<f64, DiscError> {
    check_dims(p, q, weights)?;
    Ok(weighted_sum(p, q, weights, |a, b| (a - b).abs()))
}

/// `sum_i w_i (p_i - q_i)^2`: the squared distance, no square root.
pub fn distance_l2(p: &[f64], q: &[f64], weights: Option<&[f64]>) -> Result<f64, DiscError> {
    check_dims(p, q, weights)?;
    Ok(weighted_sum(p, q, weights, |a, b| (a - b) * (a - b)))
}

/// `sum_i w_i p_i q_i / (|p| |q|)`.
pub fn distance_cos(p: &[f64], q: &[f64], weights: Option<&[f64]>) -> Result<f64, DiscError> {
    check_dims(p, q, weights)?;
    let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if np <= MIN_NORM || nq <= MIN_NORM {
        return Err(DiscError::ZeroNorm);
    }
    Ok(weighted_sum(p, q, weights, |a, b| a * b) / (np * nq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyMode {
    Exclude,
    Merge,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceFeatureConfig {
    pub l1: FamilyMode,
    pub l2: FamilyMode,
    pub cos: FamilyMode,
}

impl Default for DistanceFeatureConfig {
    fn default() -> Self {
        Self { l1: FamilyMode::Full, l2: FamilyMode::Exclude, cos: FamilyMode::Exclude }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    L1,
    L2,
    Cos,
}

impl DistanceFeatureConfig {
    fn families(&self) -> impl Iterator<Item = (Family, FamilyMode)> {
        [(Family::L1, self.l1), (Family::L2, self.l2), (Family::Cos, self.cos)]
            .into_iter()
            .filter(|(_, m)| *m != FamilyMode::Exclude)
    }

    pub fn feature_count(&self) -> usize {
        self.families().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub features: DistanceFeatureConfig,
    /// Width of the ReLU hidden layer; 0 leaves it out.
    pub hidden_size: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { features: DistanceFeatureConfig::default(), hidden_size: 16, embedding_dim: 256, seed: 0 }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<(), DiscError> {
        if self.features.feature_count() == 0 {
            return Err(DiscError::InvalidConfig("every distance family is excluded".into()));
        }
        if self.embedding_dim == 0 {
            return Err(DiscError::InvalidConfig("embedding_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct HeadParams {
    family_weights: [Option<ParamId>; 3],
    hidden: Option<(ParamId, ParamId)>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Discriminator head with its weights.
#[derive(Debug, Clone)]
pub struct DiscriminatorHead<T: Scalar> {
    config: HeadConfig,
    params: ParamStore<T>,
    ids: HeadParams,
}

/// Uniform range of the layer that combines the distance features.
const COMBINATION_INIT: f64 = 0.1;

fn family_index(f: Family) -> usize {
    match f {
        Family::L1 => 0,
        Family::L2 => 1,
        Family::Cos => 2,
    }
}

fn family_name(f: Family) -> &'static str {
    ["l1", "l2", "cos"][family_index(f)]
}

impl<T: Scalar> DiscriminatorHead<T> {
    /// Full-family weights start at `1/D`; the combination layer at small
    /// seeded uniform values; biases at zero.
    pub fn new(config: HeadConfig) -> Result<Self, DiscError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::build(config, |n, bound| (0..n).map(|_| rng.random_range(-bound..=bound)).collect())
    }

    /// Every weight and bias zero: outputs 0.5 for any pair.
    pub fn zeros(config: HeadConfig) -> Result<Self, DiscError> {
        let mut head = Self::build(config, |n, _| vec![0.0; n])?;
        for id in head.params.ids().collect::<Vec<_>>() {
            head.params.get_mut(id).values_mut().fill(T::zero());
        }
        Ok(head)
    }

    fn build(config: HeadConfig, mut init: impl FnMut(usize, f64) -> Vec<f64>) -> Result<Self, DiscError> {
        config.validate()?;
        let d = config.embedding_dim;
        let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
        let mut params = ParamStore::new();
        let mut family_weights = [None; 3];
        for (f, mode) in config.features.families() {
            if mode == FamilyMode::Full {
                let id =
                    params.add(format!("{}.weight", family_name(f)), &[d], vec![T::from_f64(1.0 / d as f64); d])?;
                family_weights[family_index(f)] = Some(id);
            }
        }
        let k = config.features.feature_count();
        let h = config.hidden_size;
        let (hidden, out_w) = if h > 0 {
            let w1 = params.add("hidden.weight", &[h, k], cast(init(h * k, COMBINATION_INIT)))?;
            let b1 = params.add("hidden.bias", &[h], vec![T::zero(); h])?;
            let w2 = params.add("out.weight", &[1, h], cast(init(h, (1.0 / h as f64).sqrt())))?;
            (Some((w1, b1)), w2)
        } else {
            (None, params.add("out.weight", &[1, k], cast(init(k, COMBINATION_INIT)))?)
        };
        let out_b = params.add("out.bias", &[1], vec![T::zero()])?;
        Ok(Self { config, params, ids: HeadParams { family_weights, hidden, out_w, out_b } })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> DiscriminatorHead<U> {
        DiscriminatorHead { config: self.config, params: self.params.cast(), ids: self.ids.clone() }
    }

    fn values_f64(&self, id: ParamId) -> Vec<f64> {
        self.params.values(id).iter().map(|v| v.as_f64()).collect()
    }

    /// Feature vector in l1, l2, cos order (excluded families omitted).
    pub fn features(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>, DiscError> {
        if p.len() != self.config.embedding_dim {
            return Err(DiscError::DimMismatch { expected: self.config.embedding_dim, found: p.len() });
        }
        let mut out = Vec::with_capacity(3);
        for (f, _) in self.config.features.families() {
            let w = self.ids.family_weights[family_index(f)].map(|id| self.values_f64(id));
            let w = w.as_deref();
            out.push(match f {
                Family::L1 => distance_l1(p, q, w)?,
                Family::L2 => distance_l2(p, q, w)?,
                Family::Cos => distance_cos(p, q, w)?,
            });
        }
        Ok(out)
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, p: &[f64], q: &[f64]) -> Result<f64, DiscError> {
        let mut x = self.features(p, q)?;
        if let Some((w, b)) = self.ids.hidden {
            let (w, b) = (self.values_f64(w), self.values_f64(b));
            let n = x.len();
            x = (0..b.len()).map(|m| (b[m] + (0..n).map(|j| w[m * n + j] * x[j]).sum::<f64>()).max(0.0)).collect();
        }
        let w = self.values_f64(self.ids.out_w);
        Ok(self.params.values(self.ids.out_b)[0].as_f64() + w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Adds the head to `g` for two `(D)` nodes; returns the logit node.
    pub fn forward<'p>(&'p self, g: &mut Graph<'p, T>, u: NodeId, v: NodeId) -> Result<NodeId, DiscError> {
        self.forward_with_params(g, &self.params, u, v)
    }

    /// Like [`DiscriminatorHead::forward`] with weights from `params`,
    /// which must have this head's layout.
    pub fn forward_with_params<'p>(
        &self,
        g: &mut Graph<'p, T>,
        params: &'p ParamStore<T>,
        u: NodeId,
        v: NodeId,
    ) -> Result<NodeId, DiscError> {
        if params.len() != self.params.len() {
            return Err(DiscError::InvalidConfig("parameter store does not match the head".into()));
        }
        let diff = g.sub(u, v)?;
        let mut feats = Vec::with_capacity(3);
        for (f, _) in self.config.features.families() {
            let w = self.ids.family_weights[family_index(f)].map(|id| g.param(params, id));
            let weighted = |g: &mut Graph<'p, T>, x: NodeId| -> Result<NodeId, TensorError> {
                let x = match w {
                    Some(w) => g.mul(x, w)?,
                    None => x,
                };
                Ok(g.sum(x))
            };
            feats.push(match f {
                Family::L1 => {
                    let a = g.abs(diff);
                    weighted(g, a)?
                }
                Family::L2 => {
                    let s = g.square(diff);
                    weighted(g, s)?
                }
                Family::Cos => {
                    let uv = g.mul(u, v)?;
                    let num = weighted(g, uv)?;
                    let uu = g.dot(u, u)?;
                    let vv = g.dot(v, v)?;
                    let (nu, nv) = (g.sqrt(uu), g.sqrt(vv));
                    let den = g.mul(nu, nv)?;
                    g.div(num, den)?
                }
            });
        }
        let mut x = g.concat(&feats)?;
        if let Some((w, b)) = self.ids.hidden {
            let (w, b) = (g.param(params, w), g.param(params, b));
            let h = g.dense(x, w, Some(b))?;
            x = g.relu(h);
        }
        let (w, b) = (g.param(params, self.ids.out_w), g.param(params, self.ids.out_b));
        Ok(g.dense(x, w, Some(b))?)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let meta = serde_json::to_string(&self.config).expect("config serialises");
        write_checkpoint(&self.params, &meta)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, DiscError> {
        let (meta, stored) = read_checkpoint::<T>(bytes)?;
        let config: HeadConfig = serde_json::from_str(&meta).map_err(|e| DiscError::Metadata(e.to_string()))?;
        let mut head = Self::new(config)?;
        head.params.copy_from(&stored)?;
        Ok(head)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<T: Scalar> Discriminator for DiscriminatorHead<T> {
    fn discriminate(&self, p: &EcgVector, q: &EcgVector) -> Result<f64, DiscError> {
        if p.dim() != q.dim() {
            return Err(DiscError::DimMismatch { expected: p.dim(), found: q.dim() });
        }
        Ok(sigmoid(self.logit(p.values(), q.values())?))
    }

    fn cache_key(&self) -> Option<u64> {
        Some(self.params.uid())
    }
}

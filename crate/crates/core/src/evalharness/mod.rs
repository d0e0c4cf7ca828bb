//! Data splits, seeded samplers, the gallery-probe and overseer protocols,
//! threshold calibration and metrics.

mod metrics;
mod protocols;
mod sampler;
mod split;

use thiserror::Error;

use crate::discriminator::DiscError;
use crate::ecgstore::{EcgRecord, ModelInput, StoreError};
use crate::embedder::{EcgVector, EmbedError, Embedder};
use crate::identity::IdentityError;
use crate::tensornet::Scalar;
use crate::Exec;

pub use metrics::{
    accuracy_at, auroc, bootstrap_interval, calibrate_threshold, confusion_at, pr_curve, precision_at_recall,
    Confusion, PrPoint,
};
pub use protocols::{
    gallery_probe, mistake_schedule, pair_scores, simulate_overseer, GalleryProbeResult, SimulationConfig,
    SimulationReport, SimulationStep,
};
pub use sampler::{PairDataset, PairSampler, TripletDataset, TripletSampler};
pub use split::{split_records, SplitConfig, Splits};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("recall {target} is unreachable (best achievable {max})")]
    UnreachableRecall { target: f64, max: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Disc(#[from] DiscError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Converts stored records to network inputs.
pub fn model_inputs(records: &[EcgRecord], exec: Exec) -> Result<Vec<ModelInput>, EvalError> {
    Ok(exec.map(records, ModelInput::from_record).into_iter().collect::<Result<_, _>>()?)
}

/// Embeds every input, keeping order.
pub fn embed_inputs<T: Scalar>(
    embedder: &Embedder<T>,
    inputs: &[ModelInput],
    exec: Exec,
) -> Result<Vec<EcgVector>, EvalError> {
    Ok(embedder.embed_batch(inputs, exec)?)
}

#[cfg(test)]
mod tests;

//! Phase one: metric learning on triplets with early stopping.

use serde::{Deserialize, Serialize};

use super::{EcgVector, EmbedError, Embedder};
use crate::ecgstore::ModelInput;
use crate::tensornet::{
    circle_loss, triplet_loss, Adam, AdamConfig, CircleParams, GradBuffer, Graph, Scalar, TRIPLET_MARGIN,
};
use crate::Exec;

/// Indices into a [`TripletSource`] pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    fn indices(&self) -> [usize; 3] {
        [self.anchor, self.positive, self.negative]
    }
}

/// Training data for [`train_metric`].
pub trait TripletSource {
    /// Recordings the triplets index into.
    fn pool(&self) -> &[ModelInput];
    /// Next training triplet, `None` when exhausted.
    fn next_triplet(&mut self) -> Option<Triplet>;
    /// Fixed held-out triplets used for early stopping.
    fn validation(&self) -> &[Triplet];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricLoss {
    Triplet,
    Circle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrainConfig {
    pub loss: MetricLoss,
    pub steps: usize,
    pub batch_size: usize,
    pub validate_every: usize,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub triplet_margin: f64,
    pub circle: CircleParams,
    pub exec: Exec,
}

impl Default for MetricTrainConfig {
    fn default() -> Self {
        Self {
            loss: MetricLoss::Triplet,
            steps: 1000,
            batch_size: 128,
            validate_every: 100,
            patience: 10,
            adam: AdamConfig::default(),
            triplet_margin: TRIPLET_MARGIN,
            circle: CircleParams::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrainReport {
    /// Mean batch loss of every step taken.
    pub train_loss: Vec<f64>,
    /// Includes the untrained model at step 0.
    pub validation: Vec<ValidationPoint>,
    pub best_step: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

fn loss_value(cfg: &MetricTrainConfig, a: &EcgVector, p: &EcgVector, n: &EcgVector) -> f64 {
    match cfg.loss {
        MetricLoss::Triplet => triplet_loss(a.values(), p.values(), n.values(), cfg.triplet_margin),
        MetricLoss::Circle => circle_loss(a.values(), p.values(), n.values(), cfg.circle),
    }
}

/// Mean loss over `triplets`, embedding each distinct recording once.
pub(crate) fn validation_loss<T: Scalar>(
    model: &Embedder<T>,
    pool: &[ModelInput],
    triplets: &[Triplet],
    cfg: &MetricTrainConfig,
) -> Result<f64, EmbedError> {
    let mut needed: Vec<usize> = triplets.iter().flat_map(Triplet::indices).collect();
    needed.sort_unstable();
    needed.dedup();
    let vectors = cfg.exec.map(&needed, |&i| model.embed(&pool[i])).into_iter().collect::<Result<Vec<_>, _>>()?;
    let lookup = |i: usize| &vectors[needed.binary_search(&i).expect("embedded above")];
    let total: f64 =
        triplets.iter().map(|t| loss_value(cfg, lookup(t.anchor), lookup(t.positive), lookup(t.negative))).sum();
    Ok(total / triplets.len() as f64)
}

fn triplet_gradient<T: Scalar>(
    model: &Embedder<T>,
    pool: &[ModelInput],
    t: &Triplet,
    cfg: &MetricTrainConfig,
) -> Result<(f64, GradBuffer<T>), EmbedError> {
    let mut g = Graph::new();
    let a = model.embed_node(&mut g, &pool[t.anchor])?;
    let p = model.embed_node(&mut g, &pool[t.positive])?;
    let n = model.embed_node(&mut g, &pool[t.negative])?;
    let loss = match cfg.loss {
        MetricLoss::Triplet => g.triplet_loss(a, p, n, cfg.triplet_margin)?,
        MetricLoss::Circle => g.circle_loss(a, p, n, cfg.circle)?,
    };
    let grads = g.backward(loss)?;
    Ok((g.scalar(loss).as_f64(), g.param_grads(&grads, model.params())))
}

/// Adam training on triplets. Validation runs at step 0, every
/// `validate_every` steps and after the last step; the weights of the best
/// validation round are restored before returning.
///
/// Per-triplet gradients may be computed in parallel but are summed in
/// batch order, so results do not depend on the execution mode.
pub fn train_metric<T: Scalar>(
    model: &mut Embedder<T>,
    source: &mut dyn TripletSource,
    cfg: &MetricTrainConfig,
) -> Result<MetricTrainReport, EmbedError> {
    if source.pool().is_empty() || source.validation().is_empty() {
        return Err(EmbedError::EmptySource);
    }
    if cfg.batch_size == 0 || cfg.validate_every == 0 {
        return Err(EmbedError::InvalidConfig("batch_size and validate_every must be positive".into()));
    }
    let validation: Vec<Triplet> = source.validation().to_vec();
    let initial = validation_loss(model, source.pool(), &validation, cfg)?;
    let mut report = MetricTrainReport {
        train_loss: Vec::with_capacity(cfg.steps),
        validation: vec![ValidationPoint { step: 0, loss: initial }],
        best_step: 0,
        best_validation_loss: initial,
        stopped_early: false,
    };
    let mut best = model.params().clone();
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut since_best = 0;
    for step in 1..=cfg.steps {
        let batch: Vec<Triplet> = (0..cfg.batch_size).map_while(|_| source.next_triplet()).collect();
        if batch.is_empty() {
            return Err(EmbedError::EmptySource);
        }
        let pool = source.pool();
        let results = cfg.exec.map(&batch, |t| triplet_gradient(model, pool, t, cfg));
        let mut total = GradBuffer::zeros_like(model.params());
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l;
            total.add_assign(&g);
        }
        if !total.is_finite() {
            return Err(EmbedError::NonFinite);
        }
        total.scale(T::from_f64(1.0 / batch.len() as f64));
        adam.step(model.params_mut(), &total);
        report.train_loss.push(loss / batch.len() as f64);

        if step % cfg.validate_every == 0 || step == cfg.steps {
            let v = validation_loss(model, source.pool(), &validation, cfg)?;
            report.validation.push(ValidationPoint { step, loss: v });
            if v < report.best_validation_loss {
                report.best_validation_loss = v;
                report.best_step = step;
                best = model.params().clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    model.params_mut().copy_from(&best)?;
    Ok(report)
}

//! Phase two: Siamese training of the head with binary cross-entropy,
//! either on frozen embeddings or end to end through the embedder.

use serde::{Deserialize, Serialize};

use super::{DiscError, Discriminator, DiscriminatorHead};
use crate::ecgstore::ModelInput;
use crate::embedder::{EcgVector, Embedder};
use crate::preprocess::preprocess;
use crate::tensornet::{bce_loss, Adam, AdamConfig, GradBuffer, Graph, Scalar};
use crate::Exec;

/// Indices into a [`PairSource`] pool with the same-patient label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

impl Pair {
    fn label(&self) -> f64 {
        if self.same {
            1.0
        } else {
            0.0
        }
    }
}

pub trait PairSource {
    fn pool(&self) -> &[ModelInput];
    fn next_pair(&mut self) -> Option<Pair>;
    /// Fixed held-out pairs used for early stopping.
    fn validation(&self) -> &[Pair];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineTune {
    /// Embedder weights stay fixed; only the head learns.
    #[default]
    Freeze,
    /// Gradients flow into the embedder as well.
    EndToEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseTrainConfig {
    pub fine_tune: FineTune,
    pub steps: usize,
    pub batch_size: usize,
    pub validate_every: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub exec: Exec,
}

impl Default for SiameseTrainConfig {
    fn default() -> Self {
        Self {
            fine_tune: FineTune::Freeze,
            steps: 1000,
            batch_size: 128,
            validate_every: 100,
            patience: 10,
            adam: AdamConfig::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiameseValidationPoint {
    pub step: usize,
    pub loss: f64,
    /// Fraction of pairs on the right side of 0.5.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseTrainReport {
    pub train_loss: Vec<f64>,
    pub validation: Vec<SiameseValidationPoint>,
    pub best_step: usize,
    pub stopped_early: bool,
}

impl SiameseTrainReport {
    pub fn best(&self) -> &SiameseValidationPoint {
        self.validation.iter().find(|v| v.step == self.best_step).expect("best step is recorded")
    }
}

fn evaluate<T: Scalar>(
    embedder: &Embedder<T>,
    head: &DiscriminatorHead<T>,
    pool: &[ModelInput],
    pairs: &[Pair],
    exec: Exec,
    step: usize,
) -> Result<SiameseValidationPoint, DiscError> {
    let mut needed: Vec<usize> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    needed.sort_unstable();
    needed.dedup();
    let vectors: Vec<EcgVector> =
        exec.map(&needed, |&i| embedder.embed_preprocessed(&pool[i])).into_iter().collect::<Result<_, _>>()?;
    let lookup = |i: usize| &vectors[needed.binary_search(&i).expect("embedded above")];
    let (mut loss, mut correct) = (0.0, 0usize);
    for p in pairs {
        let prob = head.discriminate(lookup(p.a), lookup(p.b))?;
        loss += bce_loss(prob, p.label());
        correct += usize::from((prob >= 0.5) == p.same);
    }
    let n = pairs.len() as f64;
    Ok(SiameseValidationPoint { step, loss: loss / n, accuracy: correct as f64 / n })
}

struct PairGrads<T> {
    loss: f64,
    head: GradBuffer<T>,
    embedder: Option<GradBuffer<T>>,
}

fn pair_gradient<T: Scalar>(
    embedder: &Embedder<T>,
    head: &DiscriminatorHead<T>,
    pool: &[ModelInput],
    frozen: Option<&[EcgVector]>,
    pair: &Pair,
) -> Result<PairGrads<T>, DiscError> {
    let mut g = Graph::new();
    let (u, v) = match frozen {
        Some(vectors) => {
            let d = head.config().embedding_dim;
            let to_t = |v: &EcgVector| v.values().iter().map(|&x| T::from_f64(x)).collect();
            (g.input(&[d], to_t(&vectors[pair.a]))?, g.input(&[d], to_t(&vectors[pair.b]))?)
        }
        None => {
            let xa = embedder.input_node(&mut g, &pool[pair.a])?;
            let u = embedder.forward(&mut g, xa)?;
            let xb = embedder.input_node(&mut g, &pool[pair.b])?;
            (u, embedder.forward(&mut g, xb)?)
        }
    };
    let logit = head.forward(&mut g, u, v)?;
    let loss = g.bce_with_logits(logit, pair.label())?;
    let grads = g.backward(loss)?;
    Ok(PairGrads {
        loss: g.scalar(loss).as_f64(),
        head: g.param_grads(&grads, head.params()),
        embedder: frozen.is_none().then(|| g.param_grads(&grads, embedder.params())),
    })
}

/// Adam training of `head` (and of `embedder` in end-to-end mode) on
/// labelled pairs. Validation and early stopping follow the metric phase:
/// step 0, every `validate_every` steps, after the last step; the best
/// round's weights are restored.
pub fn train_siamese<T: Scalar>(
    embedder: &mut Embedder<T>,
    head: &mut DiscriminatorHead<T>,
    source: &mut dyn PairSource,
    cfg: &SiameseTrainConfig,
) -> Result<SiameseTrainReport, DiscError> {
    if source.pool().is_empty() || source.validation().is_empty() {
        return Err(DiscError::EmptySource);
    }
    if cfg.batch_size == 0 || cfg.validate_every == 0 {
        return Err(DiscError::InvalidConfig("batch_size and validate_every must be positive".into()));
    }
    if head.config().embedding_dim != embedder.embedding_dim() {
        return Err(DiscError::DimMismatch { expected: embedder.embedding_dim(), found: head.config().embedding_dim });
    }
    let pre_cfg = embedder.config().preprocess;
    let pool: Vec<ModelInput> = cfg
        .exec
        .map(source.pool(), |x| preprocess(x, &pre_cfg))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(crate::embedder::EmbedError::from)?;
    let frozen: Option<Vec<EcgVector>> = match cfg.fine_tune {
        FineTune::Freeze => {
            Some(cfg.exec.map(&pool, |x| embedder.embed_preprocessed(x)).into_iter().collect::<Result<_, _>>()?)
        }
        FineTune::EndToEnd => None,
    };
    let validation = source.validation().to_vec();
    let first = evaluate(embedder, head, &pool, &validation, cfg.exec, 0)?;
    let mut report = SiameseTrainReport {
        train_loss: Vec::with_capacity(cfg.steps),
        validation: vec![first],
        best_step: 0,
        stopped_early: false,
    };
    let mut best_loss = first.loss;
    let mut best = (head.params().clone(), frozen.is_none().then(|| embedder.params().clone()));
    let mut head_adam = Adam::new(cfg.adam, head.params());
    let mut embed_adam = Adam::new(cfg.adam, embedder.params());
    let mut since_best = 0;
    for step in 1..=cfg.steps {
        let batch: Vec<Pair> = (0..cfg.batch_size).map_while(|_| source.next_pair()).collect();
        if batch.is_empty() {
            return Err(DiscError::EmptySource);
        }
        let results = {
            let (e, h, f) = (&*embedder, &*head, frozen.as_deref());
            cfg.exec.map(&batch, |p| pair_gradient(e, h, &pool, f, p))
        };
        let mut head_total = GradBuffer::zeros_like(head.params());
        let mut embed_total = frozen.is_none().then(|| GradBuffer::zeros_like(embedder.params()));
        let mut loss = 0.0;
        for r in results {
            let r = r?;
            loss += r.loss;
            head_total.add_assign(&r.head);
            if let (Some(total), Some(g)) = (embed_total.as_mut(), r.embedder.as_ref()) {
                total.add_assign(g);
            }
        }
        let scale = T::from_f64(1.0 / batch.len() as f64);
        if !head_total.is_finite() || embed_total.as_ref().is_some_and(|t| !t.is_finite()) {
            return Err(crate::embedder::EmbedError::NonFinite.into());
        }
        head_total.scale(scale);
        head_adam.step(head.params_mut(), &head_total);
        if let Some(mut total) = embed_total {
            total.scale(scale);
            embed_adam.step(embedder.params_mut(), &total);
        }
        report.train_loss.push(loss / batch.len() as f64);

        if step % cfg.validate_every == 0 || step == cfg.steps {
            let point = evaluate(embedder, head, &pool, &validation, cfg.exec, step)?;
            report.validation.push(point);
            if point.loss < best_loss {
                best_loss = point.loss;
                report.best_step = step;
                best = (head.params().clone(), frozen.is_none().then(|| embedder.params().clone()));
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
    head.params_mut().copy_from(&best.0)?;
    if let Some(e) = &best.1 {
        embedder.params_mut().copy_from(e)?;
    }
    Ok(report)
}

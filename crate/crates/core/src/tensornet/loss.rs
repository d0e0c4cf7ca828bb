//! Metric-learning and classification losses, as plain functions for
//! reporting and as graph builders for training.

use super::graph::{Graph, NodeId};
use super::{Scalar, TensorError};

pub const TRIPLET_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleParams {
    pub gamma: f64,
    pub margin: f64,
}

impl Default for CircleParams {
    fn default() -> Self {
        Self { gamma: 80.0, margin: 0.4 }
    }
}

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
pub const BCE_CLAMP: f64 = 1e-7;

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> f64 {
    (l2(anchor, positive) - l2(anchor, negative) + margin).max(0.0)
}

/// Circle loss for one triplet given its two cosine similarities.
pub fn circle_loss_from_similarities(s_p: f64, s_n: f64, params: CircleParams) -> f64 {
    let m = params.margin;
    let alpha_p = (1.0 + m - s_p).max(0.0);
    let alpha_n = (s_n + m).max(0.0);
    let logit = params.gamma * (alpha_n * (s_n - m) - alpha_p * (s_p - (1.0 - m)));
    logit.max(0.0) + (-logit.abs()).exp().ln_1p()
}

pub fn circle_loss(anchor: &[f64], positive: &[f64], negative: &[f64], params: CircleParams) -> f64 {
    circle_loss_from_similarities(cos(anchor, positive), cos(anchor, negative), params)
}

pub fn bce_loss(probability: f64, label: f64) -> f64 {
    let p = probability.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn triplet_loss(&mut self, a: NodeId, p: NodeId, n: NodeId, margin: f64) -> Result<NodeId, TensorError> {
        let dp = self.euclidean_distance(a, p)?;
        let dn = self.euclidean_distance(a, n)?;
        let diff = self.sub(dp, dn)?;
        let shifted = self.add_scalar(diff, margin);
        Ok(self.relu(shifted))
    }

    /// The relaxation weights are differentiated through, not detached.
    pub fn circle_loss(
        &mut self,
        a: NodeId,
        p: NodeId,
        n: NodeId,
        params: CircleParams,
    ) -> Result<NodeId, TensorError> {
        let m = params.margin;
        let s_p = self.cosine_similarity(a, p)?;
        let s_n = self.cosine_similarity(a, n)?;
        let neg_sp = self.scale(s_p, -1.0);
        let ap_pre = self.add_scalar(neg_sp, 1.0 + m);
        let alpha_p = self.relu(ap_pre);
        let an_pre = self.add_scalar(s_n, m);
        let alpha_n = self.relu(an_pre);
        let sn_shift = self.add_scalar(s_n, -m);
        let sp_shift = self.add_scalar(s_p, -(1.0 - m));
        let neg_term = self.mul(alpha_n, sn_shift)?;
        let pos_term = self.mul(alpha_p, sp_shift)?;
        let diff = self.sub(neg_term, pos_term)?;
        let logit = self.scale(diff, params.gamma);
        Ok(self.softplus(logit))
    }
}

//! Detection metrics. In the overseer setting a *positive* is a mistaken
//! assignment and a detection fires when the likelihood is below the
//! threshold; the pairwise metrics (`auroc`, `accuracy_at`) use the usual
//! orientation where a higher score means "same patient".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, flagged: bool, positive: bool) {
        match (flagged, positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `None` when nothing is flagged.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` without positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// Harmonic mean of precision and recall; 0 when either is 0 or
    /// undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::InvalidConfig(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(EvalError::Degenerate("no scores".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Degenerate("NaN score".into()));
    }
    Ok(())
}

/// Confusion counts when flagging `likelihood < threshold`.
pub fn confusion_at(likelihoods: &[f64], mistakes: &[bool], threshold: f64) -> Result<Confusion, EvalError> {
    check_lengths(likelihoods, mistakes)?;
    let mut c = Confusion::default();
    for (&l, &m) in likelihoods.iter().zip(mistakes) {
        c.record(l < threshold, m);
    }
    Ok(c)
}

/// Threshold reaching `target_recall` on mistakes with the fewest flags.
///
/// With the mistakes' likelihoods sorted ascending, the smallest flag set
/// reaching the target consists of the first `ceil(target * positives)`
/// of them plus every correct assignment scoring at most as low. Any
/// threshold between that boundary score and the next higher likelihood in
/// the set flags the same items; the midpoint of that gap is returned
/// (halfway to 1 when nothing scores higher).
pub fn calibrate_threshold(likelihoods: &[f64], mistakes: &[bool], target_recall: f64) -> Result<f64, EvalError> {
    check_lengths(likelihoods, mistakes)?;
    let mut positives: Vec<f64> = likelihoods.iter().zip(mistakes).filter(|(_, &m)| m).map(|(&l, _)| l).collect();
    if positives.is_empty() {
        return Err(EvalError::Degenerate("no mistakes to calibrate on".into()));
    }
    if !(target_recall > 0.0 && target_recall <= 1.0) {
        return Err(EvalError::UnreachableRecall { target: target_recall, max: 1.0 });
    }
    positives.sort_by(f64::total_cmp);
    // small slack so that e.g. 0.95 * 20 does not round up to 20
    let needed = ((target_recall * positives.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let boundary = positives[needed - 1];
    let next = likelihoods.iter().copied().filter(|&l| l > boundary).fold(f64::INFINITY, f64::min);
    let threshold = if next.is_finite() { 0.5 * (boundary + next) } else { boundary + 0.5 * (1.0 - boundary).max(0.0) };
    Ok(if threshold > boundary { threshold } else { boundary.next_up() })
}

/// Precision at the calibrated `target_recall` threshold of the same data.
pub fn precision_at_recall(likelihoods: &[f64], mistakes: &[bool], target_recall: f64) -> Result<f64, EvalError> {
    let t = calibrate_threshold(likelihoods, mistakes, target_recall)?;
    Ok(confusion_at(likelihoods, mistakes, t)?.precision().unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of mistake detection at every distinct
/// flag set, thresholds ascending.
pub fn pr_curve(likelihoods: &[f64], mistakes: &[bool]) -> Result<Vec<PrPoint>, EvalError> {
    check_lengths(likelihoods, mistakes)?;
    let positives = mistakes.iter().filter(|&&m| m).count();
    if positives == 0 {
        return Err(EvalError::Degenerate("no mistakes".into()));
    }
    let mut order: Vec<usize> = (0..likelihoods.len()).collect();
    order.sort_by(|&a, &b| likelihoods[a].total_cmp(&likelihoods[b]));
    let mut out = Vec::new();
    let (mut tp, mut flagged) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = likelihoods[order[i]];
        while i < order.len() && likelihoods[order[i]] == s {
            flagged += 1;
            tp += usize::from(mistakes[order[i]]);
            i += 1;
        }
        // smallest threshold flagging everything up to s
        out.push(PrPoint {
            threshold: s.next_up(),
            precision: tp as f64 / flagged as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(out)
}

/// Area under the ROC curve of `scores` predicting `labels` (higher score
/// means positive), by the Mann–Whitney rank statistic with tied ranks
/// averaged.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::Degenerate("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of pairs classified correctly by `score >= threshold`.
pub fn accuracy_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let hits = scores.iter().zip(labels).filter(|(&s, &l)| (s >= threshold) == l).count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Percentile bootstrap interval of `statistic` over resampled items.
pub fn bootstrap_interval<F>(
    n_items: usize,
    resamples: usize,
    confidence: f64,
    seed: u64,
    statistic: F,
) -> Result<(f64, f64), EvalError>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n_items == 0 || resamples == 0 || !(0.0..1.0).contains(&confidence) {
        return Err(EvalError::InvalidConfig("bootstrap needs items, resamples and confidence in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..resamples)
        .filter_map(|_| {
            let idx: Vec<usize> = (0..n_items).map(|_| rng.random_range(0..n_items)).collect();
            statistic(&idx)
        })
        .collect();
    if values.is_empty() {
        return Err(EvalError::Degenerate("statistic undefined on every resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let at = |q: f64| values[((q * (values.len() - 1) as f64).round() as usize).min(values.len() - 1)];
    Ok((at(alpha), at(1.0 - alpha)))
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub dev_fraction: f64,
    /// Split over patients (each patient in exactly one part) instead of
    /// over the record sequence.
    pub patient_disjoint: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.7, dev_fraction: 0.1, patient_disjoint: false }
    }
}

/// Record indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `patient_ids` (one per record, in stored order). The default
/// cuts the record sequence into contiguous train/dev/test slices, so a
/// patient may appear in several parts. The patient-disjoint variant walks
/// patients in ascending id order and assigns whole patients until each
/// part's record quota is met.
pub fn split_records(patient_ids: &[u32], cfg: &SplitConfig) -> Result<Splits, EvalError> {
    let (t, d) = (cfg.train_fraction, cfg.dev_fraction);
    if !(t >= 0.0 && d >= 0.0 && t + d <= 1.0) {
        return Err(EvalError::InvalidConfig(format!("split fractions {t} + {d} must lie in [0, 1]")));
    }
    let n = patient_ids.len();
    let train_end = (t * n as f64).round() as usize;
    let dev_end = (((t + d) * n as f64).round() as usize).max(train_end);
    if !cfg.patient_disjoint {
        return Ok(Splits {
            train: (0..train_end).collect(),
            dev: (train_end..dev_end).collect(),
            test: (dev_end..n).collect(),
        });
    }
    let mut by_patient: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &p) in patient_ids.iter().enumerate() {
        by_patient.entry(p).or_default().push(i);
    }
    let mut splits = Splits::default();
    let mut assigned = 0;
    for records in by_patient.into_values() {
        let part = if assigned < train_end {
            &mut splits.train
        } else if assigned < dev_end {
            &mut splits.dev
        } else {
            &mut splits.test
        };
        assigned += records.len();
        part.extend(records);
    }
    for part in [&mut splits.train, &mut splits.dev, &mut splits.test] {
        part.sort_unstable();
    }
    Ok(splits)
}

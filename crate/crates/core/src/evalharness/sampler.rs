use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::discriminator::{Pair, PairSource};
use crate::ecgstore::ModelInput;
use crate::embedder::{Triplet, TripletSource};

/// Records of each patient within a subset of a labelled pool.
#[derive(Debug, Clone)]
struct Groups {
    patients: Vec<Vec<usize>>,
    /// Positions in `patients` of those with at least two records.
    multi: Vec<usize>,
}

impl Groups {
    fn new(labels: &[u32], subset: &[usize]) -> Result<Self, EvalError> {
        let mut by_patient: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &i in subset {
            let label =
                labels.get(i).ok_or_else(|| EvalError::InvalidConfig(format!("record index {i} out of range")))?;
            by_patient.entry(*label).or_default().push(i);
        }
        let patients: Vec<Vec<usize>> = by_patient.into_values().collect();
        let multi: Vec<usize> = (0..patients.len()).filter(|&p| patients[p].len() >= 2).collect();
        if patients.len() < 2 {
            return Err(EvalError::InsufficientData(format!("{} patients, need at least 2", patients.len())));
        }
        if multi.is_empty() {
            return Err(EvalError::InsufficientData("no patient has two recordings".into()));
        }
        Ok(Self { patients, multi })
    }

    fn same_patient_pair(&self, rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
        let p = *self.multi.choose(rng).expect("non-empty");
        let records = &self.patients[p];
        let a = rng.random_range(0..records.len());
        let mut b = rng.random_range(0..records.len() - 1);
        if b >= a {
            b += 1;
        }
        (p, records[a], records[b])
    }

    fn other_patient_record(&self, not: usize, rng: &mut ChaCha8Rng) -> usize {
        let mut q = rng.random_range(0..self.patients.len() - 1);
        if q >= not {
            q += 1;
        }
        *self.patients[q].choose(rng).expect("non-empty")
    }
}

/// Labelled pairs alternating positive, negative, positive, ... Positives
/// pick a patient with two or more records uniformly and two distinct
/// records of it; negatives pick two distinct patients uniformly.
#[derive(Debug, Clone)]
pub struct PairSampler {
    groups: Groups,
    rng: ChaCha8Rng,
    emitted: usize,
}

impl PairSampler {
    /// `labels[i]` is the patient of pool record `i`; only `subset` is used.
    pub fn new(labels: &[u32], subset: &[usize], seed: u64) -> Result<Self, EvalError> {
        Ok(Self { groups: Groups::new(labels, subset)?, rng: ChaCha8Rng::seed_from_u64(seed), emitted: 0 })
    }

    pub fn next_pair(&mut self) -> Pair {
        let positive = self.emitted.is_multiple_of(2);
        self.emitted += 1;
        if positive {
            let (_, a, b) = self.groups.same_patient_pair(&mut self.rng);
            Pair { a, b, same: true }
        } else {
            let p = self.rng.random_range(0..self.groups.patients.len());
            let a = *self.groups.patients[p].choose(&mut self.rng).expect("non-empty");
            let b = self.groups.other_patient_record(p, &mut self.rng);
            Pair { a, b, same: false }
        }
    }

    pub fn sample(&mut self, count: usize) -> Vec<Pair> {
        (0..count).map(|_| self.next_pair()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TripletSampler {
    groups: Groups,
    rng: ChaCha8Rng,
}

impl TripletSampler {
    pub fn new(labels: &[u32], subset: &[usize], seed: u64) -> Result<Self, EvalError> {
        Ok(Self { groups: Groups::new(labels, subset)?, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn next_triplet(&mut self) -> Triplet {
        let (p, anchor, positive) = self.groups.same_patient_pair(&mut self.rng);
        let negative = self.groups.other_patient_record(p, &mut self.rng);
        Triplet { anchor, positive, negative }
    }

    pub fn sample(&mut self, count: usize) -> Vec<Triplet> {
        (0..count).map(|_| self.next_triplet()).collect()
    }
}

/// Endless training triplets from one subset with fixed validation
/// triplets from another.
pub struct TripletDataset {
    pool: Vec<ModelInput>,
    sampler: TripletSampler,
    validation: Vec<Triplet>,
}

impl TripletDataset {
    pub fn new(
        pool: Vec<ModelInput>,
        labels: &[u32],
        train: &[usize],
        dev: &[usize],
        validation_count: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        if labels.len() != pool.len() {
            return Err(EvalError::InvalidConfig("one label per pool record required".into()));
        }
        let validation = TripletSampler::new(labels, dev, seed ^ 0x5eed)?.sample(validation_count);
        Ok(Self { sampler: TripletSampler::new(labels, train, seed)?, pool, validation })
    }
}

impl TripletSource for TripletDataset {
    fn pool(&self) -> &[ModelInput] {
        &self.pool
    }

    fn next_triplet(&mut self) -> Option<Triplet> {
        Some(self.sampler.next_triplet())
    }

    fn validation(&self) -> &[Triplet] {
        &self.validation
    }
}

pub struct PairDataset {
    pool: Vec<ModelInput>,
    sampler: PairSampler,
    validation: Vec<Pair>,
}

impl PairDataset {
    pub fn new(
        pool: Vec<ModelInput>,
        labels: &[u32],
        train: &[usize],
        dev: &[usize],
        validation_count: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        if labels.len() != pool.len() {
            return Err(EvalError::InvalidConfig("one label per pool record required".into()));
        }
        let validation = PairSampler::new(labels, dev, seed ^ 0x5eed)?.sample(validation_count);
        Ok(Self { sampler: PairSampler::new(labels, train, seed)?, pool, validation })
    }
}

impl PairSource for PairDataset {
    fn pool(&self) -> &[ModelInput] {
        &self.pool
    }

    fn next_pair(&mut self) -> Option<Pair> {
        Some(self.sampler.next_pair())
    }

    fn validation(&self) -> &[Pair] {
        &self.validation
    }
}

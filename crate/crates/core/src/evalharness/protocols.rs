use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use super::EvalError;
use crate::discriminator::{Discriminator, Pair};
use crate::embedder::EcgVector;
use crate::identity::{best_match, LikelihoodStrategy, VectorDatabase};
use crate::Exec;

fn group(labels: &[u32], subset: &[usize]) -> BTreeMap<u32, Vec<usize>> {
    let mut by_patient: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in subset {
        by_patient.entry(labels[i]).or_default().push(i);
    }
    by_patient
}

/// Discriminator outputs of labelled pairs, in input order.
pub fn pair_scores(
    vectors: &[EcgVector],
    pairs: &[Pair],
    head: &dyn Discriminator,
    exec: Exec,
) -> Result<Vec<f64>, EvalError> {
    exec.map(pairs, |p| Ok(head.discriminate(&vectors[p.a], &vectors[p.b])?)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryProbeResult {
    pub patients: Vec<u32>,
    /// Gallery patient matched to each probe.
    pub matched: Vec<u32>,
    pub accuracy: f64,
}

/// Samples `sample_size` patients with at least two recordings, takes two
/// distinct recordings A (gallery) and B (probe) of each, and matches every
/// probe to the gallery element with the highest discriminator output,
/// ties going to the lowest patient id. `N^2` discriminator calls.
pub fn gallery_probe(
    vectors: &[EcgVector],
    labels: &[u32],
    subset: &[usize],
    head: &dyn Discriminator,
    sample_size: usize,
    seed: u64,
    exec: Exec,
) -> Result<GalleryProbeResult, EvalError> {
    if vectors.len() != labels.len() {
        return Err(EvalError::InvalidConfig("one label per vector required".into()));
    }
    let eligible: Vec<(u32, Vec<usize>)> = group(labels, subset).into_iter().filter(|(_, r)| r.len() >= 2).collect();
    if sample_size == 0 || eligible.len() < sample_size {
        return Err(EvalError::InsufficientData(format!(
            "{} patients with two recordings, need {sample_size}",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<&(u32, Vec<usize>)> = eligible.choose_multiple(&mut rng, sample_size).collect();
    chosen.sort_by_key(|(id, _)| *id);
    let mut gallery = Vec::with_capacity(sample_size);
    let mut probes = Vec::with_capacity(sample_size);
    for (id, records) in &chosen {
        let two: Vec<usize> = records.choose_multiple(&mut rng, 2).copied().collect();
        gallery.push((*id, two[0]));
        probes.push(two[1]);
    }
    let matched: Vec<u32> = exec
        .map(&probes, |&probe| -> Result<u32, EvalError> {
            let scores = gallery
                .iter()
                .map(|&(id, g)| Ok((id, head.discriminate(&vectors[probe], &vectors[g])?)))
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(best_match(&scores).expect("non-empty gallery").0)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
    let patients: Vec<u32> = gallery.iter().map(|g| g.0).collect();
    let hits = patients.iter().zip(&matched).filter(|(a, b)| a == b).count();
    Ok(GalleryProbeResult { accuracy: hits as f64 / sample_size as f64, patients, matched })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_initial_patients: usize,
    pub n_probe: usize,
    pub mistake_rate: f64,
    pub strategy: LikelihoodStrategy,
    pub threshold: f64,
    /// Insert flagged vectors too (the default); `false` drops them.
    pub insert_flagged: bool,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_initial_patients: 10_000,
            n_probe: 1000,
            mistake_rate: 0.02,
            strategy: LikelihoodStrategy::WeightedDiscAvg,
            threshold: 0.5,
            insert_flagged: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationStep {
    /// Record index of the probe.
    pub record: usize,
    pub true_owner: u32,
    pub assigned: u32,
    pub mistake: bool,
    pub flagged: bool,
    pub likelihood: f64,
    /// Highest-likelihood patient over the whole database, for flagged steps.
    pub suggested: Option<u32>,
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub steps: Vec<SimulationStep>,
    pub confusion: Confusion,
    /// Wrong-patient vectors that entered the database.
    pub corrupted_insertions: usize,
}

impl SimulationReport {
    pub fn mistakes(&self) -> usize {
        self.steps.iter().filter(|s| s.mistake).count()
    }

    /// Fraction of detected mistakes whose suggested patient is the true
    /// owner; `None` without detected mistakes.
    pub fn correction_rate(&self) -> Option<f64> {
        let detected: Vec<&SimulationStep> = self.steps.iter().filter(|s| s.mistake && s.flagged).collect();
        if detected.is_empty() {
            return None;
        }
        Some(detected.iter().filter(|s| s.suggested == Some(s.true_owner)).count() as f64 / detected.len() as f64)
    }

    /// `(likelihood, mistake)` of every step.
    pub fn detection_scores(&self) -> (Vec<f64>, Vec<bool>) {
        self.steps.iter().map(|s| (s.likelihood, s.mistake)).unzip()
    }
}

/// The per-step mistake draws of a simulation seed.
pub fn mistake_schedule(seed: u64, n_probe: usize, mistake_rate: f64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..n_probe).map(|_| rng.random_bool(mistake_rate)).collect()
}

/// Streams probes past a simulated clinician. `N` patients with at least
/// two recordings are drawn; one random recording of each seeds the
/// database and `K` of their remaining recordings become probes, in random
/// order. Per probe the clinician assigns the owner, or with probability
/// `p` a uniformly random other registered patient; the overseer flags the
/// assignment when the likelihood under the assigned patient is below the
/// threshold. The vector is then inserted under the assigned patient.
pub fn simulate_overseer(
    vectors: &[EcgVector],
    labels: &[u32],
    subset: &[usize],
    head: &dyn Discriminator,
    cfg: &SimulationConfig,
    exec: Exec,
) -> Result<SimulationReport, EvalError> {
    if vectors.len() != labels.len() {
        return Err(EvalError::InvalidConfig("one label per vector required".into()));
    }
    if cfg.n_probe == 0 || !(0.0..=1.0).contains(&cfg.mistake_rate) {
        return Err(EvalError::InvalidConfig("need n_probe >= 1 and mistake_rate in [0, 1]".into()));
    }
    if cfg.n_initial_patients < 2 && cfg.mistake_rate > 0.0 {
        return Err(EvalError::InsufficientData("mistakes need at least two registered patients".into()));
    }
    let eligible: Vec<(u32, Vec<usize>)> = group(labels, subset).into_iter().filter(|(_, r)| r.len() >= 2).collect();
    if eligible.len() < cfg.n_initial_patients {
        return Err(EvalError::InsufficientData(format!(
            "{} patients with two recordings, need {}",
            eligible.len(),
            cfg.n_initial_patients
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen: Vec<(u32, Vec<usize>)> =
        eligible.choose_multiple(&mut rng, cfg.n_initial_patients).cloned().collect();
    chosen.sort_by_key(|(id, _)| *id);
    let dim = vectors.first().map_or(0, EcgVector::dim);
    let mut db = VectorDatabase::new(dim);
    let mut extras = Vec::new();
    for (id, records) in &mut chosen {
        records.shuffle(&mut rng);
        db.register_patient(*id, vec![vectors[records[0]].clone()])?;
        extras.extend(records[1..].iter().map(|&r| (*id, r)));
    }
    if extras.len() < cfg.n_probe {
        return Err(EvalError::InsufficientData(format!("{} probe recordings, need {}", extras.len(), cfg.n_probe)));
    }
    let probes: Vec<(u32, usize)> = extras.choose_multiple(&mut rng, cfg.n_probe).copied().collect();
    let ids: Vec<u32> = db.patient_ids().collect();
    let schedule = mistake_schedule(cfg.seed, cfg.n_probe, cfg.mistake_rate);

    let mut steps = Vec::with_capacity(cfg.n_probe);
    let mut confusion = Confusion::default();
    let mut corrupted_insertions = 0;
    for (&(owner, record), &mistake) in probes.iter().zip(&schedule) {
        let assigned = if mistake {
            let owner_pos = ids.binary_search(&owner).expect("probe owners are registered");
            let mut k = rng.random_range(0..ids.len() - 1);
            if k >= owner_pos {
                k += 1;
            }
            ids[k]
        } else {
            owner
        };
        let v = &vectors[record];
        let likelihood = db.score(v, assigned, head, cfg.strategy)?;
        let flagged = likelihood < cfg.threshold;
        let suggested =
            if flagged { best_match(&db.score_all(v, head, cfg.strategy, exec)?).map(|b| b.0) } else { None };
        let inserted = cfg.insert_flagged || !flagged;
        if inserted {
            db.insert(assigned, v.clone())?;
            corrupted_insertions += usize::from(mistake);
        }
        confusion.record(flagged, mistake);
        steps.push(SimulationStep {
            record,
            true_owner: owner,
            assigned,
            mistake,
            flagged,
            likelihood,
            suggested,
            inserted,
        });
    }
    Ok(SimulationReport { steps, confusion, corrupted_insertions })
}

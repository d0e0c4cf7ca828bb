use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::discriminator::{DiscError, Discriminator};
use crate::identity::LikelihoodStrategy;

/// Vectors `[patient, record]` for `counts[i]` records of patient `i`.
fn labelled(counts: &[usize]) -> (Vec<EcgVector>, Vec<u32>) {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (p, &c) in counts.iter().enumerate() {
        for r in 0..c {
            vectors.push(EcgVector::new(vec![p as f64, r as f64 + 0.5]).unwrap());
            labels.push(p as u32);
        }
    }
    (vectors, labels)
}

struct Oracle;

impl Discriminator for Oracle {
    fn discriminate(&self, p: &EcgVector, q: &EcgVector) -> Result<f64, DiscError> {
        Ok(if p.values()[0] == q.values()[0] { 1.0 } else { 0.0 })
    }
}

struct AntiOracle;

impl Discriminator for AntiOracle {
    fn discriminate(&self, p: &EcgVector, q: &EcgVector) -> Result<f64, DiscError> {
        Ok(1.0 - Oracle.discriminate(p, q)?)
    }
}

/// Pseudo-random but symmetric scores keyed by a seed.
struct RandomHead(u64);

impl Discriminator for RandomHead {
    fn discriminate(&self, p: &EcgVector, q: &EcgVector) -> Result<f64, DiscError> {
        let key = |v: &EcgVector| v.values().iter().fold(0u64, |h, x| h.rotate_left(17) ^ x.to_bits());
        let (a, b) = (key(p), key(q));
        let mut z = (a.min(b) ^ a.max(b).rotate_left(32) ^ self.0).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 31)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z ^= z >> 29;
        Ok((z >> 11) as f64 / (1u64 << 53) as f64)
    }
}

#[test]
fn record_sequence_split_is_contiguous() {
    let labels: Vec<u32> = (0..100).map(|i| i % 7).collect();
    let s = split_records(&labels, &SplitConfig::default()).unwrap();
    assert_eq!(s.train, (0..70).collect::<Vec<_>>());
    assert_eq!(s.dev, (70..80).collect::<Vec<_>>());
    assert_eq!(s.test, (80..100).collect::<Vec<_>>());
    assert!(split_records(&labels, &SplitConfig { train_fraction: 0.9, dev_fraction: 0.2, ..SplitConfig::default() })
        .is_err());
}

#[test]
fn patient_disjoint_split_keeps_patients_whole() {
    let labels: Vec<u32> = (0..500).map(|i| (i * 37 % 101) as u32).collect();
    let s = split_records(&labels, &SplitConfig { patient_disjoint: true, ..SplitConfig::default() }).unwrap();
    let ids = |part: &[usize]| part.iter().map(|&i| labels[i]).collect::<HashSet<u32>>();
    let (a, b, c) = (ids(&s.train), ids(&s.dev), ids(&s.test));
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    assert_eq!(s.train.len() + s.dev.len() + s.test.len(), 500);
    assert!((s.train.len() as f64 - 350.0).abs() <= 10.0);
}

#[test]
fn pair_sampler_is_balanced_and_truthful() {
    let (_, labels) = labelled(&[1, 2, 5, 3, 1, 4]);
    let subset: Vec<usize> = (0..labels.len()).collect();
    let mut s = PairSampler::new(&labels, &subset, 7).unwrap();
    let two = s.sample(2);
    assert!(two[0].same && !two[1].same);
    let pairs = PairSampler::new(&labels, &subset, 7).unwrap().sample(10_000);
    assert_eq!(pairs[..2], two[..]);
    assert_eq!(pairs.iter().filter(|p| p.same).count(), 5000);
    for (i, p) in pairs.iter().enumerate() {
        assert_eq!(p.same, i % 2 == 0);
        assert_ne!(p.a, p.b);
        assert_eq!(labels[p.a] == labels[p.b], p.same);
    }
    assert_ne!(pairs, PairSampler::new(&labels, &subset, 8).unwrap().sample(10_000));
}

#[test]
fn samplers_stay_inside_their_subset() {
    let (_, labels) = labelled(&[3, 3, 3, 3, 3]);
    let subset = vec![0, 1, 3, 4, 6, 9, 12];
    let allowed: HashSet<usize> = subset.iter().copied().collect();
    for t in TripletSampler::new(&labels, &subset, 1).unwrap().sample(500) {
        assert!(allowed.contains(&t.anchor) && allowed.contains(&t.positive) && allowed.contains(&t.negative));
        assert_ne!(t.anchor, t.positive);
        assert_eq!(labels[t.anchor], labels[t.positive]);
        assert_ne!(labels[t.anchor], labels[t.negative]);
    }
    for p in PairSampler::new(&labels, &subset, 1).unwrap().sample(500) {
        assert!(allowed.contains(&p.a) && allowed.contains(&p.b));
    }
}

#[test]
fn samplers_reject_insufficient_data() {
    let (_, labels) = labelled(&[1, 1, 1]);
    assert!(matches!(PairSampler::new(&labels, &[0, 1, 2], 0), Err(EvalError::InsufficientData(_))));
    let (_, labels) = labelled(&[4]);
    assert!(matches!(TripletSampler::new(&labels, &[0, 1, 2, 3], 0), Err(EvalError::InsufficientData(_))));
}

#[test]
fn gallery_probe_oracles() {
    let (vectors, labels) = labelled(&[2, 3, 2, 2, 4, 2, 2, 2]);
    let all: Vec<usize> = (0..labels.len()).collect();
    let r = gallery_probe(&vectors, &labels, &all, &Oracle, 8, 3, Exec::Parallel).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.patients, (0..8).collect::<Vec<u32>>());
    let anti = gallery_probe(&vectors, &labels, &all, &AntiOracle, 8, 3, Exec::Sequential).unwrap();
    assert_eq!(anti.accuracy, 0.0);
    // all ties: lowest id wins
    assert!(anti.matched.iter().zip(&anti.patients).all(|(&m, &p)| m == if p == 0 { 1 } else { 0 }));
    let single = gallery_probe(&vectors, &labels, &all, &RandomHead(1), 1, 5, Exec::Sequential).unwrap();
    assert_eq!(single.accuracy, 1.0);
    assert!(gallery_probe(&vectors, &labels, &all, &Oracle, 9, 3, Exec::Sequential).is_err());
}

#[test]
fn random_head_matches_at_chance() {
    let (vectors, labels) = labelled(&[2; 100]);
    let all: Vec<usize> = (0..labels.len()).collect();
    let trials = 1000;
    let mean = (0..trials)
        .map(|s| gallery_probe(&vectors, &labels, &all, &RandomHead(s), 100, s, Exec::Parallel).unwrap().accuracy)
        .sum::<f64>()
        / trials as f64;
    let se = (0.01f64 * 0.99 / 100.0).sqrt() / (trials as f64).sqrt();
    assert!((mean - 0.01).abs() < 3.0 * se, "mean {mean}, se {se}");
}

fn sim(n: usize, k: usize, p: f64, seed: u64) -> SimulationConfig {
    SimulationConfig {
        n_initial_patients: n,
        n_probe: k,
        mistake_rate: p,
        threshold: 0.5,
        seed,
        ..SimulationConfig::default()
    }
}

#[test]
fn oracle_simulation_without_mistakes_raises_no_flags() {
    let (vectors, labels) = labelled(&[3; 40]);
    let all: Vec<usize> = (0..labels.len()).collect();
    for threshold in [0.01, 0.5, 0.99] {
        let cfg = SimulationConfig { threshold, ..sim(40, 60, 0.0, 4) };
        let r = simulate_overseer(&vectors, &labels, &all, &Oracle, &cfg, Exec::Sequential).unwrap();
        assert_eq!(r.mistakes(), 0);
        assert!(r.steps.iter().all(|s| !s.flagged && s.likelihood == 1.0));
        assert_eq!(r.correction_rate(), None);
    }
}

#[test]
fn oracle_simulation_detects_and_corrects_every_mistake() {
    let (vectors, labels) = labelled(&[3; 150]);
    let all: Vec<usize> = (0..labels.len()).collect();
    // flagged vectors are dropped so that detected mistakes cannot corrupt
    // the clusters later probes are scored against
    for strategy in LikelihoodStrategy::ALL {
        let cfg = SimulationConfig { strategy, insert_flagged: false, ..sim(150, 200, 0.05, 11) };
        let r = simulate_overseer(&vectors, &labels, &all, &Oracle, &cfg, Exec::Parallel).unwrap();
        assert!(r.mistakes() > 0);
        let c = r.confusion;
        assert_eq!(c.total(), 200);
        assert_eq!((c.fp, c.fn_), (0, 0), "{strategy}");
        assert_eq!(c.recall(), Some(1.0));
        assert_eq!(c.precision(), Some(1.0));
        assert_eq!(r.correction_rate(), Some(1.0));
        assert_eq!(r.corrupted_insertions, 0);
        for s in &r.steps {
            assert_eq!(s.mistake, s.assigned != s.true_owner);
            assert_eq!(labels[s.record], s.true_owner);
        }
    }
}

#[test]
fn inserting_flagged_mistakes_corrupts_the_database() {
    let (vectors, labels) = labelled(&[3; 150]);
    let all: Vec<usize> = (0..labels.len()).collect();
    let r = simulate_overseer(&vectors, &labels, &all, &Oracle, &sim(150, 200, 0.05, 11), Exec::Sequential).unwrap();
    assert!(r.mistakes() > 0);
    assert_eq!(r.corrupted_insertions, r.mistakes());
    assert!(r.steps.iter().all(|s| s.inserted));
}

#[test]
fn full_scale_mistake_count_follows_the_seeded_draw() {
    let (vectors, labels) = labelled(&[2; 10_000]);
    let all: Vec<usize> = (0..labels.len()).collect();
    let cfg = SimulationConfig::default();
    assert_eq!((cfg.n_initial_patients, cfg.n_probe, cfg.mistake_rate), (10_000, 1000, 0.02));
    let r = simulate_overseer(&vectors, &labels, &all, &Oracle, &cfg, Exec::Parallel).unwrap();
    let drawn = mistake_schedule(cfg.seed, 1000, 0.02);
    assert_eq!(r.steps.iter().map(|s| s.mistake).collect::<Vec<_>>(), drawn);
    // expectation 20 mistakes among 1000 probes, binomial sd ~4.4
    let m = r.mistakes() as f64;
    assert!((m - 20.0).abs() <= 3.0 * (1000.0f64 * 0.02 * 0.98).sqrt(), "{m}");
    assert_eq!(r.confusion.tp + r.confusion.fn_, r.mistakes());
}

#[test]
fn simulation_is_deterministic_and_drop_mode_skips_flagged() {
    let (vectors, labels) = labelled(&[2, 3, 4, 2, 3, 2, 5, 2, 2, 3]);
    let all: Vec<usize> = (0..labels.len()).collect();
    let cfg = sim(10, 12, 0.3, 9);
    let a = simulate_overseer(&vectors, &labels, &all, &RandomHead(3), &cfg, Exec::Parallel).unwrap();
    let b = simulate_overseer(&vectors, &labels, &all, &RandomHead(3), &cfg, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    let drop = SimulationConfig { insert_flagged: false, ..cfg };
    let d = simulate_overseer(&vectors, &labels, &all, &Oracle, &drop, Exec::Sequential).unwrap();
    assert!(d.steps.iter().all(|s| s.inserted == !s.flagged));
    assert_eq!(d.corrupted_insertions, 0);
    assert!(simulate_overseer(&vectors, &labels, &all, &Oracle, &sim(11, 5, 0.1, 0), Exec::Sequential).is_err());
    assert!(simulate_overseer(&vectors, &labels, &all, &Oracle, &sim(10, 100, 0.1, 0), Exec::Sequential).is_err());
}

fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut n) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                n += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / n
}

#[test]
fn auroc_examples() {
    assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
    let scores = [0.3, 0.7, 0.7, 0.1, 0.5, 0.3];
    let labels = [true, false, true, false, true, false];
    assert!((auroc(&scores, &labels).unwrap() - brute_auroc(&scores, &labels)).abs() < 1e-15);
    assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    assert!(auroc(&[], &[]).is_err());
}

#[test]
fn auroc_of_unrelated_labels_is_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let a = auroc(&scores, &labels).unwrap();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = n as f64 - pos;
    let se = ((pos + neg + 1.0) / (12.0 * pos * neg)).sqrt();
    assert!((a - 0.5).abs() < 3.0 * se, "{a}");
}

#[test]
fn calibration_examples() {
    // perfectly separated
    let l = [0.05, 0.1, 0.2, 0.7, 0.8, 0.9];
    let m = [true, true, true, false, false, false];
    let t = calibrate_threshold(&l, &m, 0.95).unwrap();
    assert!(t > 0.2 && t < 0.7);
    assert_eq!(confusion_at(&l, &m, t).unwrap().recall(), Some(1.0));
    // nineteen easy mistakes, one hard one, correct ones at 0.8 and above
    let mut l = vec![0.1; 19];
    l.push(0.9);
    let mut m = vec![true; 20];
    for i in 0..80 {
        l.push(0.8 + 0.002 * i as f64);
        m.push(false);
    }
    let t = calibrate_threshold(&l, &m, 0.95).unwrap();
    assert!(t > 0.1 && t < 0.8, "{t}");
    assert_eq!(confusion_at(&l, &m, t).unwrap().recall(), Some(0.95));
    assert_eq!(precision_at_recall(&l, &m, 0.95).unwrap(), 1.0);
    assert!(calibrate_threshold(&[0.3, 0.4], &[false, false], 0.95).is_err());
    assert!(matches!(calibrate_threshold(&[0.3], &[true], 1.5), Err(EvalError::UnreachableRecall { .. })));
}

#[test]
fn confusion_and_accuracy() {
    let c = confusion_at(&[0.1, 0.2, 0.6, 0.9], &[true, false, true, false], 0.5).unwrap();
    assert_eq!(c, Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
    assert_eq!(c.f1(), 0.5);
    assert_eq!(Confusion::default().precision(), None);
    assert_eq!(accuracy_at(&[0.2, 0.6, 0.7], &[false, true, false], 0.5).unwrap(), 2.0 / 3.0);
}

#[test]
fn bootstrap_brackets_the_statistic() {
    let values: Vec<f64> = (0..200).map(|i| (i % 10) as f64).collect();
    let (lo, hi) = bootstrap_interval(values.len(), 500, 0.95, 3, |idx| {
        Some(idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64)
    })
    .unwrap();
    assert!(lo < 4.5 && 4.5 < hi && hi - lo < 1.5, "{lo} {hi}");
}

proptest! {
    #[test]
    fn sweep_is_monotone(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..60);
        let l: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0).collect();
        let mut m: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        m[0] = true;
        let curve = pr_curve(&l, &m).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[0].recall <= w[1].recall);
        }
        let t = calibrate_threshold(&l, &m, 0.95).unwrap();
        prop_assert!(confusion_at(&l, &m, t).unwrap().recall().unwrap() >= 0.95);
        let mut last = 0.0;
        for i in 0..=20 {
            let r = confusion_at(&l, &m, i as f64 / 20.0).unwrap().recall().unwrap();
            prop_assert!(r >= last);
            last = r;
        }
    }
}

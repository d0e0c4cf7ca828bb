use std::collections::{BTreeMap, HashSet};

use super::*;
use crate::ecgstore::{dequantize, read_container, write_container};

#[test]
fn patients_are_deterministic_and_in_range() {
    assert_eq!(generate_patient(17), generate_patient(17));
    assert_ne!(generate_patient(17), generate_patient(18));
    for seed in 0..500 {
        assert!(generate_patient(seed).within_ranges(), "seed {seed}");
    }
}

#[test]
fn thousand_patients_have_distinct_parameters() {
    let tuples: HashSet<Vec<u64>> = (0..1000)
        .map(|s| {
            let p = generate_patient(s);
            let mut v = vec![p.heart_rate_hz.to_bits(), p.noise_volts.to_bits()];
            v.extend(p.waves.iter().flat_map(|w| [w.amplitude.to_bits(), w.width.to_bits(), w.offset.to_bits()]));
            v.extend(p.projection.iter().flatten().map(|c| c.to_bits()));
            v
        })
        .collect();
    assert_eq!(tuples.len(), 1000);
}

fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / (x.len() - lag) as f64
}

#[test]
fn noiseless_recordings_are_periodic() {
    for seed in 0..20u64 {
        let params = generate_patient(seed).noiseless();
        let jitter = recording_jitter(&params, seed * 7 + 1);
        let signal = clean_signal(&jitter, 4096, 500);
        let period = 500.0 / jitter.heart_rate_hz;
        let lead = (0..STORED_LEAD_COUNT)
            .max_by(|&a, &b| params.projection[a][1].abs().total_cmp(&params.projection[b][1].abs()))
            .unwrap();
        let row: Vec<f64> = signal.row(lead).to_vec();
        let lags = (period * 0.6) as usize..(period * 1.4) as usize;
        let best = lags.max_by(|&a, &b| autocorrelation(&row, a).total_cmp(&autocorrelation(&row, b))).unwrap();
        assert!((best as f64 - period).abs() <= 1.0, "seed {seed}: peak {best}, period {period}");
        // the quantized recording carries the template exactly up to rounding
        let record = generate_recording(&params, 0, seed * 7 + 1, 4096, 500).unwrap();
        let volts = dequantize(&record);
        let err = volts.iter().zip(signal.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.5 * DEFAULT_GRANULARITY_VOLTS as f64 + 1e-12);
    }
}

/// Mean beat over all leads, folded at the recording's own beat period and
/// aligned on the R peak, in 100 bins per lead.
fn beat_template(record: &EcgRecord, jitter: &RecordingJitter) -> Vec<f64> {
    let volts = dequantize(record);
    let bins = 100;
    let mut out = vec![0.0; bins * STORED_LEAD_COUNT];
    let mut counts = vec![0usize; bins];
    let period = 1.0 / jitter.heart_rate_hz;
    for t in 0..volts.ncols() {
        let time = t as f64 / 500.0 - jitter.phase_s;
        let bin = (time.rem_euclid(period) / period * bins as f64) as usize % bins;
        counts[bin] += 1;
        for lead in 0..STORED_LEAD_COUNT {
            out[lead * bins + bin] += volts[[lead, t]];
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v /= counts[i % bins].max(1) as f64;
    }
    out
}

/// Maximum normalized cross-correlation over circular shifts of the beat.
fn max_xcorr(a: &[f64], b: &[f64]) -> f64 {
    let bins = a.len() / STORED_LEAD_COUNT;
    let centre = |v: &[f64]| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect()
    };
    let (a, b) = (centre(a), centre(b));
    let norm = (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt();
    (0..bins)
        .map(|s| (0..a.len()).map(|i| a[i] * b[(i / bins) * bins + (i % bins + s) % bins]).sum::<f64>() / norm)
        .fold(f64::MIN, f64::max)
}

#[test]
fn recordings_of_one_patient_correlate_more() {
    let (mut wins, mut same, mut different) = (0, 0.0, 0.0);
    for i in 0..100u64 {
        let (pa, pb) = (generate_patient(1000 + 2 * i), generate_patient(1001 + 2 * i));
        let (s1, s2, s3) = (3 * i, 3 * i + 1, 3 * i + 2);
        let ta1 = beat_template(&generate_recording(&pa, 0, s1, 4096, 500).unwrap(), &recording_jitter(&pa, s1));
        let ta2 = beat_template(&generate_recording(&pa, 0, s2, 4096, 500).unwrap(), &recording_jitter(&pa, s2));
        let tb = beat_template(&generate_recording(&pb, 1, s3, 4096, 500).unwrap(), &recording_jitter(&pb, s3));
        let (s, d) = (max_xcorr(&ta1, &ta2), max_xcorr(&ta1, &tb));
        wins += usize::from(s > d);
        same += s;
        different += d;
    }
    assert!(same > different, "{same} vs {different}");
    assert!(wins >= 95, "{wins} of 100");
}

#[test]
fn recordings_are_deterministic_and_unsaturated() {
    let p = generate_patient(3);
    let a = generate_recording(&p, 9, 44, 4096, 500).unwrap();
    assert_eq!(a, generate_recording(&p, 9, 44, 4096, 500).unwrap());
    assert_ne!(a, generate_recording(&p, 9, 45, 4096, 500).unwrap());
    assert_eq!(a.patient_id(), 9);
    for seed in 0..50 {
        let r = generate_recording(&generate_patient(seed), 0, seed, 4096, 500).unwrap();
        assert!(r.leads().iter().all(|&q| q > i16::MIN && q < i16::MAX));
    }
}

#[test]
fn dataset_counts_match_seeded_draws() {
    let cfg =
        SynthConfig { n_patients: 200, n_samples: 256, seed: 5, first_patient_id: 1000, ..SynthConfig::default() };
    let ds = generate_dataset(&cfg, Exec::Parallel).unwrap();
    let counts = recording_counts(&cfg);
    assert_eq!(ds.container.len(), counts.iter().sum::<usize>());
    assert!(counts.iter().all(|c| (2..=6).contains(c)));
    let mut per_patient = BTreeMap::new();
    for r in ds.container.records() {
        *per_patient.entry(r.patient_id()).or_insert(0usize) += 1;
    }
    let expected: BTreeMap<u32, usize> = counts.iter().enumerate().map(|(i, &c)| (1000 + i as u32, c)).collect();
    assert_eq!(per_patient, expected);
    // shuffled: the first records are not all one patient
    let first: HashSet<u32> = ds.container.records()[..10].iter().map(|r| r.patient_id()).collect();
    assert!(first.len() > 3);

    assert_eq!(ds, generate_dataset(&cfg, Exec::Sequential).unwrap());
    assert_eq!(read_container(&write_container(&ds.container)).unwrap(), ds.container);
}

#[test]
fn empty_and_invalid_configs() {
    let ds = generate_dataset(&SynthConfig { n_patients: 0, ..SynthConfig::default() }, Exec::Sequential).unwrap();
    assert!(ds.container.is_empty());
    assert!(generate_dataset(
        &SynthConfig { min_recordings: 3, max_recordings: 2, ..SynthConfig::default() },
        Exec::Sequential
    )
    .is_err());
    assert!(generate_dataset(&SynthConfig { min_recordings: 0, ..SynthConfig::default() }, Exec::Sequential).is_err());
}

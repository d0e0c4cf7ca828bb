//! Synthetic ECG cohorts with known patient identity.
//!
//! A patient is a three-wave (P, QRS, T) Gaussian beat template with its
//! own timing and per-lead projection coefficients. Each recording of the
//! patient repeats the template with recording-level jitter (heart rate,
//! gain, per-wave amplitude, width and timing, and electrode projection),
//! starts at a random phase, and adds seeded white noise and a sinusoidal
//! baseline drift before quantization.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecgstore::{
    quantize, ContainerError, DatasetContainer, EcgRecord, StoreError, DEFAULT_GRANULARITY_VOLTS, STORED_LEAD_COUNT,
};
use crate::Exec;

pub const HEART_RATE_RANGE_HZ: (f64, f64) = (0.8, 2.0);
/// Relative per-recording jitter half-ranges.
pub const HEART_RATE_JITTER: f64 = 0.06;
pub const GAIN_JITTER: f64 = 0.10;
pub const WAVE_JITTER: f64 = 0.08;
/// Standard deviations of the multiplicative and additive jitter of each
/// projection coefficient (electrode placement).
pub const PROJECTION_JITTER: (f64, f64) = (0.10, 0.05);

/// Amplitude (volts), width (seconds) and offset from the R peak (seconds)
/// ranges of the P, QRS and T waves.
const WAVE_RANGES: [[(f64, f64); 3]; 3] = [
    [(0.05e-3, 0.25e-3), (0.012, 0.030), (-0.22, -0.12)],
    [(0.6e-3, 1.6e-3), (0.008, 0.020), (0.0, 0.0)],
    [(0.1e-3, 0.5e-3), (0.030, 0.070), (0.18, 0.30)],
];
const NOISE_RANGE_VOLTS: (f64, f64) = (10e-6, 50e-6);
const DRIFT_AMPLITUDE_RANGE_VOLTS: (f64, f64) = (50e-6, 300e-6);
const DRIFT_FREQUENCY_RANGE_HZ: (f64, f64) = (0.05, 0.5);

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    pub width: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPatientParams {
    pub heart_rate_hz: f64,
    pub waves: [Wave; 3],
    /// `projection[lead][wave]` in `[-1, 1]`.
    pub projection: [[f64; 3]; STORED_LEAD_COUNT],
    pub noise_volts: f64,
    pub drift_amplitude_volts: f64,
    pub drift_frequency_hz: f64,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws a patient from the fixed parameter ranges.
pub fn generate_patient(seed: u64) -> SyntheticPatientParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heart_rate_hz = draw(&mut rng, HEART_RATE_RANGE_HZ);
    let waves = WAVE_RANGES.map(|[a, w, o]| Wave {
        amplitude: draw(&mut rng, a),
        width: draw(&mut rng, w),
        offset: draw(&mut rng, o),
    });
    let projection = [[0.0; 3]; STORED_LEAD_COUNT].map(|row| row.map(|_: f64| rng.random_range(-1.0..=1.0)));
    SyntheticPatientParams {
        heart_rate_hz,
        waves,
        projection,
        noise_volts: draw(&mut rng, NOISE_RANGE_VOLTS),
        drift_amplitude_volts: draw(&mut rng, DRIFT_AMPLITUDE_RANGE_VOLTS),
        drift_frequency_hz: draw(&mut rng, DRIFT_FREQUENCY_RANGE_HZ),
    }
}

impl SyntheticPatientParams {
    pub fn within_ranges(&self) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        inside(self.heart_rate_hz, HEART_RATE_RANGE_HZ)
            && self
                .waves
                .iter()
                .zip(&WAVE_RANGES)
                .all(|(w, [a, wd, o])| inside(w.amplitude, *a) && inside(w.width, *wd) && inside(w.offset, *o))
            && self.projection.iter().flatten().all(|&c| (-1.0..=1.0).contains(&c))
            && inside(self.noise_volts, NOISE_RANGE_VOLTS)
            && inside(self.drift_amplitude_volts, DRIFT_AMPLITUDE_RANGE_VOLTS)
            && inside(self.drift_frequency_hz, DRIFT_FREQUENCY_RANGE_HZ)
    }

    /// Same patient without noise or drift.
    pub fn noiseless(&self) -> Self {
        Self { noise_volts: 0.0, drift_amplitude_volts: 0.0, ..self.clone() }
    }
}

/// The recording-level variation drawn from a recording seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingJitter {
    pub heart_rate_hz: f64,
    pub gain: f64,
    /// The patient's waves after per-recording perturbation.
    pub waves: [Wave; 3],
    pub projection: [[f64; 3]; STORED_LEAD_COUNT],
    /// Time of the first R peak, in `[0, period)`.
    pub phase_s: f64,
    pub drift_phase: f64,
}

pub fn recording_jitter(params: &SyntheticPatientParams, recording_seed: u64) -> RecordingJitter {
    let mut rng = ChaCha8Rng::seed_from_u64(recording_seed);
    let heart_rate_hz = params.heart_rate_hz * (1.0 + rng.random_range(-HEART_RATE_JITTER..=HEART_RATE_JITTER));
    let gain = 1.0 + rng.random_range(-GAIN_JITTER..=GAIN_JITTER);
    let factor = |rng: &mut ChaCha8Rng| 1.0 + rng.random_range(-WAVE_JITTER..=WAVE_JITTER);
    let waves = params.waves.map(|w| Wave {
        amplitude: w.amplitude * factor(&mut rng),
        width: w.width * factor(&mut rng),
        offset: w.offset * factor(&mut rng),
    });
    let scale = Normal::new(1.0, PROJECTION_JITTER.0).expect("positive std");
    let shift = Normal::new(0.0, PROJECTION_JITTER.1).expect("positive std");
    let projection = params.projection.map(|row| row.map(|c| c * scale.sample(&mut rng) + shift.sample(&mut rng)));
    let phase_s = rng.random_range(0.0..1.0) / heart_rate_hz;
    let drift_phase = rng.random_range(0.0..std::f64::consts::TAU);
    RecordingJitter { heart_rate_hz, gain, waves, projection, phase_s, drift_phase }
}

/// Noise-free signal of every stored lead, in volts.
pub fn clean_signal(jitter: &RecordingJitter, n_samples: usize, rate_hz: u32) -> Array2<f64> {
    let period = 1.0 / jitter.heart_rate_hz;
    let dt = 1.0 / rate_hz as f64;
    let mut out = Array2::zeros((STORED_LEAD_COUNT, n_samples));
    let mut waves_at = vec![[0.0; 3]; n_samples];
    for (t, w) in waves_at.iter_mut().enumerate() {
        // position within the beat, centred on the nearest R peak
        let time = t as f64 * dt - jitter.phase_s;
        let local = time - (time / period).round() * period;
        for (k, wave) in jitter.waves.iter().enumerate() {
            // neighbouring beats contribute to the tails
            w[k] = [-period, 0.0, period]
                .iter()
                .map(|shift| {
                    let z = (local + shift - wave.offset) / wave.width;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * wave.amplitude
                * jitter.gain;
        }
    }
    for (lead, coeffs) in jitter.projection.iter().enumerate() {
        for (t, w) in waves_at.iter().enumerate() {
            out[[lead, t]] = coeffs[0] * w[0] + coeffs[1] * w[1] + coeffs[2] * w[2];
        }
    }
    out
}

/// One quantized 8-lead recording.
pub fn generate_recording(
    params: &SyntheticPatientParams,
    patient_id: u32,
    recording_seed: u64,
    n_samples: usize,
    rate_hz: u32,
) -> Result<EcgRecord, SynthError> {
    let jitter = recording_jitter(params, recording_seed);
    let mut volts = clean_signal(&jitter, n_samples, rate_hz);
    let mut rng = ChaCha8Rng::seed_from_u64(recording_seed);
    rng.set_stream(1);
    let noise = Normal::new(0.0, params.noise_volts).expect("non-negative std");
    let omega = std::f64::consts::TAU * params.drift_frequency_hz / rate_hz as f64;
    for (lead, mut row) in volts.rows_mut().into_iter().enumerate() {
        let lead_phase = jitter.drift_phase + lead as f64 * 0.7;
        for (t, v) in row.iter_mut().enumerate() {
            *v += params.drift_amplitude_volts * (omega * t as f64 + lead_phase).sin() + noise.sample(&mut rng);
        }
    }
    Ok(quantize(volts.view(), patient_id, rate_hz, DEFAULT_GRANULARITY_VOLTS)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub min_recordings: usize,
    pub max_recordings: usize,
    pub n_samples: usize,
    pub sample_rate_hz: u32,
    pub first_patient_id: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 200,
            min_recordings: 2,
            max_recordings: 6,
            n_samples: 4096,
            sample_rate_hz: 500,
            first_patient_id: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.min_recordings == 0 || self.min_recordings > self.max_recordings {
            return Err(SynthError::InvalidConfig("need 1 <= min_recordings <= max_recordings".into()));
        }
        if self.n_samples == 0 || self.sample_rate_hz == 0 {
            return Err(SynthError::InvalidConfig("n_samples and sample_rate_hz must be positive".into()));
        }
        if self.first_patient_id as u64 + self.n_patients as u64 > u32::MAX as u64 + 1 {
            return Err(SynthError::InvalidConfig("patient ids overflow u32".into()));
        }
        Ok(())
    }
}

/// Seeds of patient `index`: its parameter seed and its recording seeds.
pub fn patient_plan(cfg: &SynthConfig, index: usize) -> (u64, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let params_seed = rng.random();
    let count = rng.random_range(cfg.min_recordings..=cfg.max_recordings);
    (params_seed, (0..count).map(|_| rng.random()).collect())
}

/// Recording count of every patient, in patient order.
pub fn recording_counts(cfg: &SynthConfig) -> Vec<usize> {
    (0..cfg.n_patients).map(|i| patient_plan(cfg, i).1.len()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub container: DatasetContainer,
    pub patients: Vec<SyntheticPatientParams>,
}

impl SyntheticDataset {
    pub fn patient_id(&self, index: usize) -> u32 {
        self.container.records()[index].patient_id()
    }
}

/// Generates every patient and recording, then shuffles record order with
/// the dataset seed so that contiguous slices mix patients.
pub fn generate_dataset(cfg: &SynthConfig, exec: Exec) -> Result<SyntheticDataset, SynthError> {
    cfg.validate()?;
    let per_patient = exec.map_range(cfg.n_patients, |i| -> Result<_, SynthError> {
        let (params_seed, recording_seeds) = patient_plan(cfg, i);
        let params = generate_patient(params_seed);
        let id = cfg.first_patient_id + i as u32;
        let records = recording_seeds
            .iter()
            .map(|&s| generate_recording(&params, id, s, cfg.n_samples, cfg.sample_rate_hz))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((params, records))
    });
    let mut patients = Vec::with_capacity(cfg.n_patients);
    let mut records = Vec::new();
    for r in per_patient {
        let (p, recs) = r?;
        patients.push(p);
        records.extend(recs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    records.shuffle(&mut rng);
    let container = DatasetContainer::new(cfg.sample_rate_hz, cfg.n_samples, DEFAULT_GRANULARITY_VOLTS, records)?;
    Ok(SyntheticDataset { container, patients })
}

#[cfg(test)]
mod tests;

//! Per-lead filter chain applied in front of the embedding network:
//! baseline wander removal, high-frequency noise removal and z-scoring,
//! always in that order and each independently switchable.
//!
//! The wavelet (the orthogonal 4-tap symlet, periodized) and the
//! single-pass baseline estimate are fixed choices of this crate, not a
//! port of any particular reference implementation.

pub mod wavelet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecgstore::ModelInput;

const ZSCORE_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("lead of length {len} is too short for {levels} wavelet levels (need {needed})")]
    TooShort { len: usize, levels: usize, needed: usize },
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub apply_bwr: bool,
    pub apply_hfnr: bool,
    pub apply_norm: bool,
    /// Decomposition depth of the baseline estimate. At 500 Hz, 9 levels
    /// keep roughly the sub-0.5 Hz band.
    pub wavelet_levels: usize,
    pub hfnr_detail_levels: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { apply_bwr: false, apply_hfnr: true, apply_norm: true, wavelet_levels: 9, hfnr_detail_levels: 2 }
    }
}

impl PreprocessConfig {
    pub fn disabled() -> Self {
        Self { apply_bwr: false, apply_hfnr: false, apply_norm: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.wavelet_levels == 0 || self.hfnr_detail_levels == 0 {
            return Err(PreprocessError::InvalidConfig("wavelet levels must be positive".into()));
        }
        if self.hfnr_detail_levels > self.wavelet_levels {
            return Err(PreprocessError::InvalidConfig(format!(
                "hfnr_detail_levels ({}) exceeds wavelet_levels ({})",
                self.hfnr_detail_levels, self.wavelet_levels
            )));
        }
        Ok(())
    }
}

/// Detail-coefficient treatment inside [`remove_hf_noise_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Thresholding {
    /// Soft threshold at the universal threshold `sigma * sqrt(2 ln n)`.
    Universal,
    /// Leave coefficients untouched (the transform round trip only).
    Disabled,
}

fn check_len(len: usize, levels: usize) -> Result<(), PreprocessError> {
    let needed = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if len < needed {
        return Err(PreprocessError::TooShort { len, levels, needed });
    }
    Ok(())
}

/// Subtracts the level-`levels` wavelet approximation.
///
/// The least-squares line is removed before the periodized transform and
/// counted as part of the baseline, so linear drift disappears exactly and
/// the wrap-around sees no drift-sized jump.
pub fn remove_baseline_wander(lead: &[f64], levels: usize) -> Result<Vec<f64>, PreprocessError> {
    check_len(lead.len(), levels)?;
    let n = lead.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = lead.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (t, &v) in lead.iter().enumerate() {
        let dt = t as f64 - t_mean;
        cov += dt * (v - x_mean);
        var += dt * dt;
    }
    let slope = cov / var;
    let residual: Vec<f64> = lead.iter().enumerate().map(|(t, &v)| v - x_mean - slope * (t as f64 - t_mean)).collect();
    let mut dec = wavelet::decompose(&residual, levels);
    dec.details.iter_mut().for_each(|d| d.fill(0.0));
    let baseline = wavelet::reconstruct(&dec);
    Ok(residual.iter().zip(&baseline).map(|(r, b)| r - b).collect())
}

pub fn remove_hf_noise(lead: &[f64], detail_levels: usize) -> Result<Vec<f64>, PreprocessError> {
    remove_hf_noise_with(lead, detail_levels, Thresholding::Universal)
}

/// Soft-thresholds the `detail_levels` finest detail bands; the noise
/// level is estimated from the finest band as `median(|d|) / 0.6745`.
pub fn remove_hf_noise_with(
    lead: &[f64],
    detail_levels: usize,
    thresholding: Thresholding,
) -> Result<Vec<f64>, PreprocessError> {
    check_len(lead.len(), detail_levels)?;
    let mut dec = wavelet::decompose(lead, detail_levels);
    if thresholding == Thresholding::Universal {
        let sigma = median_abs(&dec.details[0]) / 0.6745;
        let lambda = sigma * (2.0 * (lead.len() as f64).ln()).sqrt();
        for band in dec.details.iter_mut() {
            for c in band.iter_mut() {
                *c = c.signum() * (c.abs() - lambda).max(0.0);
            }
        }
    }
    Ok(wavelet::reconstruct(&dec))
}

fn median_abs(values: &[f64]) -> f64 {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let n = abs.len();
    if n == 0 {
        return 0.0;
    }
    let (lower, &mut upper, _) = abs.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Population z-score; leads with standard deviation at most 1e-8 map to
/// all zeros.
pub fn normalize_zscore(lead: &[f64]) -> Vec<f64> {
    let n = lead.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = lead.iter().sum::<f64>() / n as f64;
    let var = lead.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std <= ZSCORE_EPS {
        return vec![0.0; n];
    }
    lead.iter().map(|v| (v - mean) / std).collect()
}

/// The configured chain for a single lead.
pub fn preprocess_lead(lead: &[f64], cfg: &PreprocessConfig) -> Result<Vec<f64>, PreprocessError> {
    cfg.validate()?;
    let mut x = lead.to_vec();
    if cfg.apply_bwr {
        x = remove_baseline_wander(&x, cfg.wavelet_levels)?;
    }
    if cfg.apply_hfnr {
        x = remove_hf_noise(&x, cfg.hfnr_detail_levels)?;
    }
    if cfg.apply_norm {
        x = normalize_zscore(&x);
    }
    Ok(x)
}

/// Applies the chain to each lead independently.
pub fn preprocess(input: &ModelInput, cfg: &PreprocessConfig) -> Result<ModelInput, PreprocessError> {
    let values = input.values();
    let mut out = Array2::zeros(values.dim());
    for (row_in, mut row_out) in values.rows().into_iter().zip(out.rows_mut()) {
        let lead: Vec<f64> = row_in.iter().copied().collect();
        let filtered = preprocess_lead(&lead, cfg)?;
        row_out.iter_mut().zip(filtered).for_each(|(o, v)| *o = v);
    }
    Ok(ModelInput::new(out).expect("shape is preserved"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecgstore::{MODEL_LEAD_COUNT, MODEL_SAMPLES};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const FS: f64 = 500.0;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn sine(freq: f64, amp: f64) -> Vec<f64> {
        (0..MODEL_SAMPLES).map(|t| amp * (2.0 * PI * freq * t as f64 / FS).sin()).collect()
    }

    #[test]
    fn zero_inputs_stay_zero() {
        let z = vec![0.0; 4096];
        assert!(remove_baseline_wander(&z, 9).unwrap().iter().all(|&v| v == 0.0));
        assert!(remove_hf_noise(&z, 2).unwrap().iter().all(|&v| v == 0.0));
        assert!(normalize_zscore(&z).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_inputs() {
        let err = remove_baseline_wander(&[1.0; 100], 9).unwrap_err();
        assert_eq!(err, PreprocessError::TooShort { len: 100, levels: 9, needed: 512 });
        assert!(remove_hf_noise(&[1.0; 3], 2).is_err());
    }

    #[test]
    fn slow_ramp_is_removed() {
        let ramp: Vec<f64> = (0..4096).map(|t| 2e-3 * t as f64 / 4095.0 - 1e-3).collect();
        let out = remove_baseline_wander(&ramp, 9).unwrap();
        let range = 2e-3;
        let worst = out.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(worst < 0.05 * range, "residual {worst}");
    }

    #[test]
    fn ramp_plus_sine_recovers_sine() {
        let clean = sine(25.0, 1e-3);
        let drift: Vec<f64> = (0..4096).map(|t| 3e-3 * t as f64 / 4096.0).collect();
        let noisy: Vec<f64> = clean.iter().zip(&drift).map(|(a, b)| a + b).collect();
        let out = remove_baseline_wander(&noisy, 9).unwrap();
        let err: Vec<f64> = out.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let rel = rms(&err) / rms(&clean);
        assert!(rel < 0.10, "relative error {rel}");
    }

    #[test]
    fn hf_noise_removal_improves_snr() {
        let clean = sine(5.0, 1.0);
        let signal_power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
        let noise_std = (signal_power / 10.0).sqrt(); // 10 dB
        let normal = Normal::new(0.0, noise_std).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noisy: Vec<f64> = clean.iter().map(|v| v + normal.sample(&mut rng)).collect();
        let snr = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&clean).map(|(a, b)| a - b).collect();
            10.0 * (signal_power / rms(&e).powi(2)).log10()
        };
        let before = snr(&noisy);
        let after = snr(&remove_hf_noise(&noisy, 2).unwrap());
        assert!(after - before >= 3.0, "snr {before:.2} -> {after:.2}");
    }

    #[test]
    fn hf_noise_removal_leaves_smooth_signal() {
        let clean: Vec<f64> = sine(1.2, 1.0).iter().zip(sine(3.0, 0.4)).map(|(a, b)| a + b).collect();
        let out = remove_hf_noise(&clean, 2).unwrap();
        let dev: Vec<f64> = out.iter().zip(&clean).map(|(a, b)| a - b).collect();
        assert!(rms(&dev) < 0.02 * rms(&clean));
    }

    #[test]
    fn zscore_cases() {
        assert_eq!(normalize_zscore(&[1.0, 3.0]), vec![-1.0, 1.0]);
        assert_eq!(normalize_zscore(&[5.0; 4]), vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..7.0)).collect();
        let z = normalize_zscore(&x);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-6);
    }

    fn random_input(seed: u64) -> ModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Array2::zeros((MODEL_LEAD_COUNT, MODEL_SAMPLES));
        for (lead, mut row) in v.rows_mut().into_iter().enumerate() {
            let drift = rng.random_range(-1e-3..1e-3);
            let f = rng.random_range(3.0..20.0);
            for (t, x) in row.iter_mut().enumerate() {
                *x = drift * t as f64 / 4096.0
                    + 1e-3 * (2.0 * PI * f * t as f64 / FS + lead as f64).sin()
                    + rng.random_range(-1e-4..1e-4);
            }
        }
        ModelInput::new(v).unwrap()
    }

    #[test]
    fn chain_configurations() {
        let input = random_input(5);
        assert_eq!(preprocess(&input, &PreprocessConfig::disabled()).unwrap(), input);

        let norm_only = PreprocessConfig { apply_norm: true, ..PreprocessConfig::disabled() };
        let out = preprocess(&input, &norm_only).unwrap();
        for row in out.values().rows() {
            let mean = row.sum() / row.len() as f64;
            assert!(mean.abs() < 1e-9);
        }

        let full = PreprocessConfig { apply_bwr: true, ..PreprocessConfig::default() };
        let out = preprocess(&input, &full).unwrap();
        assert_eq!(out.values().dim(), (12, 4096));
        for (lead, row) in input.values().rows().into_iter().enumerate() {
            let x: Vec<f64> = row.to_vec();
            let manual = normalize_zscore(&remove_hf_noise(&remove_baseline_wander(&x, 9).unwrap(), 2).unwrap());
            assert_eq!(out.values().row(lead).to_vec(), manual);
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = PreprocessConfig { hfnr_detail_levels: 10, ..PreprocessConfig::default() };
        assert!(matches!(cfg.validate(), Err(PreprocessError::InvalidConfig(_))));
    }

    #[test]
    fn leads_are_processed_independently() {
        let input = random_input(8);
        let cfg = PreprocessConfig { apply_bwr: true, ..PreprocessConfig::default() };
        let perm: Vec<usize> = vec![3, 0, 11, 5, 1, 2, 10, 4, 9, 6, 8, 7];
        let permute = |m: &Array2<f64>| Array2::from_shape_fn(m.dim(), |(r, c)| m[[perm[r], c]]);
        let a = preprocess(&ModelInput::new(permute(input.values())).unwrap(), &cfg).unwrap();
        let b = permute(preprocess(&input, &cfg).unwrap().values());
        assert_eq!(a.values(), &b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn zscore_scale_shift_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            for (p, q) in normalize_zscore(&x).iter().zip(normalize_zscore(&y)) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }

        #[test]
        fn wavelet_filters_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let bwr = |v: &[f64]| remove_baseline_wander(v, 6).unwrap();
            let hf = |v: &[f64]| remove_hf_noise_with(v, 2, Thresholding::Disabled).unwrap();
            for f in [&bwr as &dyn Fn(&[f64]) -> Vec<f64>, &hf] {
                let lhs = f(&mix);
                let (fx, fy) = (f(&x), f(&y));
                for i in 0..lhs.len() {
                    prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
                }
            }
        }
    }
}

use ndarray::{s, Array2, ArrayView2};
use num_traits::Zero;

use super::{EcgRecord, StoreError};

/// Converts stored quanta to volts.
pub fn dequantize(record: &EcgRecord) -> Array2<f64> {
    let g = record.granularity_volts() as f64;
    record.leads().mapv(|q| q as f64 * g)
}

/// Rounds volts to the nearest quantum, saturating at the `i16` range.
pub fn quantize(
    volts: ArrayView2<f64>,
    patient_id: u32,
    sample_rate_hz: u32,
    granularity_volts: f32,
) -> Result<EcgRecord, StoreError> {
    if !(granularity_volts.is_finite() && granularity_volts > 0.0) {
        return Err(StoreError::Granularity(granularity_volts));
    }
    let g = granularity_volts as f64;
    let leads = volts.mapv(|v| (v / g).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16);
    EcgRecord::new(patient_id, sample_rate_hz, granularity_volts, leads)
}

/// Truncates or zero-pads every row to `target_len`, splitting the
/// difference between both ends. Odd differences put the extra sample at
/// the back.
pub fn fit_length<A: Clone + Zero>(signal: ArrayView2<A>, target_len: usize) -> Result<Array2<A>, StoreError> {
    if target_len == 0 {
        return Err(StoreError::TargetLength);
    }
    let n = signal.ncols();
    if n == target_len {
        return Ok(signal.to_owned());
    }
    if n > target_len {
        let front = (n - target_len) / 2;
        return Ok(signal.slice(s![.., front..front + target_len]).to_owned());
    }
    let front = (target_len - n) / 2;
    let mut out = Array2::zeros((signal.nrows(), target_len));
    out.slice_mut(s![.., front..front + n]).assign(&signal);
    Ok(out)
}

/// Changes the sample rate of every row.
///
/// Integer-factor downsampling applies a zero-phase moving average over
/// the decimation factor before decimating (for even factors the window
/// has `factor + 1` taps with half-weight ends so it stays centred; rows
/// are extended past their ends by point reflection). All
/// other ratios use linear interpolation. The output has
/// `round(n * to_hz / from_hz)` samples.
pub fn resample(signal: ArrayView2<f64>, from_hz: u32, to_hz: u32) -> Result<Array2<f64>, StoreError> {
    if from_hz == 0 || to_hz == 0 {
        return Err(StoreError::SampleRate { from_hz, to_hz });
    }
    if from_hz == to_hz {
        return Ok(signal.to_owned());
    }
    let n = signal.ncols();
    let out_len = ((n as u64 * to_hz as u64) as f64 / from_hz as f64).round() as usize;
    let mut out = Array2::zeros((signal.nrows(), out_len));
    if n == 0 || out_len == 0 {
        return Ok(out);
    }
    if from_hz.is_multiple_of(to_hz) {
        let factor = (from_hz / to_hz) as usize;
        let taps = averaging_taps(factor);
        let half = (taps.len() / 2) as isize;
        let total: f64 = taps.iter().sum();
        for (row_in, mut row_out) in signal.rows().into_iter().zip(out.rows_mut()) {
            let row_buf = row_in.to_vec();
            for (i, o) in row_out.iter_mut().enumerate() {
                let centre = (i * factor) as isize;
                let mut acc = 0.0;
                for (k, w) in taps.iter().enumerate() {
                    acc += w * point_reflect(&row_buf, centre + k as isize - half);
                }
                *o = acc / total;
            }
        }
    } else {
        let step = from_hz as f64 / to_hz as f64;
        for (row_in, mut row_out) in signal.rows().into_iter().zip(out.rows_mut()) {
            for (i, o) in row_out.iter_mut().enumerate() {
                let pos = (i as f64 * step).min((n - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                let frac = pos - lo as f64;
                *o = row_in[lo] * (1.0 - frac) + row_in[hi] * frac;
            }
        }
    }
    Ok(out)
}

/// Sample at `t`, extending the row past its ends by point reflection
/// (`x[-t] = 2 x[0] - x[t]`), which keeps local linear trends intact.
fn point_reflect(row: &[f64], t: isize) -> f64 {
    let n = row.len() as isize;
    let idx = |i: isize| row[i.clamp(0, n - 1) as usize];
    if t < 0 {
        2.0 * row[0] - idx(-t)
    } else if t >= n {
        2.0 * row[(n - 1) as usize] - idx(2 * (n - 1) - t)
    } else {
        row[t as usize]
    }
}

fn averaging_taps(factor: usize) -> Vec<f64> {
    if factor % 2 == 1 {
        vec![1.0; factor]
    } else {
        let mut taps = vec![1.0; factor + 1];
        taps[0] = 0.5;
        taps[factor] = 0.5;
        taps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn record(leads: Array2<i16>) -> EcgRecord {
        EcgRecord::new(7, 500, 4.88e-6, leads).unwrap()
    }

    #[test]
    fn dequantize_scales_by_granularity() {
        let mut leads = Array2::zeros((8, 2));
        leads[[0, 1]] = 1000;
        let v = dequantize(&record(leads));
        assert_eq!(v[[0, 0]], 0.0);
        assert!((v[[0, 1]] - 4.88e-3).abs() < 1e-9);
    }

    #[test]
    fn quantize_inverts_dequantize() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let leads = Array2::from_shape_fn((8, 4096), |_| rng.random::<i16>());
        let rec = record(leads);
        let back = quantize(dequantize(&rec).view(), 7, 500, 4.88e-6).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn quantize_saturates() {
        let v = Array2::from_elem((8, 1), 1.0);
        let rec = quantize(v.view(), 1, 500, 4.88e-6).unwrap();
        assert!(rec.leads().iter().all(|&q| q == i16::MAX));
    }

    #[test]
    fn fit_length_cases() {
        let same = Array2::from_shape_fn((2, 4096), |(r, c)| (r + c) as f64);
        assert_eq!(fit_length(same.view(), 4096).unwrap(), same);

        let long = Array2::from_shape_fn((1, 10), |(_, c)| (c + 1) as i32);
        assert_eq!(fit_length(long.view(), 6).unwrap(), array![[3, 4, 5, 6, 7, 8]]);

        let short = array![[1, 2, 3, 4]];
        assert_eq!(fit_length(short.view(), 8).unwrap(), array![[0, 0, 1, 2, 3, 4, 0, 0]]);

        // odd differences: extra sample removed from / added to the back
        let odd = array![[1, 2, 3, 4, 5]];
        assert_eq!(fit_length(odd.view(), 2).unwrap(), array![[2, 3]]);
        assert_eq!(fit_length(odd.view(), 8).unwrap(), array![[0, 1, 2, 3, 4, 5, 0, 0]]);

        assert_eq!(fit_length(odd.view(), 0).unwrap_err(), StoreError::TargetLength);
    }

    proptest! {
        #[test]
        fn fit_length_idempotent(len in 1usize..200, target in 1usize..200) {
            let x = Array2::from_shape_fn((3, len), |(r, c)| (r * 1000 + c) as i64);
            let once = fit_length(x.view(), target).unwrap();
            let twice = fit_length(once.view(), target).unwrap();
            prop_assert_eq!(once.ncols(), target);
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn resample_identity_and_constant() {
        let x = Array2::from_shape_fn((2, 100), |(r, c)| (r * c) as f64);
        assert_eq!(resample(x.view(), 500, 500).unwrap(), x);

        let c = Array2::from_elem((3, 1000), 2.5);
        let down = resample(c.view(), 1000, 500).unwrap();
        assert_eq!(down.ncols(), 500);
        assert!(down.iter().all(|&v| (v - 2.5).abs() < 1e-12));

        let odd = resample(c.view(), 1000, 400).unwrap();
        assert_eq!(odd.ncols(), 400);
        assert!(odd.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn resample_sine_matches_analytic_samples() {
        let sine = Array2::from_shape_fn((1, 4000), |(_, t)| (2.0 * PI * 10.0 * t as f64 / 1000.0).sin());
        let down = resample(sine.view(), 1000, 500).unwrap();
        assert_eq!(down.ncols(), 2000);
        let mut peak: f64 = 0.0;
        for (i, &v) in down.row(0).iter().enumerate() {
            let expected = (2.0 * PI * 10.0 * i as f64 / 500.0).sin();
            assert!((v - expected).abs() < 0.01, "sample {i}: {v} vs {expected}");
            peak = peak.max(v.abs());
        }
        assert!((peak - 1.0).abs() < 0.01);
    }

    #[test]
    fn resample_rejects_zero_rate() {
        let x = Array2::<f64>::zeros((1, 4));
        assert!(resample(x.view(), 0, 500).is_err());
    }
}

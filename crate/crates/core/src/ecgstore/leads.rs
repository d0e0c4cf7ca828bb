use ndarray::{s, Array2, ArrayView2};

use super::{StoreError, MODEL_LEAD_COUNT, STORED_LEAD_COUNT};

/// Expands stored leads (I, II, V1..V6) to the 12-lead order
/// I, II, III, aVR, aVL, aVF, V1..V6 using the Einthoven and Goldberger
/// relations.
pub fn expand_leads(stored: ArrayView2<f64>) -> Result<Array2<f64>, StoreError> {
    if stored.nrows() != STORED_LEAD_COUNT {
        return Err(StoreError::LeadCount { expected: STORED_LEAD_COUNT, found: stored.nrows() });
    }
    let n = stored.ncols();
    let mut out = Array2::zeros((MODEL_LEAD_COUNT, n));
    let lead_i = stored.row(0);
    let lead_ii = stored.row(1);
    out.row_mut(0).assign(&lead_i);
    out.row_mut(1).assign(&lead_ii);
    for t in 0..n {
        let (a, b) = (lead_i[t], lead_ii[t]);
        out[[2, t]] = b - a;
        out[[3, t]] = -(a + b) / 2.0;
        out[[4, t]] = a - b / 2.0;
        out[[5, t]] = b - a / 2.0;
    }
    out.slice_mut(s![6.., ..]).assign(&stored.slice(s![2.., ..]));
    Ok(out)
}

/// Drops the derived leads (III, aVR, aVL, aVF) from a 12-lead matrix.
pub fn reduce_leads(full: ArrayView2<f64>) -> Result<Array2<f64>, StoreError> {
    if full.nrows() != MODEL_LEAD_COUNT {
        return Err(StoreError::LeadCount { expected: MODEL_LEAD_COUNT, found: full.nrows() });
    }
    let mut out = Array2::zeros((STORED_LEAD_COUNT, full.ncols()));
    out.slice_mut(s![0..2, ..]).assign(&full.slice(s![0..2, ..]));
    out.slice_mut(s![2.., ..]).assign(&full.slice(s![6.., ..]));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_in_zero_out() {
        let out = expand_leads(Array2::zeros((8, 16)).view()).unwrap();
        assert_eq!(out.dim(), (12, 16));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_limb_leads() {
        let mut x = Array2::zeros((8, 5));
        x.row_mut(0).fill(1.0);
        x.row_mut(1).fill(3.0);
        let out = expand_leads(x.view()).unwrap();
        for t in 0..5 {
            assert_eq!(out[[2, t]], 2.0);
            assert_eq!(out[[3, t]], -2.0);
            assert_eq!(out[[4, t]], -0.5);
            assert_eq!(out[[5, t]], 2.5);
        }
    }

    #[test]
    fn lead_three_matches_per_sample_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((8, 4096), |_| rng.random::<i16>() as f64);
        let out = expand_leads(x.view()).unwrap();
        for t in 0..4096 {
            assert_eq!(out[[2, t]], x[[1, t]] - x[[0, t]]);
        }
        assert_eq!(out.row(8), x.row(4));
    }

    #[test]
    fn wrong_row_count() {
        let err = expand_leads(Array2::zeros((12, 4)).view()).unwrap_err();
        assert_eq!(err, StoreError::LeadCount { expected: 8, found: 12 });
    }

    #[test]
    fn reduce_inverts_expand() {
        let x = Array2::from_shape_fn((8, 7), |(r, c)| (r * 7 + c) as f64);
        let back = reduce_leads(expand_leads(x.view()).unwrap().view()).unwrap();
        assert_eq!(back, x);
    }

    proptest! {
        #[test]
        fn expansion_is_linear(seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((8, 32), |_| rng.random_range(-1.0..1.0));
            let y = Array2::from_shape_fn((8, 32), |_| rng.random_range(-1.0..1.0));
            let lhs = expand_leads((&x * a + &y * b).view()).unwrap();
            let rhs = expand_leads(x.view()).unwrap() * a + expand_leads(y.view()).unwrap() * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()));
            }
        }

        #[test]
        fn augmented_leads_sum_to_zero(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((8, 64), |_| rng.random_range(-1e-3..1e-3));
            let out = expand_leads(x.view()).unwrap();
            for t in 0..64 {
                let sum = out[[3, t]] + out[[4, t]] + out[[5, t]];
                let scale = out[[3, t]].abs() + out[[4, t]].abs() + out[[5, t]].abs();
                prop_assert!(sum.abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE));
            }
        }
    }
}

//! Periodized orthogonal discrete wavelet transform with the 4-tap
//! symlet (`sym2`, coefficients shared with `db2`).
//!
//! The filter bank is orthonormal, so the transform preserves energy and
//! deep cascades stay well conditioned. The high-pass has two vanishing
//! moments: detail coefficients are zero on linear segments away from the
//! wrap-around.

const LO: [f64; 4] =
    [0.482_962_913_144_690_25, 0.836_516_303_737_469, 0.224_143_868_041_857_35, -0.129_409_522_550_921_45];
const HI: [f64; 4] = [LO[3], -LO[2], LO[1], -LO[0]];

/// Multi-level decomposition. `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    /// Signal length before each level (odd lengths are extended by one
    /// repeated sample and cut back on reconstruction).
    lengths: Vec<usize>,
}

fn analysis_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    debug_assert!(n.is_multiple_of(2) && n >= 2);
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    let at = |i: usize| if i < n { x[i] } else { x[i % n] };
    for k in 0..half {
        let i = 2 * k;
        let v = if i + 3 < n { [x[i], x[i + 1], x[i + 2], x[i + 3]] } else { [at(i), at(i + 1), at(i + 2), at(i + 3)] };
        a[k] = LO[0] * v[0] + LO[1] * v[1] + LO[2] * v[2] + LO[3] * v[3];
        d[k] = HI[0] * v[0] + HI[1] * v[1] + HI[2] * v[2] + HI[3] * v[3];
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for tap in 0..4 {
            let i = 2 * k + tap;
            x[if i < n { i } else { i % n }] += a[k] * LO[tap] + d[k] * HI[tap];
        }
    }
    x
}

/// Decomposes `x` into `levels` detail bands plus an approximation.
/// Caller guarantees `x.len() >= 2^levels`.
pub fn decompose(x: &[f64], levels: usize) -> Decomposition {
    let mut current = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        lengths.push(current.len());
        if current.len() % 2 == 1 {
            current.push(*current.last().unwrap());
        }
        let (a, d) = analysis_step(&current);
        details.push(d);
        current = a;
    }
    Decomposition { approx: current, details, lengths }
}

pub fn reconstruct(dec: &Decomposition) -> Vec<f64> {
    let mut current = dec.approx.clone();
    for (d, &len) in dec.details.iter().zip(&dec.lengths).rev() {
        current = synthesis_step(&current, d);
        current.truncate(len);
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(len, levels) in &[(4096usize, 9usize), (64, 3), (1000, 4), (37, 2), (2, 1)] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = reconstruct(&decompose(&x, levels));
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "len {len} levels {levels}: {err}");
        }
    }

    #[test]
    fn details_vanish_on_lines() {
        let x: Vec<f64> = (0..256).map(|t| 0.5 + 0.01 * t as f64).collect();
        let (_, d) = analysis_step(&x);
        // everything except the wrapped tail coefficient
        for &v in &d[..d.len() - 1] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn transform_preserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dec = decompose(&x, 6);
        let energy = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>();
        let coeffs = energy(&dec.approx) + dec.details.iter().map(|d| energy(d)).sum::<f64>();
        assert!((coeffs - energy(&x)).abs() < 1e-9 * energy(&x));
    }
}

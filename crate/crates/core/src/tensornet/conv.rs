//! 1D cross-correlation kernels (im2col + GEMM).
//!
//! Padding always totals `dilation * (k - 1)` samples, with the larger
//! half on the left, so stride-1 outputs keep the input length and
//! `L_out = floor((L - 1) / stride) + 1`.

use serde::{Deserialize, Serialize};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Zeros,
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn new(stride: usize, dilation: usize, padding: Padding) -> Self {
        Self { stride, dilation, padding }
    }

    pub fn circular(dilation: usize) -> Self {
        Self::new(1, dilation, Padding::Circular)
    }

    /// `(left, right)` padding for kernel size `k`.
    pub fn pads(&self, k: usize) -> (usize, usize) {
        let total = self.dilation * (k.saturating_sub(1));
        (total - total / 2, total / 2)
    }

    pub fn output_len(&self, len: usize, k: usize) -> usize {
        let total = self.dilation * (k.saturating_sub(1));
        (len + total - self.dilation * (k - 1) - 1) / self.stride + 1
    }
}

/// Source index in the unpadded input for output position `t`, tap `kk`.
#[inline]
fn source(t: usize, kk: usize, left: usize, len: usize, spec: &ConvSpec) -> Option<usize> {
    let pos = (t * spec.stride + kk * spec.dilation) as isize - left as isize;
    match spec.padding {
        Padding::Circular => Some(pos.rem_euclid(len as isize) as usize),
        Padding::Zeros => (pos >= 0 && (pos as usize) < len).then_some(pos as usize),
    }
}

/// Builds the `(c_in * k, l_out)` matrix of shifted input rows (row
/// `ci * k + kk`) by appending, so the buffer is never zero-filled first.
pub(crate) fn im2col<T: Scalar>(x: &[T], c_in: usize, len: usize, k: usize, spec: &ConvSpec, l_out: usize) -> Vec<T> {
    let (left, _) = spec.pads(k);
    let mut cols = Vec::with_capacity(c_in * k * l_out);
    for ci in 0..c_in {
        let xr = &x[ci * len..(ci + 1) * len];
        for kk in 0..k {
            if spec.stride != 1 {
                cols.extend((0..l_out).map(|t| source(t, kk, left, len, spec).map_or(T::zero(), |s| xr[s])));
                continue;
            }
            let offset = (kk * spec.dilation) as isize - left as isize;
            match spec.padding {
                Padding::Circular => {
                    let mut src = offset.rem_euclid(len as isize) as usize;
                    let mut t = 0;
                    while t < l_out {
                        let run = (l_out - t).min(len - src);
                        cols.extend_from_slice(&xr[src..src + run]);
                        t += run;
                        src = 0;
                    }
                }
                Padding::Zeros => {
                    let t0 = (-offset).clamp(0, l_out as isize) as usize;
                    let t1 = (len as isize - offset).clamp(t0 as isize, l_out as isize) as usize;
                    cols.resize(cols.len() + t0, T::zero());
                    if t1 > t0 {
                        let s0 = (t0 as isize + offset) as usize;
                        cols.extend_from_slice(&xr[s0..s0 + (t1 - t0)]);
                    }
                    cols.resize(cols.len() + (l_out - t1), T::zero());
                }
            }
        }
    }
    debug_assert_eq!(cols.len(), c_in * k * l_out);
    cols
}

/// Scatters column gradients back onto the input gradient.
pub(crate) fn col2im_add<T: Scalar>(
    gcols: &[T],
    c_in: usize,
    len: usize,
    k: usize,
    spec: &ConvSpec,
    l_out: usize,
    gx: &mut [T],
) {
    let (left, _) = spec.pads(k);
    for ci in 0..c_in {
        let gr = &mut gx[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let row = &gcols[(ci * k + kk) * l_out..(ci * k + kk + 1) * l_out];
            if spec.stride == 1 && spec.padding == Padding::Circular {
                let offset = (kk * spec.dilation) as isize - left as isize;
                let mut src = offset.rem_euclid(len as isize) as usize;
                let mut t = 0;
                while t < l_out {
                    let run = (l_out - t).min(len - src);
                    for (g, &r) in gr[src..src + run].iter_mut().zip(&row[t..t + run]) {
                        *g += r;
                    }
                    t += run;
                    src = 0;
                }
                continue;
            }
            for (t, &r) in row.iter().enumerate() {
                if let Some(s) = source(t, kk, left, len, spec) {
                    gr[s] += r;
                }
            }
        }
    }
}

/// Forward pass. `weight` is `(c_out, c_in, k)`, `x` is `(c_in, len)`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward<T: Scalar>(
    x: &[T],
    c_in: usize,
    len: usize,
    weight: &[T],
    c_out: usize,
    k: usize,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Vec<T> {
    let l_out = spec.output_len(len, k);
    let ck = c_in * k;
    // Start from the broadcast bias and accumulate the product onto it.
    let mut out = Vec::with_capacity(c_out * l_out);
    for co in 0..c_out {
        out.resize((co + 1) * l_out, bias.map_or(T::zero(), |b| b[co]));
    }
    if k == 1 && spec.stride == 1 {
        T::gemm(c_out, ck, l_out, weight, (ck, 1), x, (l_out, 1), T::one(), &mut out);
    } else {
        let cols = im2col(x, c_in, len, k, spec, l_out);
        T::gemm(c_out, ck, l_out, weight, (ck, 1), &cols, (l_out, 1), T::one(), &mut out);
    }
    out
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Scalar>(
    x: &[T],
    c_in: usize,
    len: usize,
    weight: &[T],
    c_out: usize,
    k: usize,
    spec: &ConvSpec,
    grad_out: &[T],
    need_input_grad: bool,
) -> ConvGrads<T> {
    let l_out = spec.output_len(len, k);
    let ck = c_in * k;
    let direct = k == 1 && spec.stride == 1;
    let cols_buf;
    let cols: &[T] = if direct {
        x
    } else {
        cols_buf = im2col(x, c_in, len, k, spec, l_out);
        &cols_buf
    };
    let mut gw = vec![T::zero(); c_out * ck];
    T::gemm(c_out, l_out, ck, grad_out, (l_out, 1), cols, (1, l_out), T::zero(), &mut gw);
    let gb = grad_out.chunks_exact(l_out).map(|r| r.iter().copied().sum()).collect();
    let input = need_input_grad.then(|| {
        let mut gcols = vec![T::zero(); ck * l_out];
        T::gemm(ck, c_out, l_out, weight, (1, ck), grad_out, (l_out, 1), T::zero(), &mut gcols);
        if direct {
            gcols
        } else {
            let mut gx = vec![T::zero(); c_in * len];
            col2im_add(&gcols, c_in, len, k, spec, l_out, &mut gx);
            gx
        }
    });
    ConvGrads { input, weight: gw, bias: gb }
}

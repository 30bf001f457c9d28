//! Numeric kernels shared by the autodiff graph and the inference path.

use super::mask::MaskKind;
use super::scalar::Scalar;

/// Additive surrogate for minus infinity applied to masked attention
/// logits. After max-subtraction its exponential underflows to exactly 0.
pub const MASK_VALUE: f64 = -1e9;

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Strided matrix view into a flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct View {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn dense(rows: usize, cols: usize) -> Self {
        Self {
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    /// Column block `[col, col+cols)` of rows `[row, row+rows)` within a
    /// dense matrix of width `width`.
    pub fn block(width: usize, row: usize, rows: usize, col: usize, cols: usize) -> Self {
        Self {
            offset: row * width + col,
            rows,
            cols,
            rs: width,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            offset: self.offset,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn fits(&self, len: usize) -> bool {
        if self.rows == 0 || self.cols == 0 {
            return true;
        }
        self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < len
    }
}

/// `c = alpha * a @ b + beta * c` over strided views.
pub fn gemm<T: Scalar>(alpha: T, a: &[T], av: View, b: &[T], bv: View, beta: T, c: &mut [T], cv: View) {
    assert_eq!(av.cols, bv.rows, "gemm inner dimension");
    assert_eq!((cv.rows, cv.cols), (av.rows, bv.cols), "gemm output shape");
    assert!(av.fits(a.len()) && bv.fits(b.len()) && cv.fits(c.len()), "gemm view out of bounds");
    if cv.rows == 0 || cv.cols == 0 {
        return;
    }
    if av.cols == 0 {
        for i in 0..cv.rows {
            for j in 0..cv.cols {
                let x = &mut c[cv.offset + i * cv.rs + j * cv.cs];
                *x = if beta == T::zero() { T::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked above and `c` is a
    // unique borrow, so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            av.rows,
            av.cols,
            bv.cols,
            alpha,
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// Dense `[m,k] @ [k,n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm(T::one(), a, View::dense(m, k), b, View::dense(k, n), T::zero(), &mut c, View::dense(m, n));
    c
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = sum.recip();
    for x in row.iter_mut() {
        *x *= inv;
    }
}

pub fn log_softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    row.iter().map(|&x| x - lse).collect()
}

/// Row-wise layer normalization; returns the normalized (pre-affine)
/// values and per-row reciprocal standard deviations.
pub fn layer_norm_rows<T: Scalar>(x: &[T], cols: usize, gain: &[T], bias: &[T], out: &mut [T]) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / cols;
    let n = T::of(cols as f64);
    let eps = T::of(LAYER_NORM_EPS);
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let s = (var + eps).sqrt().recip();
        rstd[r] = s;
        for c in 0..cols {
            let h = (row[c] - mean) * s;
            xhat[r * cols + c] = h;
            out[r * cols + c] = h * gain[c] + bias[c];
        }
    }
    (xhat, rstd)
}

/// One attention problem inside a packed batch: query rows
/// `[q_start, q_start+q_len)` attend over key rows `[k_start, k_start+k_len)`.
/// `q_offset` is the absolute position of the first query row, used when
/// evaluating the mask (non-zero for incremental decoding). Each query row
/// belongs to at most one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttnSegment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
    pub q_offset: usize,
    pub mask: MaskKind,
}

impl AttnSegment {
    pub fn square(start: usize, len: usize, mask: MaskKind) -> Self {
        Self {
            q_start: start,
            q_len: len,
            k_start: start,
            k_len: len,
            q_offset: 0,
            mask,
        }
    }

    pub fn cross(q_start: usize, q_len: usize, k_start: usize, k_len: usize) -> Self {
        Self {
            q_start,
            q_len,
            k_start,
            k_len,
            q_offset: 0,
            mask: MaskKind::Full,
        }
    }

    fn probs_len(&self) -> usize {
        self.q_len * self.k_len
    }
}

/// Multi-head scaled dot-product attention over already-projected queries,
/// keys and values (all `[rows, dim]`). Writes concatenated head outputs
/// into `out` and, when requested, the attention weights (per segment, per
/// head, row-major `[q_len, k_len]`) into `probs`.
#[allow(clippy::too_many_arguments)]
pub fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    dim: usize,
    heads: usize,
    segments: &[AttnSegment],
    out: &mut [T],
    mut probs: Option<&mut Vec<T>>,
) {
    let dh = dim / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut scratch: Vec<T> = Vec::new();
    for seg in segments {
        let n = seg.probs_len();
        for h in 0..heads {
            scratch.clear();
            scratch.resize(n, T::zero());
            let qv = View::block(dim, seg.q_start, seg.q_len, h * dh, dh);
            let kv = View::block(dim, seg.k_start, seg.k_len, h * dh, dh);
            let sv = View::dense(seg.q_len, seg.k_len);
            gemm(scale, q, qv, k, kv.t(), T::zero(), &mut scratch, sv);
            masked_softmax(&mut scratch, seg);
            let vv = View::block(dim, seg.k_start, seg.k_len, h * dh, dh);
            let ov = View::block(dim, seg.q_start, seg.q_len, h * dh, dh);
            gemm(T::one(), &scratch, sv, v, vv, T::zero(), out, ov);
            if let Some(p) = probs.as_deref_mut() {
                p.extend_from_slice(&scratch);
            }
        }
    }
}

fn masked_softmax<T: Scalar>(scores: &mut [T], seg: &AttnSegment) {
    let cols = seg.k_len;
    let masked = T::of(MASK_VALUE);
    for (r, row) in scores.chunks_mut(cols).enumerate() {
        if !seg.mask.is_full() {
            let i = seg.q_offset + r;
            for (j, x) in row.iter_mut().enumerate() {
                if !seg.mask.allows(i, j) {
                    *x += masked;
                }
            }
        }
        softmax_in_place(row);
    }
}

/// Gradients of [`attention_forward`]; accumulates into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    dim: usize,
    heads: usize,
    segments: &[AttnSegment],
    probs: &[T],
    dout: &[T],
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let dh = dim / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut offset = 0;
    let mut dp: Vec<T> = Vec::new();
    for seg in segments {
        let n = seg.probs_len();
        for h in 0..heads {
            let p = &probs[offset..offset + n];
            offset += n;
            let sv = View::dense(seg.q_len, seg.k_len);
            let qv = View::block(dim, seg.q_start, seg.q_len, h * dh, dh);
            let kv = View::block(dim, seg.k_start, seg.k_len, h * dh, dh);
            let ov = qv;
            dp.clear();
            dp.resize(n, T::zero());
            // dP = dOut V^T ; dV += P^T dOut
            gemm(T::one(), dout, ov, v, kv.t(), T::zero(), &mut dp, sv);
            gemm(T::one(), p, sv.t(), dout, ov, T::one(), dv, kv);
            // dS = P * (dP - rowsum(dP * P))
            for (prow, drow) in p.chunks(seg.k_len).zip(dp.chunks_mut(seg.k_len)) {
                let dot: T = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                for (d, &pp) in drow.iter_mut().zip(prow) {
                    *d = pp * (*d - dot);
                }
            }
            gemm(scale, &dp, sv, k, kv, T::one(), dq, qv);
            gemm(scale, &dp, sv.t(), q, qv, T::one(), dk, kv);
        }
    }
}

/// Sinusoidal position table `[length, dim]`: even columns hold
/// `sin(pos / 10000^(2i/dim))`, odd columns the matching cosine.
pub fn sinusoid_table<T: Scalar>(length: usize, dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); length * dim];
    for pos in 0..length {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            out[pos * dim + 2 * i] = T::of(angle.sin());
            out[pos * dim + 2 * i + 1] = T::of(angle.cos());
        }
    }
    out
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

//! Slice-level convolution kernels.
//!
//! All three convolutions are "valid", stride 1, and cross-correlate (the
//! kernel is not flipped). Each is lowered to one GEMM per sample:
//!
//! * temporal: `[K, m] x [m, C*T']` over an im2col of every channel
//! * spatial: `[K', K*C] x [K*C, T']` directly on the input maps
//! * spatiotemporal: `[K, C*m] x [C*m, T']` over an im2col of the trial

use super::scalar::{gemm, Scalar};

/// Geometry shared by the temporal and spatiotemporal kernels.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub channels: usize,
    pub times: usize,
    pub kernels: usize,
    pub kernel_len: usize,
}

impl ConvDims {
    pub fn out_times(&self) -> usize {
        self.times - self.kernel_len + 1
    }
}

/// `col[tau, c*T' + t] = x[c, t + tau]`
fn im2col_temporal<T: Scalar>(x: &[T], d: &ConvDims, col: &mut [T]) {
    let to = d.out_times();
    let row = d.channels * to;
    for tau in 0..d.kernel_len {
        for c in 0..d.channels {
            let src = &x[c * d.times + tau..c * d.times + tau + to];
            col[tau * row + c * to..tau * row + (c + 1) * to].copy_from_slice(src);
        }
    }
}

fn col2im_temporal<T: Scalar>(col: &[T], d: &ConvDims, dx: &mut [T]) {
    let to = d.out_times();
    let row = d.channels * to;
    for tau in 0..d.kernel_len {
        for c in 0..d.channels {
            let src = &col[tau * row + c * to..tau * row + (c + 1) * to];
            let dst = &mut dx[c * d.times + tau..c * d.times + tau + to];
            dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
        }
    }
}

/// `col[c*m + tau, t] = x[c, t + tau]`
fn im2col_st<T: Scalar>(x: &[T], d: &ConvDims, col: &mut [T]) {
    let to = d.out_times();
    for c in 0..d.channels {
        for tau in 0..d.kernel_len {
            let r = c * d.kernel_len + tau;
            col[r * to..(r + 1) * to].copy_from_slice(&x[c * d.times + tau..c * d.times + tau + to]);
        }
    }
}

fn col2im_st<T: Scalar>(col: &[T], d: &ConvDims, dx: &mut [T]) {
    let to = d.out_times();
    for c in 0..d.channels {
        for tau in 0..d.kernel_len {
            let r = c * d.kernel_len + tau;
            let dst = &mut dx[c * d.times + tau..c * d.times + tau + to];
            dst.iter_mut()
                .zip(&col[r * to..(r + 1) * to])
                .for_each(|(a, &b)| *a += b);
        }
    }
}

fn fill_bias<T: Scalar>(out: &mut [T], bias: &[T], run: usize) {
    for (k, &b) in bias.iter().enumerate() {
        out[k * run..(k + 1) * run].iter_mut().for_each(|v| *v = b);
    }
}

fn accumulate_bias_grad<T: Scalar>(dout: &[T], run: usize, db: &mut [T]) {
    for (k, g) in db.iter_mut().enumerate() {
        *g += dout[k * run..(k + 1) * run].iter().copied().sum::<T>();
    }
}

/// x `[B,1,C,T]`, w `[K,1,1,m]`, b `[K]` -> out `[B,K,C,T']`.
pub(crate) fn temporal_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], d: &ConvDims) -> Vec<T> {
    let to = d.out_times();
    let run = d.channels * to;
    let per_out = d.kernels * run;
    let mut out = vec![T::zero(); d.batch * per_out];
    let mut col = vec![T::zero(); d.kernel_len * run];
    for s in 0..d.batch {
        let xs = &x[s * d.channels * d.times..(s + 1) * d.channels * d.times];
        im2col_temporal(xs, d, &mut col);
        let os = &mut out[s * per_out..(s + 1) * per_out];
        fill_bias(os, b, run);
        gemm(d.kernels, d.kernel_len, run, T::one(), w, (d.kernel_len, 1), &col, (run, 1), T::one(), os, (run, 1));
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

pub(crate) fn temporal_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dout: &[T],
    d: &ConvDims,
    need_dx: bool,
) -> ConvGrads<T> {
    let to = d.out_times();
    let run = d.channels * to;
    let per_out = d.kernels * run;
    let per_in = d.channels * d.times;
    let mut dw = vec![T::zero(); d.kernels * d.kernel_len];
    let mut db = vec![T::zero(); d.kernels];
    let mut dx = need_dx.then(|| vec![T::zero(); d.batch * per_in]);
    let mut col = vec![T::zero(); d.kernel_len * run];
    for s in 0..d.batch {
        let xs = &x[s * per_in..(s + 1) * per_in];
        let ds = &dout[s * per_out..(s + 1) * per_out];
        im2col_temporal(xs, d, &mut col);
        // dw[K,m] += dout[K,run] . col^T[run,m]
        gemm(d.kernels, run, d.kernel_len, T::one(), ds, (run, 1), &col, (1, run), T::one(), &mut dw, (d.kernel_len, 1));
        accumulate_bias_grad(ds, run, &mut db);
        if let Some(dx) = dx.as_mut() {
            // dcol[m,run] = w^T[m,K] . dout[K,run]
            gemm(d.kernel_len, d.kernels, run, T::one(), w, (1, d.kernel_len), ds, (run, 1), T::zero(), &mut col, (run, 1));
            col2im_temporal(&col, d, &mut dx[s * per_in..(s + 1) * per_in]);
        }
    }
    ConvGrads { dx, dw, db }
}

/// Geometry of the spatial convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SpatialDims {
    pub batch: usize,
    pub in_maps: usize,
    pub channels: usize,
    pub times: usize,
    pub out_maps: usize,
}

/// h `[B,K,C,T']`, w `[K',K,C,1]`, b `[K']` -> out `[B,K',1,T']`.
pub(crate) fn spatial_forward<T: Scalar>(h: &[T], w: &[T], b: &[T], d: &SpatialDims) -> Vec<T> {
    let inner = d.in_maps * d.channels;
    let per_in = inner * d.times;
    let per_out = d.out_maps * d.times;
    let mut out = vec![T::zero(); d.batch * per_out];
    for s in 0..d.batch {
        let os = &mut out[s * per_out..(s + 1) * per_out];
        fill_bias(os, b, d.times);
        gemm(d.out_maps, inner, d.times, T::one(), w, (inner, 1), &h[s * per_in..(s + 1) * per_in], (d.times, 1), T::one(), os, (d.times, 1));
    }
    out
}

pub(crate) fn spatial_backward<T: Scalar>(
    h: &[T],
    w: &[T],
    dout: &[T],
    d: &SpatialDims,
    need_dh: bool,
) -> ConvGrads<T> {
    let inner = d.in_maps * d.channels;
    let per_in = inner * d.times;
    let per_out = d.out_maps * d.times;
    let mut dw = vec![T::zero(); d.out_maps * inner];
    let mut db = vec![T::zero(); d.out_maps];
    let mut dh = need_dh.then(|| vec![T::zero(); d.batch * per_in]);
    for s in 0..d.batch {
        let hs = &h[s * per_in..(s + 1) * per_in];
        let ds = &dout[s * per_out..(s + 1) * per_out];
        gemm(d.out_maps, d.times, inner, T::one(), ds, (d.times, 1), hs, (1, d.times), T::one(), &mut dw, (inner, 1));
        accumulate_bias_grad(ds, d.times, &mut db);
        if let Some(dh) = dh.as_mut() {
            gemm(inner, d.out_maps, d.times, T::one(), w, (1, inner), ds, (d.times, 1), T::zero(), &mut dh[s * per_in..(s + 1) * per_in], (d.times, 1));
        }
    }
    ConvGrads { dx: dh, dw, db }
}

/// x `[B,1,C,T]`, w `[K,1,C,m]`, b `[K]` -> out `[B,K,1,T']`.
pub(crate) fn spatiotemporal_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], d: &ConvDims) -> Vec<T> {
    let to = d.out_times();
    let inner = d.channels * d.kernel_len;
    let per_in = d.channels * d.times;
    let per_out = d.kernels * to;
    let mut out = vec![T::zero(); d.batch * per_out];
    let mut col = vec![T::zero(); inner * to];
    for s in 0..d.batch {
        im2col_st(&x[s * per_in..(s + 1) * per_in], d, &mut col);
        let os = &mut out[s * per_out..(s + 1) * per_out];
        fill_bias(os, b, to);
        gemm(d.kernels, inner, to, T::one(), w, (inner, 1), &col, (to, 1), T::one(), os, (to, 1));
    }
    out
}

pub(crate) fn spatiotemporal_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dout: &[T],
    d: &ConvDims,
    need_dx: bool,
) -> ConvGrads<T> {
    let to = d.out_times();
    let inner = d.channels * d.kernel_len;
    let per_in = d.channels * d.times;
    let per_out = d.kernels * to;
    let mut dw = vec![T::zero(); d.kernels * inner];
    let mut db = vec![T::zero(); d.kernels];
    let mut dx = need_dx.then(|| vec![T::zero(); d.batch * per_in]);
    let mut col = vec![T::zero(); inner * to];
    for s in 0..d.batch {
        let ds = &dout[s * per_out..(s + 1) * per_out];
        im2col_st(&x[s * per_in..(s + 1) * per_in], d, &mut col);
        gemm(d.kernels, to, inner, T::one(), ds, (to, 1), &col, (1, to), T::one(), &mut dw, (inner, 1));
        accumulate_bias_grad(ds, to, &mut db);
        if let Some(dx) = dx.as_mut() {
            gemm(inner, d.kernels, to, T::one(), w, (1, inner), ds, (to, 1), T::zero(), &mut col, (to, 1));
            col2im_st(&col, d, &mut dx[s * per_in..(s + 1) * per_in]);
        }
    }
    ConvGrads { dx, dw, db }
}

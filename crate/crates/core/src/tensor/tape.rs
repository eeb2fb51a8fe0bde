use rand::Rng;

use super::array::strides_of;
use super::conv::{self, ConvDims, SpatialDims};
use super::{NdArray, Scalar};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch-norm statistics source.
#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a, T> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with stored running statistics.
    Eval { mean: &'a [T], var: &'a [T] },
}

/// Per-channel statistics of a training-mode batch-norm call. `var` is the
/// unbiased estimate, ready for a running-average update.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub const NORM_EPS: f64 = 1e-5;

/// Parameters of one attention sublayer, all recorded on the same tape.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln_gamma: Var,
    pub ln_beta: Var,
}

enum Op<T> {
    Leaf,
    ConvTemporal { x: Var, w: Var, b: Var, dims: ConvDims },
    ConvSpatial { h: Var, w: Var, b: Var, dims: SpatialDims },
    ConvSpatiotemporal { x: Var, w: Var, b: Var, dims: ConvDims },
    AvgPool { x: Var, pool: usize, stride: usize },
    Elu { x: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Dropout { x: Var, mask: Vec<T> },
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, alpha: T },
    Softmax { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Permute { x: Var, axes: Vec<usize> },
    Reshape { x: Var },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    Sum { x: Var },
    Dot { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: NdArray<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records the forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is always a valid
/// topological order and [`Tape::backward`] simply walks it in reverse.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn permute_data<T: Scalar>(data: &[T], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<T>) {
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; shape.len()];
    let mut off = 0usize;
    for _ in 0..data.len() {
        out.push(data[off]);
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, g: &[T]) {
    match slot {
        Some(buf) => buf.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

fn add_owned<T: Scalar>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(buf) => buf.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g),
    }
}

/// Normalizes `x` viewed as `[outer, channels, inner]` per channel.
fn channel_stats<T: Scalar>(x: &[T], outer: usize, channels: usize, inner: usize) -> (Vec<T>, Vec<T>) {
    let count = T::c((outer * inner) as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for o in 0..outer {
        for c in 0..channels {
            let base = (o * channels + c) * inner;
            mean[c] += x[base..base + inner].iter().copied().sum::<T>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for o in 0..outer {
        for c in 0..channels {
            let base = (o * channels + c) * inner;
            var[c] += x[base..base + inner].iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<T>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    (mean, var)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn leaf(&mut self, value: NdArray<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: NdArray<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &NdArray<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].value.take_grad()
    }

    pub fn zero_grads(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    fn push(&mut self, value: NdArray<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    // ---------------------------------------------------------------- convs

    /// Temporal convolution shared across channels: `[B,1,C,T] -> [B,K,C,T-m+1]`.
    pub fn conv_temporal(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 || xs[1] != 1 {
            return Err(Error::dim("conv_temporal", format!("input must be [B,1,C,T], got {xs:?}")));
        }
        if ws.len() != 4 || ws[1] != 1 || ws[2] != 1 {
            return Err(Error::dim("conv_temporal", format!("kernels must be [K,1,1,m], got {ws:?}")));
        }
        if bs != [ws[0]] {
            return Err(Error::dim("conv_temporal", format!("bias {bs:?} does not match K={}", ws[0])));
        }
        if ws[3] > xs[3] {
            return Err(Error::dim(
                "conv_temporal",
                format!("kernel length m={} exceeds time axis T={}", ws[3], xs[3]),
            ));
        }
        let dims = ConvDims {
            batch: xs[0],
            channels: xs[2],
            times: xs[3],
            kernels: ws[0],
            kernel_len: ws[3],
        };
        let out = conv::temporal_forward(self.data(x), self.data(w), self.data(b), &dims);
        let shape = [dims.batch, dims.kernels, dims.channels, dims.out_times()];
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(NdArray::new(&shape, out)?, Op::ConvTemporal { x, w, b, dims }, rg))
    }

    /// Full-width spatial convolution: `[B,K,C,T'] -> [B,K',1,T']`.
    pub fn conv_spatial(&mut self, h: Var, w: Var, b: Var) -> Result<Var> {
        let (hs, ws, bs) = (self.shape(h), self.shape(w), self.shape(b));
        if hs.len() != 4 {
            return Err(Error::dim("conv_spatial", format!("input must be [B,K,C,T'], got {hs:?}")));
        }
        if ws.len() != 4 || ws[3] != 1 {
            return Err(Error::dim("conv_spatial", format!("kernels must be [K',K,C,1], got {ws:?}")));
        }
        if ws[1] != hs[1] {
            return Err(Error::dim(
                "conv_spatial",
                format!("kernel maps axis K={} does not match input maps {}", ws[1], hs[1]),
            ));
        }
        if ws[2] != hs[2] {
            return Err(Error::dim(
                "conv_spatial",
                format!("kernel channel axis C={} does not match input channels {}", ws[2], hs[2]),
            ));
        }
        if bs != [ws[0]] {
            return Err(Error::dim("conv_spatial", format!("bias {bs:?} does not match K'={}", ws[0])));
        }
        let dims = SpatialDims {
            batch: hs[0],
            in_maps: hs[1],
            channels: hs[2],
            times: hs[3],
            out_maps: ws[0],
        };
        let out = conv::spatial_forward(self.data(h), self.data(w), self.data(b), &dims);
        let shape = [dims.batch, dims.out_maps, 1, dims.times];
        let rg = self.rg(&[h, w, b]);
        Ok(self.push(NdArray::new(&shape, out)?, Op::ConvSpatial { h, w, b, dims }, rg))
    }

    /// Fused spatiotemporal convolution: `[B,1,C,T] -> [B,K,1,T-m+1]`.
    pub fn conv_spatiotemporal(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 || xs[1] != 1 {
            return Err(Error::dim("conv_spatiotemporal", format!("input must be [B,1,C,T], got {xs:?}")));
        }
        if ws.len() != 4 || ws[1] != 1 {
            return Err(Error::dim("conv_spatiotemporal", format!("kernels must be [K,1,C,m], got {ws:?}")));
        }
        if ws[2] != xs[2] {
            return Err(Error::dim(
                "conv_spatiotemporal",
                format!("kernel channel axis C={} does not match input channels {}", ws[2], xs[2]),
            ));
        }
        if ws[3] > xs[3] {
            return Err(Error::dim(
                "conv_spatiotemporal",
                format!("kernel length m={} exceeds time axis T={}", ws[3], xs[3]),
            ));
        }
        if bs != [ws[0]] {
            return Err(Error::dim("conv_spatiotemporal", format!("bias {bs:?} does not match K={}", ws[0])));
        }
        let dims = ConvDims {
            batch: xs[0],
            channels: xs[2],
            times: xs[3],
            kernels: ws[0],
            kernel_len: ws[3],
        };
        let out = conv::spatiotemporal_forward(self.data(x), self.data(w), self.data(b), &dims);
        let shape = [dims.batch, dims.kernels, 1, dims.out_times()];
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(NdArray::new(&shape, out)?, Op::ConvSpatiotemporal { x, w, b, dims }, rg))
    }

    // ------------------------------------------------------------ pointwise

    /// Average pooling along the last axis.
    pub fn avg_pool_time(&mut self, x: Var, pool: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let t = *xs.last().expect("non-empty shape");
        if pool == 0 || stride == 0 {
            return Err(Error::Parameter(format!("pool ({pool}) and stride ({stride}) must be positive")));
        }
        if pool > t {
            return Err(Error::dim("avg_pool_time", format!("pool {pool} exceeds time axis {t}")));
        }
        let t_out = (t - pool) / stride + 1;
        let rows = self.value(x).len() / t;
        let inv = T::one() / T::c(pool as f64);
        let src = self.data(x);
        let mut out = Vec::with_capacity(rows * t_out);
        for r in 0..rows {
            let row = &src[r * t..(r + 1) * t];
            for p in 0..t_out {
                out.push(row[p * stride..p * stride + pool].iter().copied().sum::<T>() * inv);
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = t_out;
        let rg = self.rg(&[x]);
        Ok(self.push(NdArray::new(&shape, out)?, Op::AvgPool { x, pool, stride }, rg))
    }

    /// Exponential linear unit with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > T::zero() { a } else { a.exp_m1() });
        let rg = self.rg(&[x]);
        self.push(v, Op::Elu { x }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&p, &q)| p + q).collect();
        let v = NdArray::new(self.shape(a), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add { a, b }, rg))
    }

    /// Elementwise product of equally shaped arrays.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&p, &q)| p * q).collect();
        let v = NdArray::new(self.shape(a), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, alpha: T) -> Var {
        let v = self.value(x).map(|a| a * alpha);
        let rg = self.rg(&[x]);
        self.push(v, Op::Scale { x, alpha }, rg)
    }

    /// Batch normalization over axis 1 of an array shaped `[B, K, ...]`.
    ///
    /// Returns the batch statistics when running in training mode.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_, T>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::dim("batch_norm", format!("need [B,K,...], got {xs:?}")));
        }
        let (outer, channels) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(Error::dim("batch_norm", format!("affine parameters must be [{channels}]")));
        }
        let eps = T::c(NORM_EPS);
        let src = self.data(x);
        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                let (mean, var) = channel_stats(src, outer, channels, inner);
                let n = (outer * inner) as f64;
                let correction = if n > 1.0 { T::c(n / (n - 1.0)) } else { T::one() };
                let unbiased = var.iter().map(|&v| v * correction).collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != channels || var.len() != channels {
                    return Err(Error::dim("batch_norm", "running statistics length mismatch"));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (g, bt) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for c in 0..channels {
                let base = (o * channels + c) * inner;
                for i in base..base + inner {
                    xhat[i] = (src[i] - mean[c]) * inv_std[c];
                    out[i] = g[c] * xhat[i] + bt[c];
                }
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        let v = self.push(
            NdArray::new(&xs, out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: stats.is_some(),
            },
            rg,
        );
        Ok((v, stats))
    }

    /// Inverted dropout. In eval mode the input handle is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training {
            return Ok(x);
        }
        let keep = T::c(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data: Vec<T> = self.data(x).iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let v = NdArray::new(self.shape(x), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Dropout { x, mask }, rg))
    }

    // --------------------------------------------------------------- dense

    /// `y = x W^T + b` over the last axis of `x`; `W` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let fin = *xs.last().unwrap();
        if ws.len() != 2 || ws[1] != fin {
            return Err(Error::dim("linear", format!("weight {ws:?} incompatible with input {xs:?}")));
        }
        let fout = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(Error::dim("linear", format!("bias must be [{fout}]")));
            }
        }
        let rows = self.value(x).len() / fin;
        let mut out = vec![T::zero(); rows * fout];
        if let Some(b) = b {
            let bias = self.data(b);
            out.chunks_mut(fout).for_each(|r| r.copy_from_slice(bias));
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        super::gemm(rows, fin, fout, T::one(), self.data(x), (fin, 1), self.data(w), (1, fin), beta, &mut out, (fout, 1));
        let mut shape = xs;
        *shape.last_mut().unwrap() = fout;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        Ok(self.push(NdArray::new(&shape, out)?, Op::Linear { x, w, b }, rg))
    }

    /// Batched matrix product of `[G,M,K]` with `[G,K,N]` (or `[G,N,K]` when
    /// `trans_b`).
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::dim("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(Error::dim("matmul", format!("inner dimensions {k} vs {kb}")));
        }
        let mut out = vec![T::zero(); g * m * n];
        let bs = if trans_b { (1, k) } else { (n, 1) };
        for gi in 0..g {
            super::gemm(
                m,
                k,
                n,
                T::one(),
                &self.data(a)[gi * m * k..(gi + 1) * m * k],
                (k, 1),
                &self.data(b)[gi * k * n..(gi + 1) * k * n],
                bs,
                T::zero(),
                &mut out[gi * m * n..(gi + 1) * m * n],
                (n, 1),
            );
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(NdArray::new(&[g, m, n], out)?, Op::MatMul { a, b, trans_b }, rg))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let width = *self.shape(x).last().unwrap();
        let mut out = self.data(x).to_vec();
        out.chunks_mut(width).for_each(softmax_in_place);
        let v = NdArray::new(self.shape(x), out).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(v, Op::Softmax { x }, rg)
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let width = *self.shape(x).last().unwrap();
        if self.shape(gamma) != [width] || self.shape(beta) != [width] {
            return Err(Error::dim("layer_norm", format!("affine parameters must be [{width}]")));
        }
        let eps = T::c(NORM_EPS);
        let src = self.data(x);
        let (g, bt) = (self.data(gamma), self.data(beta));
        let rows = src.len() / width;
        let mut xhat = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        let mut inv_std = Vec::with_capacity(rows);
        let wn = T::c(width as f64);
        for r in 0..rows {
            let row = &src[r * width..(r + 1) * width];
            let mean = row.iter().copied().sum::<T>() / wn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / wn;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..width {
                let i = r * width + j;
                xhat[i] = (src[i] - mean) * is;
                out[i] = g[j] * xhat[i] + bt[j];
            }
        }
        let v = NdArray::new(self.shape(x), out)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let mut seen = vec![false; xs.len()];
        if axes.len() != xs.len() || axes.iter().any(|&a| a >= xs.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::dim("permute", format!("axes {axes:?} invalid for shape {xs:?}")));
        }
        let (shape, data) = permute_data(self.data(x), &xs, axes);
        let rg = self.rg(&[x]);
        Ok(self.push(
            NdArray::new(&shape, data)?,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Reshape { x }, rg))
    }

    // -------------------------------------------------------------- losses

    /// Mean softmax cross-entropy of `[N, classes]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("logits {ls:?} vs {} labels", labels.len()),
            ));
        }
        let classes = ls[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("label {bad} out of range for {classes} classes"),
            ));
        }
        let mut probs = self.data(logits).to_vec();
        probs.chunks_mut(classes).for_each(softmax_in_place);
        let n = T::c(labels.len() as f64);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -(probs[i * classes + l].max(T::min_positive_value())).ln())
            .sum::<T>()
            / n;
        let rg = self.rg(&[logits]);
        Ok(self.push(
            NdArray::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum::<T>();
        let rg = self.rg(&[x]);
        self.push(NdArray::scalar(s), Op::Sum { x }, rg)
    }

    /// `sum_i weights[i] * x[i]`, a fixed linear projection to a scalar.
    pub fn dot_const(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::dim("dot_const", "weight count does not match input"));
        }
        let s = self.data(x).iter().zip(&weights).map(|(&a, &w)| a * w).sum::<T>();
        let rg = self.rg(&[x]);
        Ok(self.push(NdArray::scalar(s), Op::Dot { x, weights }, rg))
    }

    // ----------------------------------------------------------- composite

    /// Multi-head scaled dot-product self-attention over axis 1 of
    /// `[B, L, E]`, wrapped as `layer_norm(x + attention(x))`.
    pub fn multi_head_attention(&mut self, x: Var, heads: usize, p: &AttentionParams) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::dim("multi_head_attention", format!("input must be [B,L,E], got {xs:?}")));
        }
        let (b, l, e) = (xs[0], xs[1], xs[2]);
        if heads == 0 || e % heads != 0 {
            return Err(Error::dim(
                "multi_head_attention",
                format!("{heads} heads do not divide embedding width {e}"),
            ));
        }
        let dh = e / heads;
        let split = |tape: &mut Self, v: Var| -> Result<Var> {
            let v = tape.reshape(v, &[b, l, heads, dh])?;
            let v = tape.permute(v, &[0, 2, 1, 3])?;
            tape.reshape(v, &[b * heads, l, dh])
        };
        let q = self.linear(x, p.wq, Some(p.bq))?;
        let k = self.linear(x, p.wk, Some(p.bk))?;
        let v = self.linear(x, p.wv, Some(p.bv))?;
        let (q, k, v) = (split(self, q)?, split(self, k)?, split(self, v)?);
        let scores = self.matmul(q, k, true)?;
        let scores = self.scale(scores, T::c(1.0 / (dh as f64).sqrt()));
        let attn = self.softmax(scores);
        let ctx = self.matmul(attn, v, false)?;
        let ctx = self.reshape(ctx, &[b, heads, l, dh])?;
        let ctx = self.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = self.reshape(ctx, &[b, l, e])?;
        let out = self.linear(ctx, p.wo, Some(p.bo))?;
        let res = self.add(x, out)?;
        self.layer_norm(res, p.ln_gamma, p.ln_beta)
    }

    // ------------------------------------------------------------ backward

    /// Reverse pass from a scalar `loss`, accumulating into every trainable
    /// leaf's gradient buffer. Repeated calls add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let (Op::Leaf, Some(g)) = (&node.op, g) {
                node.value.accumulate_grad(&g);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::ConvTemporal { x, w, b, dims } => {
                let r = conv::temporal_backward(self.data(*x), self.data(*w), g, dims, needs(*x));
                if let Some(dx) = r.dx {
                    add_owned(&mut grads[x.0], dx);
                }
                add_owned(&mut grads[w.0], r.dw);
                add_owned(&mut grads[b.0], r.db);
            }
            Op::ConvSpatial { h, w, b, dims } => {
                let r = conv::spatial_backward(self.data(*h), self.data(*w), g, dims, needs(*h));
                if let Some(dh) = r.dx {
                    add_owned(&mut grads[h.0], dh);
                }
                add_owned(&mut grads[w.0], r.dw);
                add_owned(&mut grads[b.0], r.db);
            }
            Op::ConvSpatiotemporal { x, w, b, dims } => {
                let r = conv::spatiotemporal_backward(self.data(*x), self.data(*w), g, dims, needs(*x));
                if let Some(dx) = r.dx {
                    add_owned(&mut grads[x.0], dx);
                }
                add_owned(&mut grads[w.0], r.dw);
                add_owned(&mut grads[b.0], r.db);
            }
            Op::AvgPool { x, pool, stride } => {
                let t = *self.shape(*x).last().unwrap();
                let t_out = *node.value.shape().last().unwrap();
                let rows = node.value.len() / t_out;
                let inv = T::one() / T::c(*pool as f64);
                let mut dx = vec![T::zero(); rows * t];
                for r in 0..rows {
                    for p in 0..t_out {
                        let gv = g[r * t_out + p] * inv;
                        let s = r * t + p * stride;
                        dx[s..s + pool].iter_mut().for_each(|d| *d += gv);
                    }
                }
                add_owned(&mut grads[x.0], dx);
            }
            Op::Elu { x } => {
                let dx = g
                    .iter()
                    .zip(node.value.data())
                    .zip(self.data(*x))
                    .map(|((&gv, &y), &xv)| if xv > T::zero() { gv } else { gv * (y + T::one()) })
                    .collect();
                add_owned(&mut grads[x.0], dx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let xs = self.shape(*x);
                let (outer, channels) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let gam = self.data(*gamma);
                let mut dgamma = vec![T::zero(); channels];
                let mut dbeta = vec![T::zero(); channels];
                for o in 0..outer {
                    for c in 0..channels {
                        let base = (o * channels + c) * inner;
                        for j in base..base + inner {
                            dgamma[c] += g[j] * xhat[j];
                            dbeta[c] += g[j];
                        }
                    }
                }
                if needs(*x) {
                    let mut dx = vec![T::zero(); g.len()];
                    let m = T::c((outer * inner) as f64);
                    for o in 0..outer {
                        for c in 0..channels {
                            let base = (o * channels + c) * inner;
                            for j in base..base + inner {
                                dx[j] = if *batch_stats {
                                    // dxhat = g * gamma; sums over the channel are dbeta, dgamma
                                    gam[c] * inv_std[c] / m * (m * g[j] - dbeta[c] - xhat[j] * dgamma[c])
                                } else {
                                    g[j] * gam[c] * inv_std[c]
                                };
                            }
                        }
                    }
                    add_owned(&mut grads[x.0], dx);
                }
                add_owned(&mut grads[gamma.0], dgamma);
                add_owned(&mut grads[beta.0], dbeta);
            }
            Op::Dropout { x, mask } => {
                let dx = g.iter().zip(mask).map(|(&a, &m)| a * m).collect();
                add_owned(&mut grads[x.0], dx);
            }
            Op::Linear { x, w, b } => {
                let fout = *node.value.shape().last().unwrap();
                let fin = *self.shape(*x).last().unwrap();
                let rows = g.len() / fout;
                if needs(*x) {
                    let mut dx = vec![T::zero(); rows * fin];
                    super::gemm(rows, fout, fin, T::one(), g, (fout, 1), self.data(*w), (fin, 1), T::zero(), &mut dx, (fin, 1));
                    add_owned(&mut grads[x.0], dx);
                }
                if needs(*w) {
                    let mut dw = vec![T::zero(); fout * fin];
                    super::gemm(fout, rows, fin, T::one(), g, (1, fout), self.data(*x), (fin, 1), T::zero(), &mut dw, (fin, 1));
                    add_owned(&mut grads[w.0], dw);
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); fout];
                    g.chunks(fout).for_each(|r| db.iter_mut().zip(r).for_each(|(d, &v)| *d += v));
                    add_owned(&mut grads[b.0], db);
                }
            }
            Op::MatMul { a, b, trans_b } => {
                let sa = self.shape(*a);
                let (gn, m, k) = (sa[0], sa[1], sa[2]);
                let n = node.value.shape()[2];
                let (ad, bd) = (self.data(*a), self.data(*b));
                if needs(*a) {
                    let mut da = vec![T::zero(); gn * m * k];
                    // da = g . b^T (b stored [K,N]) or g . b (b stored [N,K])
                    let bs = if *trans_b { (k, 1) } else { (1, n) };
                    for gi in 0..gn {
                        super::gemm(m, n, k, T::one(), &g[gi * m * n..(gi + 1) * m * n], (n, 1), &bd[gi * k * n..(gi + 1) * k * n], bs, T::zero(), &mut da[gi * m * k..(gi + 1) * m * k], (k, 1));
                    }
                    add_owned(&mut grads[a.0], da);
                }
                if needs(*b) {
                    let mut db = vec![T::zero(); gn * k * n];
                    for gi in 0..gn {
                        let gs = &g[gi * m * n..(gi + 1) * m * n];
                        let as_ = &ad[gi * m * k..(gi + 1) * m * k];
                        let out = &mut db[gi * k * n..(gi + 1) * k * n];
                        if *trans_b {
                            // db[N,K] = g^T[N,M] . a[M,K]
                            super::gemm(n, m, k, T::one(), gs, (1, n), as_, (k, 1), T::zero(), out, (k, 1));
                        } else {
                            // db[K,N] = a^T[K,M] . g[M,N]
                            super::gemm(k, m, n, T::one(), as_, (1, k), gs, (n, 1), T::zero(), out, (n, 1));
                        }
                    }
                    add_owned(&mut grads[b.0], db);
                }
            }
            Op::Add { a, b } => {
                if needs(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if needs(*b) {
                    add_into(&mut grads[b.0], g);
                }
            }
            Op::Mul { a, b } => {
                if needs(*a) {
                    add_owned(&mut grads[a.0], g.iter().zip(self.data(*b)).map(|(&u, &v)| u * v).collect());
                }
                if needs(*b) {
                    add_owned(&mut grads[b.0], g.iter().zip(self.data(*a)).map(|(&u, &v)| u * v).collect());
                }
            }
            Op::Scale { x, alpha } => {
                add_owned(&mut grads[x.0], g.iter().map(|&v| v * *alpha).collect());
            }
            Op::Softmax { x } => {
                let width = *node.value.shape().last().unwrap();
                let mut dx = vec![T::zero(); g.len()];
                for ((gr, yr), dr) in g.chunks(width).zip(node.value.data().chunks(width)).zip(dx.chunks_mut(width)) {
                    let dot = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>();
                    for j in 0..width {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                add_owned(&mut grads[x.0], dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let width = *node.value.shape().last().unwrap();
                let gam = self.data(*gamma);
                let mut dgamma = vec![T::zero(); width];
                let mut dbeta = vec![T::zero(); width];
                let mut dx = vec![T::zero(); g.len()];
                let wn = T::c(width as f64);
                for (r, &is) in inv_std.iter().enumerate() {
                    let row = r * width..(r + 1) * width;
                    let (gr, xr) = (&g[row.clone()], &xhat[row.clone()]);
                    let mut s1 = T::zero();
                    let mut s2 = T::zero();
                    for j in 0..width {
                        dgamma[j] += gr[j] * xr[j];
                        dbeta[j] += gr[j];
                        let dxh = gr[j] * gam[j];
                        s1 += dxh;
                        s2 += dxh * xr[j];
                    }
                    for j in 0..width {
                        let dxh = gr[j] * gam[j];
                        dx[r * width + j] = is / wn * (wn * dxh - s1 - xr[j] * s2);
                    }
                }
                add_owned(&mut grads[x.0], dx);
                add_owned(&mut grads[gamma.0], dgamma);
                add_owned(&mut grads[beta.0], dbeta);
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let (_, dx) = permute_data(g, node.value.shape(), &inverse);
                add_owned(&mut grads[x.0], dx);
            }
            Op::Reshape { x } => add_into(&mut grads[x.0], g),
            Op::CrossEntropy { logits, labels, probs } => {
                let classes = self.shape(*logits)[1];
                let scale = g[0] / T::c(labels.len() as f64);
                let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    dx[i * classes + l] -= scale;
                }
                add_owned(&mut grads[logits.0], dx);
            }
            Op::Sum { x } => {
                add_owned(&mut grads[x.0], vec![g[0]; self.value(*x).len()]);
            }
            Op::Dot { x, weights } => {
                add_owned(&mut grads[x.0], weights.iter().map(|&w| w * g[0]).collect());
            }
        }
    }
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

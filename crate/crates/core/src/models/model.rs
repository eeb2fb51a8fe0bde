use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConvMode, HeadKind, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{AttentionParams, BatchNormMode, BatchStats, NdArray, Scalar, Tape, Var};

/// Running-statistics momentum of the batch-norm layer.
pub const BN_MOMENTUM: f64 = 0.1;

/// Hidden width multiplier of the transformer feed-forward sublayer.
pub const FFN_EXPANSION: usize = 4;

/// Hidden width multiplier of the transformer classification head.
pub const HEAD_EXPANSION: usize = 8;

/// Samples per chunk for inference passes.
const INFERENCE_CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Init {
    /// Uniform in `±sqrt(1 / fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

/// Parameter layout in initialization order.
fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (k, c, m) = (cfg.n_kernels, cfg.n_channels, cfg.kernel_len);
    let mut out = Vec::new();
    match cfg.conv_mode {
        ConvMode::Separate1d => {
            out.push(spec("conv_time.weight", &[k, 1, 1, m], Init::FanIn(m)));
            out.push(spec("conv_time.bias", &[k], Init::FanIn(m)));
            out.push(spec("conv_spat.weight", &[k, k, c, 1], Init::FanIn(k * c)));
            out.push(spec("conv_spat.bias", &[k], Init::FanIn(k * c)));
        }
        ConvMode::Fused2d => {
            out.push(spec("conv_st.weight", &[k, 1, c, m], Init::FanIn(c * m)));
            out.push(spec("conv_st.bias", &[k], Init::FanIn(c * m)));
        }
    }
    out.push(spec("bn.weight", &[k], Init::Ones));
    out.push(spec("bn.bias", &[k], Init::Zeros));
    let tp = cfg.pooled_times();
    match cfg.head {
        HeadKind::Dense => {
            out.push(spec("fc.weight", &[cfg.n_classes, k * tp], Init::FanIn(k * tp)));
            out.push(spec("fc.bias", &[cfg.n_classes], Init::FanIn(k * tp)));
        }
        HeadKind::Transformer => {
            let e = cfg.embed();
            if e != k {
                out.push(spec("proj.weight", &[e, k], Init::FanIn(k)));
                out.push(spec("proj.bias", &[e], Init::FanIn(k)));
            }
            let f = FFN_EXPANSION * e;
            for i in 0..cfg.attn_depth {
                let p = format!("blocks.{i}");
                for q in ["q", "k", "v", "out"] {
                    out.push(spec(format!("{p}.attn.{q}.weight"), &[e, e], Init::FanIn(e)));
                    out.push(spec(format!("{p}.attn.{q}.bias"), &[e], Init::FanIn(e)));
                }
                out.push(spec(format!("{p}.ln1.weight"), &[e], Init::Ones));
                out.push(spec(format!("{p}.ln1.bias"), &[e], Init::Zeros));
                out.push(spec(format!("{p}.ffn.fc1.weight"), &[f, e], Init::FanIn(e)));
                out.push(spec(format!("{p}.ffn.fc1.bias"), &[f], Init::FanIn(e)));
                out.push(spec(format!("{p}.ffn.fc2.weight"), &[e, f], Init::FanIn(f)));
                out.push(spec(format!("{p}.ffn.fc2.bias"), &[e], Init::FanIn(f)));
                out.push(spec(format!("{p}.ln2.weight"), &[e], Init::Ones));
                out.push(spec(format!("{p}.ln2.bias"), &[e], Init::Zeros));
            }
            let h = HEAD_EXPANSION * e;
            out.push(spec("head.fc1.weight", &[h, tp * e], Init::FanIn(tp * e)));
            out.push(spec("head.fc1.bias", &[h], Init::FanIn(tp * e)));
            out.push(spec("head.fc2.weight", &[cfg.n_classes, h], Init::FanIn(h)));
            out.push(spec("head.fc2.bias", &[cfg.n_classes], Init::FanIn(h)));
        }
    }
    out
}

/// Instantiated network: config, named parameters, batch-norm buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: BTreeMap<String, NdArray<T>>,
    buffers: BTreeMap<String, NdArray<T>>,
    mode: Mode,
}

/// How a recorded pass treats batch-norm and dropout.
pub enum Pass<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Handles produced by recording a forward pass on a tape.
pub struct Recorded<T> {
    pub logits: Var,
    /// Pooled encoder output `[B, K, 1, T_pooled]`.
    pub encoder: Var,
    /// Parameter leaves in name order.
    pub params: Vec<(String, Var)>,
    pub bn_stats: Option<BatchStats<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds and initializes a model; identical `(config, seed)` gives
    /// bit-identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for s in param_specs(&config) {
            let value = match s.init {
                Init::FanIn(fan_in) => {
                    let bound = (1.0 / fan_in as f64).sqrt();
                    NdArray::from_fn(&s.shape, |_| T::c(rng.gen_range(-bound..bound)))
                }
                Init::Ones => NdArray::full(&s.shape, T::one()),
                Init::Zeros => NdArray::zeros(&s.shape),
            };
            params.insert(s.name, value);
        }
        let k = config.n_kernels;
        let buffers = BTreeMap::from([
            ("bn.running_mean".to_string(), NdArray::zeros(&[k])),
            ("bn.running_var".to_string(), NdArray::full(&[k], T::one())),
        ]);
        Ok(Self {
            config,
            params,
            buffers,
            mode: Mode::Train,
        })
    }

    /// Assembles a model from stored tensors, checking names and shapes
    /// against the configuration.
    pub fn from_parts(
        config: ModelConfig,
        params: BTreeMap<String, NdArray<T>>,
        buffers: BTreeMap<String, NdArray<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters for this config, got {}",
                specs.len(),
                params.len()
            )));
        }
        for s in &specs {
            match params.get(&s.name) {
                Some(p) if p.shape() == s.shape.as_slice() => {}
                Some(p) => {
                    return Err(Error::dim(
                        "Model::from_parts",
                        format!("{} has shape {:?}, expected {:?}", s.name, p.shape(), s.shape),
                    ))
                }
                None => return Err(Error::Config(format!("missing parameter {}", s.name))),
            }
        }
        for name in ["bn.running_mean", "bn.running_var"] {
            match buffers.get(name) {
                Some(b) if b.shape() == [config.n_kernels] => {}
                _ => return Err(Error::Config(format!("missing or malformed buffer {name}"))),
            }
        }
        Ok(Self {
            config,
            params,
            buffers,
            mode: Mode::Eval,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> &BTreeMap<String, NdArray<T>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, NdArray<T>> {
        &mut self.params
    }

    pub fn buffers(&self) -> &BTreeMap<String, NdArray<T>> {
        &self.buffers
    }

    pub fn param(&self, name: &str) -> Option<&NdArray<T>> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut NdArray<T>> {
        self.params.get_mut(name)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(NdArray::len).sum()
    }

    /// Blends batch statistics into the running buffers.
    pub fn update_running_stats(&mut self, stats: &BatchStats<T>) {
        let mom = T::c(BN_MOMENTUM);
        let keep = T::one() - mom;
        let rm = self.buffers.get_mut("bn.running_mean").expect("buffer");
        rm.data_mut().iter_mut().zip(&stats.mean).for_each(|(r, &m)| *r = keep * *r + mom * m);
        let rv = self.buffers.get_mut("bn.running_var").expect("buffer");
        rv.data_mut().iter_mut().zip(&stats.var).for_each(|(r, &v)| *r = keep * *r + mom * v);
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != c.n_channels || shape[3] != c.n_times {
            return Err(Error::dim(
                "forward",
                format!(
                    "batch shape {shape:?} does not match [B,1,{},{}] of the model",
                    c.n_channels, c.n_times
                ),
            ));
        }
        Ok(())
    }

    /// Records the full network on `tape`. Parameters become trainable leaves.
    pub fn record(&self, tape: &mut Tape<T>, batch: NdArray<T>, pass: Pass<'_>) -> Result<Recorded<T>> {
        let vars: BTreeMap<String, Var> =
            self.params.iter().map(|(name, p)| (name.clone(), tape.leaf(p.clone()))).collect();
        self.record_with(tape, vars, batch, pass)
    }

    /// Like [`Model::record`] but with caller-supplied parameter handles,
    /// one per name in [`Model::params`]. Stored parameter values are ignored.
    pub fn record_with(
        &self,
        tape: &mut Tape<T>,
        vars: BTreeMap<String, Var>,
        batch: NdArray<T>,
        pass: Pass<'_>,
    ) -> Result<Recorded<T>> {
        self.check_input(batch.shape())?;
        if vars.len() != self.params.len() || self.params.keys().any(|k| !vars.contains_key(k)) {
            return Err(Error::Contract("parameter handles do not match the model".into()));
        }
        let cfg = &self.config;
        let b = batch.shape()[0];
        let x = tape.constant(batch);
        let v = |n: &str| vars[n];
        let checked = |tape: &Tape<T>, var: Var, layer: &str| -> Result<Var> {
            if tape.value(var).all_finite() {
                Ok(var)
            } else {
                Err(Error::Numeric { layer: layer.to_string() })
            }
        };

        let conv = match cfg.conv_mode {
            ConvMode::Separate1d => {
                let h = tape.conv_temporal(x, v("conv_time.weight"), v("conv_time.bias"))?;
                let h = checked(tape, h, "conv_time")?;
                let s = tape.conv_spatial(h, v("conv_spat.weight"), v("conv_spat.bias"))?;
                checked(tape, s, "conv_spat")?
            }
            ConvMode::Fused2d => {
                let s = tape.conv_spatiotemporal(x, v("conv_st.weight"), v("conv_st.bias"))?;
                checked(tape, s, "conv_st")?
            }
        };
        let act = tape.elu(conv);
        let encoder = tape.avg_pool_time(act, cfg.pool_size, cfg.stride())?;
        let encoder = checked(tape, encoder, "pool")?;

        let (training, rng) = match pass {
            Pass::Eval => (false, None),
            Pass::Train(rng) => (true, Some(rng)),
        };
        let (normed, bn_stats) = if training {
            tape.batch_norm(encoder, v("bn.weight"), v("bn.bias"), BatchNormMode::Train)?
        } else {
            let (mean, var) = (&self.buffers["bn.running_mean"], &self.buffers["bn.running_var"]);
            tape.batch_norm(
                encoder,
                v("bn.weight"),
                v("bn.bias"),
                BatchNormMode::Eval {
                    mean: mean.data(),
                    var: var.data(),
                },
            )?
        };
        let normed = checked(tape, normed, "bn")?;
        let dropped = match rng {
            Some(rng) => tape.dropout(normed, cfg.dropout_p, true, rng)?,
            None => normed,
        };

        let (k, tp) = (cfg.n_kernels, cfg.pooled_times());
        let logits = match cfg.head {
            HeadKind::Dense => {
                let flat = tape.reshape(dropped, &[b, k * tp])?;
                tape.linear(flat, v("fc.weight"), Some(v("fc.bias")))?
            }
            HeadKind::Transformer => {
                let e = cfg.embed();
                let seq = tape.reshape(dropped, &[b, k, tp])?;
                let mut tokens = tape.permute(seq, &[0, 2, 1])?;
                if e != k {
                    tokens = tape.linear(tokens, v("proj.weight"), Some(v("proj.bias")))?;
                }
                if cfg.positional_encoding {
                    let pe = tape.constant(sinusoidal_encoding(b, tp, e));
                    tokens = tape.add(tokens, pe)?;
                }
                for i in 0..cfg.attn_depth {
                    let p = |s: &str| v(&format!("blocks.{i}.{s}"));
                    let attn = AttentionParams {
                        wq: p("attn.q.weight"),
                        bq: p("attn.q.bias"),
                        wk: p("attn.k.weight"),
                        bk: p("attn.k.bias"),
                        wv: p("attn.v.weight"),
                        bv: p("attn.v.bias"),
                        wo: p("attn.out.weight"),
                        bo: p("attn.out.bias"),
                        ln_gamma: p("ln1.weight"),
                        ln_beta: p("ln1.bias"),
                    };
                    let a = tape.multi_head_attention(tokens, cfg.attn_heads, &attn)?;
                    let a = checked(tape, a, "attention")?;
                    let f = tape.linear(a, p("ffn.fc1.weight"), Some(p("ffn.fc1.bias")))?;
                    let f = tape.elu(f);
                    let f = tape.linear(f, p("ffn.fc2.weight"), Some(p("ffn.fc2.bias")))?;
                    let r = tape.add(a, f)?;
                    tokens = tape.layer_norm(r, p("ln2.weight"), p("ln2.bias"))?;
                    tokens = checked(tape, tokens, "feed_forward")?;
                }
                let flat = tape.reshape(tokens, &[b, tp * e])?;
                let h = tape.linear(flat, v("head.fc1.weight"), Some(v("head.fc1.bias")))?;
                let h = tape.elu(h);
                tape.linear(h, v("head.fc2.weight"), Some(v("head.fc2.bias")))?
            }
        };
        let logits = checked(tape, logits, "logits")?;
        let params = vars.into_iter().collect();
        Ok(Recorded {
            logits,
            encoder,
            params,
            bn_stats,
        })
    }

    fn require_eval(&self, what: &str) -> Result<()> {
        if self.mode != Mode::Eval {
            return Err(Error::Contract(format!("{what} requires the model to be in eval mode")));
        }
        Ok(())
    }

    fn infer(&self, batch: &NdArray<T>, take: impl Fn(&Tape<T>, &Recorded<T>) -> NdArray<T>) -> Result<NdArray<T>> {
        self.check_input(batch.shape())?;
        let n = batch.shape()[0];
        let mut chunks = Vec::new();
        let mut row_shape = None;
        for start in (0..n).step_by(INFERENCE_CHUNK) {
            let rows: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(n)).collect();
            let mut tape = Tape::new();
            let rec = self.record(&mut tape, batch.select_rows(&rows)?, Pass::Eval)?;
            let out = take(&tape, &rec);
            row_shape.get_or_insert_with(|| out.shape()[1..].to_vec());
            chunks.extend(out.into_data());
        }
        let mut shape = vec![n];
        shape.extend(row_shape.expect("at least one row"));
        NdArray::new(&shape, chunks)
    }

    /// Eval-mode logits `[B, n_classes]` for a batch `[B, 1, C, T]`.
    pub fn forward(&self, batch: &NdArray<T>) -> Result<NdArray<T>> {
        self.require_eval("forward")?;
        self.infer(batch, |tape, rec| tape.value(rec.logits).clone())
    }

    /// Pooled encoder activations `[N, K, T_pooled]`, taken before
    /// batch-norm, dropout, and the head.
    pub fn extract_encoder_activations(&self, trials: &NdArray<T>) -> Result<NdArray<T>> {
        self.require_eval("activation extraction")?;
        let (k, tp) = (self.config.n_kernels, self.config.pooled_times());
        let n = trials.shape()[0];
        self.infer(trials, |tape, rec| tape.value(rec.encoder).clone())?
            .into_reshape(&[n, k, tp])
    }
}

/// Fixed sine/cosine position table broadcast over the batch: `[B, L, E]`.
pub fn sinusoidal_encoding<T: Scalar>(batch: usize, len: usize, width: usize) -> NdArray<T> {
    let mut row = vec![T::zero(); len * width];
    for pos in 0..len {
        for i in 0..width {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / width as f64);
            let angle = pos as f64 * freq;
            row[pos * width + i] = T::c(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    let data = (0..batch).flat_map(|_| row.iter().copied()).collect();
    NdArray::new(&[batch, len, width], data).expect("shape")
}

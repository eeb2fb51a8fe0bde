use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the encoder mixes time and channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// Temporal convolution followed by a full-width spatial convolution.
    Separate1d,
    /// One spatiotemporal convolution spanning all channels.
    Fused2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Dense,
    Transformer,
}

/// The four architectures compared throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn1d,
    Cnn2d,
    Conf1d,
    Conf2d,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Cnn1d, ModelKind::Cnn2d, ModelKind::Conf1d, ModelKind::Conf2d];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Cnn2d => "cnn2d",
            ModelKind::Conf1d => "conf1d",
            ModelKind::Conf2d => "conf2d",
        }
    }

    pub fn conv_mode(self) -> ConvMode {
        match self {
            ModelKind::Cnn1d | ModelKind::Conf1d => ConvMode::Separate1d,
            ModelKind::Cnn2d | ModelKind::Conf2d => ConvMode::Fused2d,
        }
    }

    pub fn head(self) -> HeadKind {
        match self {
            ModelKind::Cnn1d | ModelKind::Cnn2d => HeadKind::Dense,
            ModelKind::Conf1d | ModelKind::Conf2d => HeadKind::Transformer,
        }
    }

    pub fn from_parts(mode: ConvMode, head: HeadKind) -> Self {
        match (mode, head) {
            (ConvMode::Separate1d, HeadKind::Dense) => ModelKind::Cnn1d,
            (ConvMode::Fused2d, HeadKind::Dense) => ModelKind::Cnn2d,
            (ConvMode::Separate1d, HeadKind::Transformer) => ModelKind::Conf1d,
            (ConvMode::Fused2d, HeadKind::Transformer) => ModelKind::Conf2d,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model type `{s}` (expected cnn1d, cnn2d, conf1d, conf2d)")))
    }
}

fn d_kernels() -> usize {
    40
}
fn d_kernel_len() -> usize {
    25
}
fn d_pool() -> usize {
    100
}
fn d_dropout() -> f64 {
    0.5
}
fn d_heads() -> usize {
    2
}
fn d_depth() -> usize {
    1
}

/// Architecture description. Every parameter shape is a function of this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_channels: usize,
    pub n_times: usize,
    pub n_classes: usize,
    #[serde(default = "d_kernels")]
    pub n_kernels: usize,
    #[serde(default = "d_kernel_len")]
    pub kernel_len: usize,
    #[serde(default = "d_pool")]
    pub pool_size: usize,
    /// Defaults to `pool_size` (non-overlapping windows).
    #[serde(default)]
    pub pool_stride: Option<usize>,
    #[serde(default = "d_dropout")]
    pub dropout_p: f64,
    pub conv_mode: ConvMode,
    pub head: HeadKind,
    #[serde(default = "d_heads")]
    pub attn_heads: usize,
    #[serde(default = "d_depth")]
    pub attn_depth: usize,
    /// Transformer token width. Defaults to `n_kernels`; any other value adds
    /// a linear token projection.
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default)]
    pub positional_encoding: bool,
}

impl ModelConfig {
    /// Default hyperparameters for one of the four architectures.
    pub fn new(kind: ModelKind, n_channels: usize, n_times: usize, n_classes: usize) -> Self {
        Self {
            n_channels,
            n_times,
            n_classes,
            n_kernels: d_kernels(),
            kernel_len: d_kernel_len(),
            pool_size: d_pool(),
            pool_stride: None,
            dropout_p: d_dropout(),
            conv_mode: kind.conv_mode(),
            head: kind.head(),
            attn_heads: d_heads(),
            attn_depth: d_depth(),
            embed_dim: None,
            positional_encoding: false,
        }
    }

    pub fn kind(&self) -> ModelKind {
        ModelKind::from_parts(self.conv_mode, self.head)
    }

    pub fn with_kind(&self, kind: ModelKind) -> Self {
        Self {
            conv_mode: kind.conv_mode(),
            head: kind.head(),
            ..self.clone()
        }
    }

    pub fn stride(&self) -> usize {
        self.pool_stride.unwrap_or(self.pool_size)
    }

    pub fn embed(&self) -> usize {
        self.embed_dim.unwrap_or(self.n_kernels)
    }

    /// Time steps after the convolution stage.
    pub fn conv_out_times(&self) -> usize {
        self.n_times - self.kernel_len + 1
    }

    /// Time steps after pooling; the transformer's token count.
    pub fn pooled_times(&self) -> usize {
        (self.conv_out_times() - self.pool_size) / self.stride() + 1
    }

    pub fn encoder_output_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.n_kernels, 1, self.pooled_times()]
    }

    /// Whether a fused encoder of this size can represent every separate
    /// encoder with the same kernel count (rank of the fused kernel).
    pub fn fusion_rank_sufficient(&self) -> bool {
        self.n_kernels >= self.n_channels.min(self.kernel_len)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_channels", self.n_channels),
            ("n_times", self.n_times),
            ("n_kernels", self.n_kernels),
            ("kernel_len", self.kernel_len),
            ("pool_size", self.pool_size),
            ("pool_stride", self.stride()),
            ("attn_heads", self.attn_heads),
            ("embed_dim", self.embed()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be at least 2".into()));
        }
        if self.kernel_len > self.n_times {
            return Err(Error::Config(format!(
                "kernel_len {} exceeds n_times {}",
                self.kernel_len, self.n_times
            )));
        }
        if self.pool_size > self.conv_out_times() {
            return Err(Error::Config(format!(
                "pool_size {} exceeds convolution output length {}",
                self.pool_size,
                self.conv_out_times()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} not in [0, 1)", self.dropout_p)));
        }
        if self.head == HeadKind::Transformer && self.embed() % self.attn_heads != 0 {
            return Err(Error::Config(format!(
                "attn_heads {} does not divide embed_dim {}",
                self.attn_heads,
                self.embed()
            )));
        }
        Ok(())
    }
}

/// Per-sample multiply-accumulate counts of the two encoder designs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacCounts {
    pub encoder_1d: u64,
    pub encoder_2d: u64,
    /// `encoder_1d / encoder_2d` as a reduced fraction.
    pub ratio: (u64, u64),
}

impl MacCounts {
    pub fn ratio_f64(&self) -> f64 {
        self.ratio.0 as f64 / self.ratio.1 as f64
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Convolution cost per sample. Separate: `K*C*T'*m + K*K*C*T'`; fused:
/// `K*C*T'*m`; the ratio reduces to `1 + K/m`.
pub fn count_macs(config: &ModelConfig) -> MacCounts {
    let (k, c, m) = (config.n_kernels as u64, config.n_channels as u64, config.kernel_len as u64);
    let t = config.n_times.saturating_sub(config.kernel_len) as u64 + 1;
    let encoder_2d = k * c * t * m;
    let encoder_1d = encoder_2d + k * k * c * t;
    let (num, den) = (m + k, m);
    let g = gcd(num, den);
    MacCounts {
        encoder_1d,
        encoder_2d,
        ratio: (num / g, den / g),
    }
}

/// Trainable parameter counts of the encoder for each conv mode.
pub fn encoder_param_count(config: &ModelConfig, mode: ConvMode) -> usize {
    let (k, c, m) = (config.n_kernels, config.n_channels, config.kernel_len);
    match mode {
        ConvMode::Separate1d => k * m + k + k * k * c + k,
        ConvMode::Fused2d => k * c * m + k,
    }
}

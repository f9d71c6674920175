//! Model configuration and the flat parameter store.
//!
//! All tensors live in one `Vec<f64>`; [`Tensor`] names a slice of it. The
//! embedding doubles as the output projection, so there is no separate
//! output weight to keep in sync.

use fsmt_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: Vocab,
    pub embed_dim: usize,
    /// Encoder size per direction and decoder size.
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub dropout_p: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk defaults.
    pub fn new(vocab: Vocab) -> Self {
        ModelConfig {
            vocab,
            embed_dim: 64,
            hidden_dim: 64,
            attention_dim: 64,
            dropout_p: 0.2,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.attention_dim == 0 {
            return Err(Error::Argument("model dimensions must be at least 1".into()));
        }
        if self.vocab.is_empty() {
            return Err(Error::Argument("vocabulary is empty".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Argument(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims {
            v: self.vocab.len(),
            e: self.embed_dim,
            h: self.hidden_dim,
            d: self.hidden_dim,
            a: self.attention_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub v: usize,
    pub e: usize,
    /// Encoder hidden size per direction.
    pub h: usize,
    /// Decoder hidden size.
    pub d: usize,
    pub a: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    Embedding,
    EncFwdW,
    EncFwdB,
    EncBwdW,
    EncBwdB,
    BridgeW,
    BridgeB,
    AttKey,
    AttQuery,
    AttBias,
    AttV,
    DecW,
    DecB,
    OutW,
    OutB,
    LnGain,
    LnBias,
    LogitBias,
}

impl Tensor {
    pub const ALL: [Tensor; 18] = [
        Tensor::Embedding,
        Tensor::EncFwdW,
        Tensor::EncFwdB,
        Tensor::EncBwdW,
        Tensor::EncBwdB,
        Tensor::BridgeW,
        Tensor::BridgeB,
        Tensor::AttKey,
        Tensor::AttQuery,
        Tensor::AttBias,
        Tensor::AttV,
        Tensor::DecW,
        Tensor::DecB,
        Tensor::OutW,
        Tensor::OutB,
        Tensor::LnGain,
        Tensor::LnBias,
        Tensor::LogitBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::Embedding => "embedding",
            Tensor::EncFwdW => "encoder.fwd.weight",
            Tensor::EncFwdB => "encoder.fwd.bias",
            Tensor::EncBwdW => "encoder.bwd.weight",
            Tensor::EncBwdB => "encoder.bwd.bias",
            Tensor::BridgeW => "bridge.weight",
            Tensor::BridgeB => "bridge.bias",
            Tensor::AttKey => "attention.key",
            Tensor::AttQuery => "attention.query",
            Tensor::AttBias => "attention.bias",
            Tensor::AttV => "attention.v",
            Tensor::DecW => "decoder.weight",
            Tensor::DecB => "decoder.bias",
            Tensor::OutW => "output.weight",
            Tensor::OutB => "output.bias",
            Tensor::LnGain => "layernorm.gain",
            Tensor::LnBias => "layernorm.bias",
            Tensor::LogitBias => "logit.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<Tensor> {
        Tensor::ALL.into_iter().find(|t| t.name() == name)
    }

    /// (rows, cols); vectors have one column.
    pub fn shape(self, d: &Dims) -> (usize, usize) {
        match self {
            Tensor::Embedding => (d.v, d.e),
            Tensor::EncFwdW | Tensor::EncBwdW => (4 * d.h, d.e + d.h),
            Tensor::EncFwdB | Tensor::EncBwdB => (4 * d.h, 1),
            Tensor::BridgeW => (d.d, 2 * d.h),
            Tensor::BridgeB => (d.d, 1),
            Tensor::AttKey => (d.a, 2 * d.h),
            Tensor::AttQuery => (d.a, d.d),
            Tensor::AttBias | Tensor::AttV => (d.a, 1),
            Tensor::DecW => (4 * d.d, 2 * d.e + d.d),
            Tensor::DecB => (4 * d.d, 1),
            Tensor::OutW => (d.e, d.d + 2 * d.h),
            Tensor::OutB | Tensor::LnGain | Tensor::LnBias => (d.e, 1),
            Tensor::LogitBias => (d.v, 1),
        }
    }
}

/// Offsets of every tensor inside the flat store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub dims: Dims,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(dims: Dims) -> Layout {
        let mut offsets = Vec::with_capacity(Tensor::ALL.len());
        let mut total = 0;
        for t in Tensor::ALL {
            offsets.push(total);
            let (r, c) = t.shape(&dims);
            total += r * c;
        }
        Layout { dims, offsets, total }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, t: Tensor) -> std::ops::Range<usize> {
        let start = self.offsets[t as usize];
        let (r, c) = t.shape(&self.dims);
        start..start + r * c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl Params {
    /// Uniform initialization scaled by fan-in; LSTM and other biases start at
    /// zero and layer-norm gains at one.
    pub fn init(config: ModelConfig) -> Result<Params> {
        config.validate()?;
        let layout = Layout::new(config.dims());
        let mut data = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for t in Tensor::ALL {
            let (_, cols) = t.shape(&layout.dims);
            let slice = &mut data[layout.range(t)];
            match t {
                Tensor::Embedding
                | Tensor::EncFwdW
                | Tensor::EncBwdW
                | Tensor::BridgeW
                | Tensor::AttKey
                | Tensor::AttQuery
                | Tensor::DecW
                | Tensor::OutW => {
                    let r = 1.0 / (cols as f64).sqrt();
                    for x in slice.iter_mut() {
                        *x = rng.random_range(-r..r);
                    }
                }
                Tensor::AttV => {
                    let r = 1.0 / (layout.dims.a as f64).sqrt();
                    for x in slice.iter_mut() {
                        *x = rng.random_range(-r..r);
                    }
                }
                Tensor::LnGain => slice.fill(1.0),
                _ => {}
            }
        }
        Ok(Params { config, layout, data })
    }

    pub fn from_parts(config: ModelConfig, data: Vec<f64>) -> Result<Params> {
        config.validate()?;
        let layout = Layout::new(config.dims());
        if data.len() != layout.total() {
            return Err(Error::Argument(format!(
                "expected {} parameters, found {}",
                layout.total(),
                data.len()
            )));
        }
        Ok(Params { config, layout, data })
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn get(&self, t: Tensor) -> &[f64] {
        &self.data[self.layout.range(t)]
    }

    pub fn get_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = self.layout.range(t);
        &mut self.data[r]
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

//! Transformer text encoders, the multimodal fusion networks and their
//! fine-tuning loop, on top of a small reverse-mode autodiff tape.

mod net;
mod optim;
mod params;
mod pipeline;
pub mod tape;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Task;
use crate::textprep::DEFAULT_MAX_LENGTH;

pub use net::{build_net, NetBatch, TrainedNet};
pub use optim::{layer_multiplier, lr_at, AdamW};
pub use params::{Param, ParamStore, Tensor};
pub(crate) use params::Init;
pub use pipeline::{NetLearner, NetModel, NetPipeline, NetSpec};
pub use train::{average_top, train, Checkpoint, NetData};

/// Where text and tabular information meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Transformer over the text columns only.
    TextOnly,
    /// Same network, tabular columns rendered as extra text fields.
    AllText,
    /// Tabular features embedded as tokens and encoded jointly with text.
    FuseEarly,
    /// Separate text/categorical/numeric branches pooled by concatenation.
    FuseLate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub layers: usize,
    pub units: usize,
    pub heads: usize,
    pub ffn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub variant: Variant,
    pub task: Task,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_size: usize,
    /// Joint encoder of the fuse-early variant.
    pub fuse_early_encoder: EncoderDims,
    pub cat_embed_units: usize,
    pub cat_bottleneck: usize,
    pub late_bottleneck: usize,
    pub leaky_slope: f64,
    pub n_numeric: usize,
    /// Vocabulary size (Unknown slot included) of each categorical column.
    pub categorical_sizes: Vec<usize>,
    pub n_text_fields: usize,
    pub output_dim: usize,
    pub vocab_size: usize,
    pub max_length: usize,
}

impl NetConfig {
    /// Default architecture for `variant`; data-dependent counts start at
    /// zero and are filled in by the caller.
    pub fn new(variant: Variant, task: Task) -> Self {
        NetConfig {
            variant,
            task,
            hidden_size: 64,
            n_layers: 2,
            n_heads: 4,
            ffn_size: 256,
            fuse_early_encoder: EncoderDims {
                layers: 6,
                units: 64,
                heads: 4,
                ffn: 256,
            },
            cat_embed_units: 32,
            cat_bottleneck: 64,
            late_bottleneck: 128,
            leaky_slope: 0.1,
            n_numeric: 0,
            categorical_sizes: Vec::new(),
            n_text_fields: 0,
            output_dim: 1,
            vocab_size: 0,
            max_length: DEFAULT_MAX_LENGTH,
        }
    }

    pub fn n_categorical(&self) -> usize {
        self.categorical_sizes.len()
    }

    pub fn has_tabular(&self) -> bool {
        self.n_numeric + self.n_categorical() > 0
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.hidden_size == 0 || self.n_heads == 0 || self.hidden_size % self.n_heads != 0 {
            return err(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.n_heads
            ));
        }
        let enc = self.fuse_early_encoder;
        if self.variant == Variant::FuseEarly && (enc.heads == 0 || enc.units % enc.heads != 0) {
            return err(format!("fuse-early units {} not divisible by {} heads", enc.units, enc.heads));
        }
        match self.task {
            Task::Regression | Task::Binary if self.output_dim != 1 => {
                return err(format!("output_dim must be 1 for {:?}", self.task));
            }
            Task::Multiclass if self.output_dim < 2 => {
                return err("multiclass output_dim must equal the class count".into());
            }
            _ => {}
        }
        match self.variant {
            Variant::TextOnly | Variant::AllText if self.n_text_fields == 0 => {
                return err("text network needs at least one text field".into());
            }
            Variant::FuseEarly | Variant::FuseLate if !self.has_tabular() => {
                return err("fusion variants need numeric or categorical columns; use text_only for text-only tables".into());
            }
            _ => {}
        }
        if self.vocab_size < crate::textprep::N_RESERVED {
            return err("vocabulary smaller than the reserved tokens".into());
        }
        if self.max_length < 1 + self.n_text_fields {
            return err("max_length cannot hold CLS and one SEP per field".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Per-layer multiplier base: parameters at depth d move with lr·τ^d.
    pub layer_decay: f64,
    pub checkpoints_to_average: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 5e-5,
            warmup_fraction: 0.1,
            batch_size: 128,
            weight_decay: 1e-4,
            epochs: 10,
            layer_decay: 0.8,
            checkpoints_to_average: 3,
            patience: 3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return err("warmup_fraction must lie in (0, 1)");
        }
        if !(self.layer_decay > 0.0 && self.layer_decay <= 1.0) {
            return err("layer_decay must lie in (0, 1]");
        }
        if self.checkpoints_to_average == 0 {
            return err("checkpoints_to_average must be at least 1");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return err("batch_size and epochs must be positive");
        }
        if self.peak_lr <= 0.0 || !self.peak_lr.is_finite() {
            return err("peak_lr must be positive");
        }
        Ok(())
    }
}

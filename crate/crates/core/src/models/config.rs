use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::EmbedConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Embedding → spatial dropout → Bi-LSTM → conv1d → mean‖max pooling → dense heads.
    BilstmSa2sl,
    /// Single forward LSTM; the final hidden state feeds the dense heads.
    LstmBaseline,
    /// Two same-padded conv1d layers over the embeddings, pooled like the main model.
    CnnBaseline,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::BilstmSa2sl,
        Architecture::LstmBaseline,
        Architecture::CnnBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::BilstmSa2sl => "bilstm_sa2sl",
            Architecture::LstmBaseline => "lstm_baseline",
            Architecture::CnnBaseline => "cnn_baseline",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown architecture {s:?} (expected bilstm_sa2sl, lstm_baseline or cnn_baseline)"
                ))
            })
    }
}

/// Network shape and text-pipeline hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub conv_channels: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub max_len: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub buckets: usize,
    pub min_freq: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let e = EmbedConfig::default();
        ModelConfig {
            architecture: Architecture::BilstmSa2sl,
            d_embed: e.dim,
            d_hidden: 128,
            conv_channels: 64,
            kernel_size: 3,
            dropout_rate: 0.3,
            max_len: crate::textproc::DEFAULT_MAX_LEN,
            n_min: e.n_min,
            n_max: e.n_max,
            buckets: e.buckets,
            min_freq: crate::textproc::DEFAULT_MIN_FREQ,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_embed", self.d_embed),
            ("d_hidden", self.d_hidden),
            ("conv_channels", self.conv_channels),
            ("kernel_size", self.kernel_size),
            ("max_len", self.max_len),
            ("min_freq", self.min_freq),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "kernel_size {} must be odd",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidInput(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        self.embed_config().validate()
    }

    pub fn embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            dim: self.d_embed,
            n_min: self.n_min,
            n_max: self.n_max,
            buckets: self.buckets,
        }
    }
}

/// Optimization schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub seed: u64,
    /// Epochs without strict dev improvement tolerated before stopping.
    pub early_stop_patience: usize,
    pub clip_norm: f32,
    /// Inverse-frequency class weights in the loss.
    pub class_weights: bool,
    /// Optional pretrained vectors in `.vec` text format.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vectors: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed: 42,
            early_stop_patience: 5,
            clip_norm: 5.0,
            class_weights: false,
            vectors: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "clip_norm {} must be positive",
                self.clip_norm
            )));
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {value:?} for {key}")))
}

/// Applies `key = value` lines (blank lines and `#` comments ignored) to
/// the two configs. Unknown keys are errors.
pub fn apply_config_text(text: &str, model: &mut ModelConfig, train: &mut TrainConfig) -> Result<()> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedLine {
            line: n + 1,
            reason: format!("expected key = value, got {raw:?}"),
        })?;
        set_config_value(key.trim(), value.trim(), model, train).map_err(|e| Error::MalformedLine {
            line: n + 1,
            reason: e.to_string(),
        })?;
    }
    model.validate()?;
    train.validate()
}

pub fn set_config_value(key: &str, value: &str, model: &mut ModelConfig, train: &mut TrainConfig) -> Result<()> {
    match key {
        "architecture" | "arch" => model.architecture = value.parse()?,
        "d_embed" => model.d_embed = parse_value(key, value)?,
        "d_hidden" => model.d_hidden = parse_value(key, value)?,
        "conv_channels" => model.conv_channels = parse_value(key, value)?,
        "kernel_size" => model.kernel_size = parse_value(key, value)?,
        "dropout_rate" => model.dropout_rate = parse_value(key, value)?,
        "max_len" => model.max_len = parse_value(key, value)?,
        "n_min" => model.n_min = parse_value(key, value)?,
        "n_max" => model.n_max = parse_value(key, value)?,
        "buckets" => model.buckets = parse_value(key, value)?,
        "min_freq" => model.min_freq = parse_value(key, value)?,
        "epochs" => train.epochs = parse_value(key, value)?,
        "batch_size" => train.batch_size = parse_value(key, value)?,
        "lr" => train.lr = parse_value(key, value)?,
        "seed" => train.seed = parse_value(key, value)?,
        "early_stop_patience" | "patience" => train.early_stop_patience = parse_value(key, value)?,
        "clip_norm" => train.clip_norm = parse_value(key, value)?,
        "class_weights" => train.class_weights = parse_value(key, value)?,
        "vectors" => train.vectors = (!value.is_empty()).then(|| PathBuf::from(value)),
        _ => return Err(Error::InvalidInput(format!("unknown config key {key:?}"))),
    }
    Ok(())
}

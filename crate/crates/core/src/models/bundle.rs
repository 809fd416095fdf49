//! On-disk model bundles.
//!
//! A neural bundle is a directory holding `config.json`, `vocab.tsv`,
//! `embeddings.bin`, `params.bin` and `history.json`. `params.bin` is a
//! little-endian u64 header length, a JSON descriptor of the architecture
//! and tensor shapes, then every tensor as f32 in declaration order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Architecture, ModelConfig, TrainConfig};
use super::network::NetParams;
use super::predict::{NeuralModel, Prediction, Predictor};
use super::train::TrainingHistory;
use crate::classicml::ClassicModel;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::textproc::Vocabulary;

pub const PARAMS_FORMAT: &str = "absa-params/1";

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct BundleMeta<C> {
    pub kind: String,
    pub model_id: String,
    #[serde(flatten)]
    pub body: C,
}

#[derive(Debug, Serialize, Deserialize)]
struct NeuralMeta {
    model: ModelConfig,
    train: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsHeader {
    format: String,
    architecture: Architecture,
    tensors: Vec<TensorSpec>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Bundle kind recorded in the metadata file of `dir`.
pub fn bundle_kind(dir: &Path) -> Result<String> {
    #[derive(Deserialize)]
    struct Kind {
        kind: String,
    }
    for name in ["config.json", "model.json"] {
        let path = dir.join(name);
        if path.exists() {
            return Ok(read_json::<Kind>(&path)?.kind);
        }
    }
    Err(Error::Format(format!("{} is not a model bundle", dir.display())))
}

pub fn save_params(params: &NetParams, architecture: Architecture, path: &Path) -> Result<()> {
    let header = ParamsHeader {
        format: PARAMS_FORMAT.into(),
        architecture,
        tensors: params
            .tensors()
            .iter()
            .map(|(name, t)| TensorSpec {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&(json.len() as u64).to_le_bytes())?;
    write(&json)?;
    for (_, t) in params.tensors() {
        let mut buf = Vec::with_capacity(4 * t.len());
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write(&buf)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_params(config: &ModelConfig, path: &Path) -> Result<NetParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut read_exact = |buf: &mut [u8]| r.read_exact(buf).map_err(|e| Error::io(path, e));
    let mut len = [0u8; 8];
    read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(Error::Format(format!(
            "{}: implausible header length {len}",
            path.display()
        )));
    }
    let mut json = vec![0u8; len as usize];
    read_exact(&mut json)?;
    let header: ParamsHeader = serde_json::from_slice(&json)?;
    if header.format != PARAMS_FORMAT {
        return Err(Error::Format(format!(
            "unsupported parameter format {:?}",
            header.format
        )));
    }
    if header.architecture != config.architecture {
        return Err(Error::Format(format!(
            "checkpoint is {} but the config says {}",
            header.architecture, config.architecture
        )));
    }
    let mut params = NetParams::zeros(config);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    if expected.len() != header.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, expected {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    for ((name, shape), spec) in expected.iter().zip(&header.tensors) {
        if *name != spec.name || *shape != spec.shape {
            return Err(Error::Format(format!(
                "checkpoint tensor {} {:?} does not match expected {name} {shape:?}",
                spec.name, spec.shape
            )));
        }
    }
    for t in params.tensors_mut() {
        let mut buf = vec![0u8; 4 * t.len()];
        read_exact(&mut buf)?;
        for (v, chunk) in t.data_mut().iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if !rest.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes in {}",
            rest.len(),
            path.display()
        )));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite(path.display().to_string()));
    }
    Ok(params)
}

impl NeuralModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(
            &dir.join("config.json"),
            &BundleMeta {
                kind: "neural".into(),
                model_id: self.model_id.clone(),
                body: NeuralMeta {
                    model: self.config.clone(),
                    train: self.train_config.clone(),
                },
            },
        )?;
        self.vocab.save(&dir.join("vocab.tsv"))?;
        self.embeddings.save(&dir.join("embeddings.bin"))?;
        save_params(&self.params, self.config.architecture, &dir.join("params.bin"))?;
        write_json(&dir.join("history.json"), &self.history)
    }

    pub fn load(dir: &Path) -> Result<NeuralModel> {
        let meta: BundleMeta<NeuralMeta> = read_json(&dir.join("config.json"))?;
        if meta.kind != "neural" {
            return Err(Error::Format(format!("{} holds a {} model", dir.display(), meta.kind)));
        }
        let config = meta.body.model;
        config.validate()?;
        let vocab = Vocabulary::load(&dir.join("vocab.tsv"), config.min_freq)?;
        let embeddings = EmbeddingTable::load(&dir.join("embeddings.bin"))?;
        if embeddings.config() != &config.embed_config() || embeddings.n_words() != vocab.n_ids() {
            return Err(Error::Format(
                "embedding checkpoint does not match config and vocabulary".into(),
            ));
        }
        let params = load_params(&config, &dir.join("params.bin"))?;
        let history: TrainingHistory = read_json(&dir.join("history.json"))?;
        let mut model = NeuralModel {
            config,
            train_config: meta.body.train,
            vocab,
            embeddings,
            params,
            history,
            model_id: String::new(),
        };
        model.refresh_id();
        if model.model_id != meta.model_id {
            return Err(Error::Format(format!(
                "bundle id {} does not match its parameters ({})",
                meta.model_id, model.model_id
            )));
        }
        Ok(model)
    }
}

/// Either kind of trained model behind one [`Predictor`].
#[derive(Clone, Debug)]
pub enum AnyModel {
    Neural(NeuralModel),
    Classic(ClassicModel),
}

impl AnyModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            AnyModel::Neural(m) => m.save(dir),
            AnyModel::Classic(m) => m.save(dir),
        }
    }

    pub fn kind(&self) -> String {
        match self {
            AnyModel::Neural(m) => m.config().architecture.to_string(),
            AnyModel::Classic(m) => m.kind().to_string(),
        }
    }
}

impl Predictor for AnyModel {
    fn model_id(&self) -> &str {
        match self {
            AnyModel::Neural(m) => m.model_id(),
            AnyModel::Classic(m) => m.model_id(),
        }
    }

    fn predict(&self, text: &str) -> Prediction {
        match self {
            AnyModel::Neural(m) => m.predict(text),
            AnyModel::Classic(m) => m.predict(text),
        }
    }
}

/// Loads a neural or classic bundle, whichever `dir` holds.
pub fn load_model(dir: &Path) -> Result<AnyModel> {
    match bundle_kind(dir)?.as_str() {
        "neural" => Ok(AnyModel::Neural(NeuralModel::load(dir)?)),
        "classic" => Ok(AnyModel::Classic(ClassicModel::load(dir)?)),
        other => Err(Error::Format(format!("unknown bundle kind {other:?}"))),
    }
}

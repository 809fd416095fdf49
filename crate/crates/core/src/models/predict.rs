use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::network::{embed_tokens, forward, NetParams};
use super::train::TrainingHistory;
use crate::corpus::{Aspect, LabelSet, Polarity};
use crate::embed::{fnv1a, EmbeddingTable, TokenPieces};
use crate::error::{Error, Result};
use crate::neuralcore::{head_size, head_softmax, Mode};
use crate::textproc::{analyze, Vocabulary};

/// Per-aspect class distributions and the label set decoded from them.
///
/// Content heads are ordered `[Absent, Pos, Neu, Neg]`, the OTHERS head
/// `[Absent, Present]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "labels")]
    pub decoded: LabelSet,
    pub probabilities: BTreeMap<Aspect, Vec<f32>>,
    /// Set when the text had no tokens; every head is then a point mass on Absent.
    pub degenerate: bool,
}

impl Prediction {
    /// Builds a prediction from 11 heads in taxonomy order.
    pub fn from_heads(heads: Vec<Vec<f32>>) -> Prediction {
        let decoded = decode(&heads);
        Prediction {
            decoded,
            probabilities: Aspect::ALL.iter().copied().zip(heads).collect(),
            degenerate: false,
        }
    }

    /// The all-Absent prediction for input without tokens.
    pub fn degenerate() -> Prediction {
        let heads = Aspect::ALL
            .iter()
            .map(|&a| {
                let mut h = vec![0.0; head_size(a)];
                h[0] = 1.0;
                h
            })
            .collect();
        Prediction {
            degenerate: true,
            ..Prediction::from_heads(heads)
        }
    }

    pub fn head(&self, aspect: Aspect) -> &[f32] {
        &self.probabilities[&aspect]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per content aspect: argmax over {Absent, Pos, Neu, Neg}; OTHERS: argmax
/// over {Absent, Present}. Ties resolve in that order.
pub fn decode(heads: &[Vec<f32>]) -> LabelSet {
    let mut set = LabelSet::new();
    for (&aspect, head) in Aspect::ALL.iter().zip(heads) {
        match (aspect.is_content(), argmax(head)) {
            (_, 0) => {}
            (true, c) => set = set.with(aspect, Polarity::ALL[c - 1]),
            (false, _) => set = set.with_others(),
        }
    }
    set
}

/// Anything that maps a comment to a prediction. Implementations are
/// immutable and shareable across threads.
pub trait Predictor: Send + Sync {
    fn model_id(&self) -> &str;

    fn predict(&self, text: &str) -> Prediction;

    fn predict_labels(&self, text: &str) -> LabelSet {
        self.predict(text).decoded
    }
}

/// A neural model with its text pipeline, ready for inference.
#[derive(Clone, Debug)]
pub struct NeuralModel {
    pub(crate) config: ModelConfig,
    pub(crate) train_config: TrainConfig,
    pub(crate) vocab: Vocabulary,
    pub(crate) embeddings: EmbeddingTable,
    pub(crate) params: NetParams,
    pub(crate) history: TrainingHistory,
    pub(crate) model_id: String,
}

/// Wires an untrained network over an existing vocabulary and embedding
/// table; dense layers are initialized from `seed`.
pub fn build_model(
    config: &ModelConfig,
    vocab: Vocabulary,
    embeddings: EmbeddingTable,
    seed: u64,
) -> Result<NeuralModel> {
    config.validate()?;
    if embeddings.dim() != config.d_embed {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {} does not match d_embed {}",
            embeddings.dim(),
            config.d_embed
        )));
    }
    if embeddings.n_words() != vocab.n_ids() {
        return Err(Error::InvalidInput(format!(
            "embedding table has {} word rows for a vocabulary of {} ids",
            embeddings.n_words(),
            vocab.n_ids()
        )));
    }
    if embeddings.config() != &config.embed_config() {
        return Err(Error::InvalidInput(
            "embedding n-gram/bucket settings differ from the model config".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = NetParams::init(config, &mut rng);
    let mut model = NeuralModel {
        config: config.clone(),
        train_config: TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        vocab,
        embeddings,
        params,
        history: TrainingHistory::default(),
        model_id: String::new(),
    };
    model.refresh_id();
    Ok(model)
}

impl NeuralModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn history(&self) -> &TrainingHistory {
        &self.history
    }

    /// Table rows of each token of `text`, truncated to `max_len`.
    pub fn pieces(&self, text: &str) -> Vec<TokenPieces> {
        analyze(text)
            .iter()
            .take(self.config.max_len)
            .map(|tok| self.embeddings.pieces(tok, &self.vocab))
            .collect()
    }

    /// Eval-mode class distributions for already-segmented tokens.
    pub(crate) fn predict_pieces(&self, pieces: &[TokenPieces]) -> Prediction {
        if pieces.is_empty() {
            return Prediction::degenerate();
        }
        let x = embed_tokens(&self.embeddings, pieces);
        // Eval mode never draws from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match forward(&self.params, self.config.dropout_rate, &x, Mode::Eval, &mut rng) {
            Ok((logits, _)) => Prediction::from_heads(head_softmax(&logits)),
            Err(e) => {
                log::error!("forward pass failed: {e}");
                Prediction::degenerate()
            }
        }
    }

    /// `"{architecture}-s{seed}-{fingerprint}"`, the fingerprint hashing the
    /// dense parameters and vocabulary size.
    pub(crate) fn refresh_id(&mut self) {
        let mut bytes = Vec::with_capacity(4 * self.params.param_count() + 8);
        bytes.extend((self.vocab.n_ids() as u64).to_le_bytes());
        for (_, t) in self.params.tensors() {
            for v in t.data() {
                bytes.extend(v.to_le_bytes());
            }
        }
        self.model_id = format!(
            "{}-s{}-{:08x}",
            self.config.architecture,
            self.train_config.seed,
            fnv1a(&bytes) as u32
        );
    }
}

impl Predictor for NeuralModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn predict(&self, text: &str) -> Prediction {
        self.predict_pieces(&self.pieces(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heads_with(aspect: Aspect, head: Vec<f32>) -> Vec<Vec<f32>> {
        Aspect::ALL
            .iter()
            .map(|&a| {
                if a == aspect {
                    head.clone()
                } else {
                    let mut h = vec![0.0; head_size(a)];
                    h[0] = 1.0;
                    h
                }
            })
            .collect()
    }

    #[test]
    fn decode_argmax_and_ties() {
        let set = decode(&heads_with(Aspect::Battery, vec![0.1, 0.7, 0.1, 0.1]));
        assert_eq!(set.polarity(Aspect::Battery), Some(Polarity::Pos));
        assert_eq!(set.len(), 1);
        assert!(decode(&heads_with(Aspect::Battery, vec![0.25; 4])).is_empty());
        let set = decode(&heads_with(Aspect::Camera, vec![0.1, 0.1, 0.4, 0.4]));
        assert_eq!(set.polarity(Aspect::Camera), Some(Polarity::Neu));
    }

    #[test]
    fn others_decodes_without_polarity() {
        let set = decode(&heads_with(Aspect::Others, vec![0.4, 0.6]));
        assert!(set.contains(Aspect::Others));
        assert_eq!(set.polarity(Aspect::Others), None);
        assert_eq!(set.to_label_string(), "{OTHERS}");
    }

    #[test]
    fn degenerate_prediction_is_all_absent() {
        let p = Prediction::degenerate();
        assert!(p.degenerate);
        assert!(p.decoded.is_empty());
        for h in p.probabilities.values() {
            assert_eq!(h.iter().sum::<f32>(), 1.0);
        }
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"degenerate\":true"));
        let back: Prediction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::network::{backward, embed_tokens, embedding_backward, forward, NetParams};
use super::predict::{build_model, NeuralModel};
use crate::corpus::{Dataset, LabelSet};
use crate::embed::{EmbeddingTable, SparseRowGrad, TokenPieces, VectorSource};
use crate::error::{Error, Result};
use crate::evaluation::{aspect_scores, sentiment_scores};
use crate::neuralcore::{
    adam_update, clip_global_norm, multitask_loss_and_grad, AdamConfig, AdamState, ClassWeights, Mode, SparseAdam,
};
use crate::textproc::build_vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_aspect_f1: f64,
    pub dev_sentiment_f1: f64,
    /// Strict improvement of the dev aspect macro-F1 over all earlier epochs.
    pub improved: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters the model carries; 0 when untrained.
    pub best_epoch: usize,
    pub best_dev_aspect_f1: f64,
    pub stopped_early: bool,
    /// Training comments skipped because they have no tokens.
    pub skipped_empty: usize,
}

/// Mixes a root seed with stream coordinates (SplitMix64 finalizer).
pub(crate) fn derive_seed(root: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut z = root
        ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ a.wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ b.wrapping_mul(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const EMBED_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

struct Example {
    pieces: Vec<TokenPieces>,
    gold: LabelSet,
}

fn gold_of(ds: &Dataset) -> Result<Vec<LabelSet>> {
    ds.comments()
        .iter()
        .map(|c| {
            c.labels
                .ok_or_else(|| Error::InvalidInput(format!("comment {} in {} has no labels", c.index, ds.name())))
        })
        .collect()
}

/// Builds the vocabulary and embedding table from `train`, initializes the
/// network from `tc.seed` and trains it.
pub fn train(
    config: &ModelConfig,
    tc: &TrainConfig,
    train: &Dataset,
    dev: &Dataset,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<NeuralModel> {
    config.validate()?;
    tc.validate()?;
    let vocab = build_vocab(train, config.min_freq)?;
    let embed_seed = derive_seed(tc.seed, EMBED_STREAM, 0, 0);
    let source = match &tc.vectors {
        Some(path) => VectorSource::File(path),
        None => VectorSource::Random,
    };
    let table = EmbeddingTable::initialize(&vocab, config.embed_config(), source, embed_seed)?;
    let model = build_model(config, vocab, table, tc.seed)?;
    train_model(model, tc, train, dev, observer)
}

/// Runs seeded mini-batch Adam over `train`, scoring the dev aspect
/// macro-F1 after every epoch, and returns the model with the parameters
/// of the best epoch. An empty `dev` set falls back to scoring `train`.
pub fn train_model(
    mut model: NeuralModel,
    tc: &TrainConfig,
    train: &Dataset,
    dev: &Dataset,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<NeuralModel> {
    tc.validate()?;
    model.train_config = tc.clone();
    let train_gold = gold_of(train)?;
    let mut skipped = 0;
    let examples: Vec<Example> = train
        .comments()
        .iter()
        .zip(&train_gold)
        .filter_map(|(c, g)| {
            let pieces = model.pieces(&c.text);
            if pieces.is_empty() {
                skipped += 1;
                None
            } else {
                Some(Example { pieces, gold: *g })
            }
        })
        .collect();
    if examples.is_empty() {
        return Err(Error::InvalidInput("training set has no comment with tokens".into()));
    }
    let (dev_pieces, dev_gold) = if dev.is_empty() {
        log::info!("no dev comments; model selection scores the training set");
        (
            train
                .comments()
                .iter()
                .map(|c| model.pieces(&c.text))
                .collect::<Vec<_>>(),
            train_gold.clone(),
        )
    } else {
        (
            dev.comments().iter().map(|c| model.pieces(&c.text)).collect(),
            gold_of(dev)?,
        )
    };
    let weights = tc.class_weights.then(|| ClassWeights::inverse_frequency(&train_gold));
    let adam = AdamConfig {
        lr: tc.lr,
        ..AdamConfig::default()
    };

    let mut dense_states: Vec<AdamState> = model
        .params
        .tensors()
        .iter()
        .map(|(_, t)| AdamState::zeros(t.len()))
        .collect();
    let mut sparse = SparseAdam::new();
    // Pre-update values of embedding rows changed since the best epoch.
    let mut undo: HashMap<usize, Vec<f32>> = HashMap::new();
    let mut best_params = model.params.clone();
    let mut history = TrainingHistory {
        skipped_empty: skipped,
        best_dev_aspect_f1: f64::NEG_INFINITY,
        ..TrainingHistory::default()
    };
    let mut since_best = 0usize;
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 1..=tc.epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            tc.seed,
            SHUFFLE_STREAM,
            epoch as u64,
            0,
        )));
        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            let parts: Vec<Result<(f32, NetParams, SparseRowGrad)>> = batch
                .par_iter()
                .map(|&i| {
                    let seed = derive_seed(tc.seed, DROPOUT_STREAM, epoch as u64, i as u64);
                    example_gradient(&model, &examples[i], weights.as_ref(), seed)
                })
                .collect();
            let mut grads = model.params.zeros_like();
            let mut emb_grad = SparseRowGrad::default();
            let mut batch_loss = 0.0f32;
            for part in parts {
                let (loss, g, e) = part?;
                batch_loss += loss;
                grads.add_scaled(&g, 1.0);
                for (r, row) in e.rows {
                    let acc = emb_grad.rows.entry(r).or_insert_with(|| vec![0.0; row.len()]);
                    acc.iter_mut().zip(&row).for_each(|(a, v)| *a += v);
                }
            }
            let inv = 1.0 / batch.len() as f32;
            batch_loss *= inv;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss,
                });
            }
            loss_sum += f64::from(batch_loss) * batch.len() as f64;
            {
                let mut dense: Vec<&mut [f32]> = grads
                    .tensors_mut()
                    .into_iter()
                    .map(|t| {
                        t.data_mut().iter_mut().for_each(|v| *v *= inv);
                        t.data_mut()
                    })
                    .collect();
                emb_grad.scale(inv);
                clip_global_norm(&mut dense, Some(&mut emb_grad), tc.clip_norm);
            }
            step += 1;
            let grad_tensors = grads.tensors();
            for ((p, (_, g)), st) in model
                .params
                .tensors_mut()
                .into_iter()
                .zip(grad_tensors)
                .zip(&mut dense_states)
            {
                adam_update(p.data_mut(), g.data(), st, step, &adam).map_err(|_| Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss,
                })?;
            }
            for &r in emb_grad.rows.keys() {
                undo.entry(r).or_insert_with(|| model.embeddings.row(r).to_vec());
            }
            sparse.update(&emb_grad, step, &adam, &mut model.embeddings)?;
        }

        let (dev_aspect_f1, dev_sentiment_f1) = score(&model, &dev_pieces, &dev_gold)?;
        let improved = dev_aspect_f1 > history.best_dev_aspect_f1;
        if improved {
            history.best_epoch = epoch;
            history.best_dev_aspect_f1 = dev_aspect_f1;
            best_params.clone_from(&model.params);
            undo.clear();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / examples.len() as f64,
            dev_aspect_f1,
            dev_sentiment_f1,
            improved,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, dev aspect F1 {:.4}, dev sentiment F1 {:.4} ({:.1}s)",
            record.train_loss,
            dev_aspect_f1,
            dev_sentiment_f1,
            started.elapsed().as_secs_f64()
        );
        observer(&record);
        history.epochs.push(record);
        if since_best > tc.early_stop_patience {
            history.stopped_early = epoch < tc.epochs;
            break;
        }
    }

    if history.epochs.last().map(|r| r.epoch) != Some(history.best_epoch) {
        model.params = best_params;
        for (r, values) in undo {
            model.embeddings.row_mut(r).copy_from_slice(&values);
        }
    }
    model.history = history;
    model.refresh_id();
    Ok(model)
}

fn example_gradient(
    model: &NeuralModel,
    ex: &Example,
    weights: Option<&ClassWeights>,
    seed: u64,
) -> Result<(f32, NetParams, SparseRowGrad)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = embed_tokens(&model.embeddings, &ex.pieces);
    let (logits, cache) = forward(&model.params, model.config.dropout_rate, &x, Mode::Train, &mut rng)?;
    let (loss, dlogits) = multitask_loss_and_grad(&logits, &ex.gold, weights)?;
    let mut grads = model.params.zeros_like();
    let dx = backward(&model.params, &cache, &dlogits, &mut grads);
    let mut emb = SparseRowGrad::default();
    embedding_backward(&model.embeddings, &ex.pieces, &dx, &mut emb);
    Ok((loss, grads, emb))
}

/// Aspect and sentiment macro-F1 of the model on pre-segmented comments;
/// an undefined macro counts as 0.
fn score(model: &NeuralModel, pieces: &[Vec<TokenPieces>], gold: &[LabelSet]) -> Result<(f64, f64)> {
    let pred: Vec<LabelSet> = pieces.par_iter().map(|p| model.predict_pieces(p).decoded).collect();
    let zero_nan = |v: f64| if v.is_nan() { 0.0 } else { v };
    Ok((
        zero_nan(aspect_scores("dev", gold, &pred)?.macro_avg.f1),
        zero_nan(sentiment_scores("dev", gold, &pred)?.macro_avg.f1),
    ))
}

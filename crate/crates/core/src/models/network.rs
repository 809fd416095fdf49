//! Parameter sets and per-example forward/backward passes of the three
//! architectures.
//!
//! Each example is processed at its true length, so padding never enters
//! the recurrent state or the pooling statistics.

use rand::Rng;

use super::config::{Architecture, ModelConfig};
use crate::embed::{EmbeddingTable, SparseRowGrad, TokenPieces};
use crate::error::{Error, Result};
use crate::neuralcore::{
    affine, affine_backward, bilstm_backward, bilstm_forward, conv1d_backward, conv1d_forward, global_pool_backward,
    global_pool_concat, lstm_sequence, lstm_sequence_backward, spatial_dropout, Activation, AffineCache, AffineParams,
    BiLstmCache, ChannelMask, Conv1dCache, Conv1dParams, LstmCellParams, LstmSeqCache, Mode, PoolCache, Tensor,
    N_LOGITS,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    BiLstm {
        fwd: LstmCellParams,
        bwd: LstmCellParams,
        conv: Conv1dParams,
    },
    Lstm {
        cell: LstmCellParams,
    },
    Cnn {
        conv1: Conv1dParams,
        conv2: Conv1dParams,
    },
}

/// Dense parameters of a network (the embedding table is held separately).
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub body: Body,
    pub head: AffineParams,
}

fn head_inputs(cfg: &ModelConfig) -> usize {
    match cfg.architecture {
        Architecture::BilstmSa2sl | Architecture::CnnBaseline => 2 * cfg.conv_channels,
        Architecture::LstmBaseline => cfg.d_hidden,
    }
}

impl NetParams {
    pub fn zeros(cfg: &ModelConfig) -> NetParams {
        let (d, h, c, k) = (cfg.d_embed, cfg.d_hidden, cfg.conv_channels, cfg.kernel_size);
        let body = match cfg.architecture {
            Architecture::BilstmSa2sl => Body::BiLstm {
                fwd: LstmCellParams::zeros(d, h),
                bwd: LstmCellParams::zeros(d, h),
                conv: Conv1dParams::zeros(k, 2 * h, c),
            },
            Architecture::LstmBaseline => Body::Lstm {
                cell: LstmCellParams::zeros(d, h),
            },
            Architecture::CnnBaseline => Body::Cnn {
                conv1: Conv1dParams::zeros(k, d, c),
                conv2: Conv1dParams::zeros(k, c, c),
            },
        };
        NetParams {
            body,
            head: AffineParams::zeros(head_inputs(cfg), N_LOGITS),
        }
    }

    /// Glorot-uniform weights, zero biases (LSTM forget bias 1), drawn in
    /// declaration order from `rng`.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> NetParams {
        let (d, h, c, k) = (cfg.d_embed, cfg.d_hidden, cfg.conv_channels, cfg.kernel_size);
        let body = match cfg.architecture {
            Architecture::BilstmSa2sl => {
                let fwd = LstmCellParams::init(d, h, rng);
                let bwd = LstmCellParams::init(d, h, rng);
                let conv = Conv1dParams::init(k, 2 * h, c, rng);
                Body::BiLstm { fwd, bwd, conv }
            }
            Architecture::LstmBaseline => Body::Lstm {
                cell: LstmCellParams::init(d, h, rng),
            },
            Architecture::CnnBaseline => {
                let conv1 = Conv1dParams::init(k, d, c, rng);
                let conv2 = Conv1dParams::init(k, c, c, rng);
                Body::Cnn { conv1, conv2 }
            }
        };
        NetParams {
            body,
            head: AffineParams::init(head_inputs(cfg), N_LOGITS, rng),
        }
    }

    pub fn zeros_like(&self) -> NetParams {
        let body = match &self.body {
            Body::BiLstm { fwd, bwd, conv } => Body::BiLstm {
                fwd: fwd.zeros_like(),
                bwd: bwd.zeros_like(),
                conv: conv.zeros_like(),
            },
            Body::Lstm { cell } => Body::Lstm {
                cell: cell.zeros_like(),
            },
            Body::Cnn { conv1, conv2 } => Body::Cnn {
                conv1: conv1.zeros_like(),
                conv2: conv2.zeros_like(),
            },
        };
        NetParams {
            body,
            head: self.head.zeros_like(),
        }
    }

    /// Named tensors in declaration order (the checkpoint order).
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.body {
            Body::BiLstm { fwd, bwd, conv } => {
                push_lstm("bilstm.fwd", fwd, &mut out);
                push_lstm("bilstm.bwd", bwd, &mut out);
                out.push(("conv.kernels".into(), &conv.kernels));
                out.push(("conv.bias".into(), &conv.bias));
            }
            Body::Lstm { cell } => push_lstm("lstm", cell, &mut out),
            Body::Cnn { conv1, conv2 } => {
                out.push(("conv1.kernels".into(), &conv1.kernels));
                out.push(("conv1.bias".into(), &conv1.bias));
                out.push(("conv2.kernels".into(), &conv2.kernels));
                out.push(("conv2.bias".into(), &conv2.bias));
            }
        }
        out.push(("dense.weight".into(), &self.head.weight));
        out.push(("dense.bias".into(), &self.head.bias));
        out
    }

    /// Mutable tensors in the same order as [`NetParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        match &mut self.body {
            Body::BiLstm { fwd, bwd, conv } => {
                out.extend(fwd.tensors_mut());
                out.extend(bwd.tensors_mut());
                out.push(&mut conv.kernels);
                out.push(&mut conv.bias);
            }
            Body::Lstm { cell } => out.extend(cell.tensors_mut()),
            Body::Cnn { conv1, conv2 } => {
                out.push(&mut conv1.kernels);
                out.push(&mut conv1.bias);
                out.push(&mut conv2.kernels);
                out.push(&mut conv2.bias);
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_recurrent(&self) -> bool {
        !matches!(self.body, Body::Cnn { .. })
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &NetParams, scale: f32) {
        let theirs = other.tensors();
        for (mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.data_mut().iter_mut().zip(t.data()) {
                *a += scale * b;
            }
        }
    }
}

fn push_lstm<'a>(prefix: &str, p: &'a LstmCellParams, out: &mut Vec<(String, &'a Tensor)>) {
    for (name, t) in p.tensors() {
        out.push((format!("{prefix}.{name}"), t));
    }
}

/// Intermediate values of one forward pass.
pub struct ForwardCache {
    mask: ChannelMask,
    body: BodyCache,
    head: AffineCache<f32>,
}

enum BodyCache {
    BiLstm {
        lstm: BiLstmCache<f32>,
        conv: Conv1dCache<f32>,
        pool: PoolCache,
    },
    Lstm {
        seq: LstmSeqCache<f32>,
        t_len: usize,
    },
    Cnn {
        conv1: Conv1dCache<f32>,
        conv2: Conv1dCache<f32>,
        pool: PoolCache,
    },
}

/// Stacks the composed vectors of the tokens into a `[T, d]` matrix.
pub fn embed_tokens(table: &EmbeddingTable, pieces: &[TokenPieces]) -> Tensor {
    let d = table.dim();
    let mut x = Tensor::zeros(&[pieces.len(), d]);
    for (t, p) in pieces.iter().enumerate() {
        table.compose(p, x.row_mut(t));
    }
    x
}

/// Logits for one non-empty example.
pub fn forward<R: Rng + ?Sized>(
    params: &NetParams,
    dropout_rate: f64,
    x: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f32>, ForwardCache)> {
    if x.rows() == 0 {
        return Err(Error::InvalidInput("forward pass over an empty sequence".into()));
    }
    let (x, mask) = spatial_dropout(x, dropout_rate, mode, rng)?;
    let (features, body) = match &params.body {
        Body::BiLstm { fwd, bwd, conv } => {
            let (h, lstm) = bilstm_forward(&x, fwd, bwd)?;
            let (c, conv_cache) = conv1d_forward(&h, conv)?;
            let (pooled, pool) = global_pool_concat(&c, None)?;
            (
                pooled,
                BodyCache::BiLstm {
                    lstm,
                    conv: conv_cache,
                    pool,
                },
            )
        }
        Body::Lstm { cell } => {
            let (h, seq) = lstm_sequence(&x, cell, false)?;
            let t_len = h.rows();
            (h.row(t_len - 1).to_vec(), BodyCache::Lstm { seq, t_len })
        }
        Body::Cnn { conv1, conv2 } => {
            let (c1, cache1) = conv1d_forward(&x, conv1)?;
            let (c2, cache2) = conv1d_forward(&c1, conv2)?;
            let (pooled, pool) = global_pool_concat(&c2, None)?;
            (
                pooled,
                BodyCache::Cnn {
                    conv1: cache1,
                    conv2: cache2,
                    pool,
                },
            )
        }
    };
    let (logits, head) = affine(&features, &params.head, Activation::Identity)?;
    Ok((logits, ForwardCache { mask, body, head }))
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the (pre-dropout) embedded input.
pub fn backward(params: &NetParams, cache: &ForwardCache, dlogits: &[f32], grads: &mut NetParams) -> Tensor {
    let dfeat = affine_backward(&cache.head, dlogits, &params.head, &mut grads.head);
    let dx = match (&params.body, &cache.body, &mut grads.body) {
        (
            Body::BiLstm { fwd, bwd, conv },
            BodyCache::BiLstm {
                lstm,
                conv: conv_cache,
                pool,
            },
            Body::BiLstm {
                fwd: gf,
                bwd: gb,
                conv: gc,
            },
        ) => {
            let dc = global_pool_backward(pool, &dfeat);
            let dh = conv1d_backward(conv_cache, &dc, conv, gc);
            bilstm_backward(lstm, &dh, fwd, bwd, gf, gb)
        }
        (Body::Lstm { cell }, BodyCache::Lstm { seq, t_len }, Body::Lstm { cell: gcell }) => {
            let mut dh = Tensor::zeros(&[*t_len, cell.d_hidden()]);
            dh.row_mut(t_len - 1).copy_from_slice(&dfeat);
            lstm_sequence_backward(seq, &dh, cell, gcell)
        }
        (
            Body::Cnn { conv1, conv2 },
            BodyCache::Cnn {
                conv1: c1,
                conv2: c2,
                pool,
            },
            Body::Cnn { conv1: g1, conv2: g2 },
        ) => {
            let d2 = global_pool_backward(pool, &dfeat);
            let d1 = conv1d_backward(c2, &d2, conv2, g2);
            conv1d_backward(c1, &d1, conv1, g1)
        }
        _ => unreachable!("parameter, cache and gradient bodies share one architecture"),
    };
    cache.mask.apply(&dx)
}

/// Spreads the input gradient onto the embedding rows of each token.
pub fn embedding_backward(table: &EmbeddingTable, pieces: &[TokenPieces], dx: &Tensor, acc: &mut SparseRowGrad) {
    for (t, p) in pieces.iter().enumerate() {
        table.accumulate_grad(p, dx.row(t), acc);
    }
}

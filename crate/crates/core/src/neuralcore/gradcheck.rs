//! Central-difference gradient checking for the layer set.
//!
//! Each probe packs an op's parameters and input into one flat vector `θ`,
//! reduces the op's output to a scalar with a fixed random projection
//! `L(θ) = Σ r ⊙ op(θ)`, and compares the analytic gradient of `L` with
//! `(L(θ+ε·e_i) − L(θ−ε·e_i)) / 2ε` on every coordinate.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv1d_backward, conv1d_forward, Conv1dParams};
use super::dense::{affine, affine_backward, Activation, AffineParams};
use super::dropout::{spatial_dropout, Mode};
use super::loss::{multitask_loss_and_grad, N_LOGITS};
use super::lstm::{
    bilstm_backward, bilstm_forward, lstm_sequence, lstm_sequence_backward, lstm_step, lstm_step_backward,
    LstmCellParams,
};
use super::pool::{global_pool_backward, global_pool_concat};
use super::tensor::Tensor;
use crate::corpus::{Aspect, LabelSet, Polarity};
use crate::error::{Error, Result};

/// Denominator floor in the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub n_coords: usize,
}

/// Compares `analytic` against central differences of `loss` at `theta`.
pub fn finite_diff_check(
    theta: &[f64],
    eps: f64,
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    analytic: &[f64],
) -> Result<GradCheckReport> {
    if !(1e-5..=1e-2).contains(&eps) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step {eps} outside [1e-5, 1e-2]"
        )));
    }
    if analytic.len() != theta.len() {
        return Err(Error::Shape(format!(
            "{} analytic gradients for {} coordinates",
            analytic.len(),
            theta.len()
        )));
    }
    let mut probe = theta.to_vec();
    let mut eval = |p: &[f64]| -> Result<f64> {
        let v = loss(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("loss during gradient check".into()))
        }
    };
    eval(theta)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        n_coords: theta.len(),
    };
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = eval(&probe)?;
        probe[i] = theta[i] - eps;
        let down = eval(&probe)?;
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// The differentiable ops covered by the checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Affine,
    AffineSoftmax,
    Conv1d,
    LstmStep,
    LstmSequence,
    BiLstm,
    Pool,
    MaskedPool,
    Loss,
    SpatialDropout,
}

impl OpKind {
    pub const ALL: [OpKind; 10] = [
        OpKind::Affine,
        OpKind::AffineSoftmax,
        OpKind::Conv1d,
        OpKind::LstmStep,
        OpKind::LstmSequence,
        OpKind::BiLstm,
        OpKind::Pool,
        OpKind::MaskedPool,
        OpKind::Loss,
        OpKind::SpatialDropout,
    ];
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpKind::Affine => "affine",
            OpKind::AffineSoftmax => "affine+softmax",
            OpKind::Conv1d => "conv1d",
            OpKind::LstmStep => "lstm_step",
            OpKind::LstmSequence => "lstm_sequence",
            OpKind::BiLstm => "bilstm",
            OpKind::Pool => "pool",
            OpKind::MaskedPool => "pool(masked)",
            OpKind::Loss => "multitask_loss",
            OpKind::SpatialDropout => "spatial_dropout(train, fixed mask)",
        };
        f.write_str(s)
    }
}

/// Result of checking one op on one randomly drawn shape.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: OpKind,
    pub shape: String,
    pub report: GradCheckReport,
}

/// Sequential reader over a flat parameter vector.
struct Unpack<'a> {
    theta: &'a [f64],
    pos: usize,
}

impl<'a> Unpack<'a> {
    fn new(theta: &'a [f64]) -> Self {
        Unpack { theta, pos: 0 }
    }

    fn take(&mut self, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let t = Tensor::new(shape.to_vec(), self.theta[self.pos..self.pos + n].to_vec()).expect("sized slice");
        self.pos += n;
        t
    }

    fn fill(&mut self, t: &mut Tensor<f64>) {
        let n = t.len();
        t.data_mut().copy_from_slice(&self.theta[self.pos..self.pos + n]);
        self.pos += n;
    }

    fn lstm(&mut self, d_in: usize, d_h: usize) -> LstmCellParams<f64> {
        let mut p = LstmCellParams::zeros(d_in, d_h);
        for t in p.tensors_mut() {
            self.fill(t);
        }
        p
    }
}

fn flatten_lstm(p: &LstmCellParams<f64>, out: &mut Vec<f64>) {
    for (_, t) in p.tensors() {
        out.extend_from_slice(t.data());
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Eval = Box<dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)>>;

fn uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Builds `(θ, evaluator, shape description)` for `op` with dimensions
/// drawn from `rng` (sequence length ≤ 6, widths ≤ 5).
fn build_probe(op: OpKind, rng: &mut ChaCha8Rng) -> (Vec<f64>, Eval, String) {
    let t_len = rng.gen_range(1..=6usize);
    let d_in = rng.gen_range(1..=5usize);
    let d_out = rng.gen_range(1..=5usize);
    match op {
        OpKind::Affine | OpKind::AffineSoftmax => {
            let act = if op == OpKind::Affine {
                Activation::Identity
            } else {
                Activation::Softmax
            };
            let d_out = if act == Activation::Softmax {
                d_out.max(2)
            } else {
                d_out
            };
            let theta = uniform(d_out * d_in + d_out + d_in, rng);
            let r = uniform(d_out, rng);
            let eval: Eval = Box::new(move |th| {
                let mut u = Unpack::new(th);
                let p = AffineParams {
                    weight: u.take(&[d_out, d_in]),
                    bias: u.take(&[d_out]),
                };
                let x = u.take(&[d_in]);
                let (y, cache) = affine(x.data(), &p, act)?;
                let mut g = p.zeros_like();
                let dx = affine_backward(&cache, &r, &p, &mut g);
                let mut grad = g.weight.into_data();
                grad.extend(g.bias.into_data());
                grad.extend(dx);
                Ok((dot(&y, &r), grad))
            });
            (theta, eval, format!("in={d_in} out={d_out}"))
        }
        OpKind::Conv1d => {
            let k = [1usize, 3, 5][rng.gen_range(0..3)];
            let theta = uniform(k * d_in * d_out + d_out + t_len * d_in, rng);
            let r = uniform(t_len * d_out, rng);
            let eval: Eval = Box::new(move |th| {
                let mut u = Unpack::new(th);
                let p = Conv1dParams {
                    kernels: u.take(&[k, d_in, d_out]),
                    bias: u.take(&[d_out]),
                };
                let x = u.take(&[t_len, d_in]);
                let (y, cache) = conv1d_forward(&x, &p)?;
                let dy = Tensor::new(vec![t_len, d_out], r.clone())?;
                let mut g = p.zeros_like();
                let dx = conv1d_backward(&cache, &dy, &p, &mut g);
                let mut grad = g.kernels.into_data();
                grad.extend(g.bias.into_data());
                grad.extend(dx.into_data());
                Ok((dot(y.data(), &r), grad))
            });
            (theta, eval, format!("T={t_len} k={k} c_in={d_in} c_out={d_out}"))
        }
        OpKind::LstmStep => {
            let d_h = d_out;
            let n_params = LstmCellParams::<f64>::zeros(d_in, d_h).param_count();
            let theta = uniform(n_params + d_in + 2 * d_h, rng);
            let (rh, rc) = (uniform(d_h, rng), uniform(d_h, rng));
            let eval: Eval = Box::new(move |th| {
                let mut u = Unpack::new(th);
                let p = u.lstm(d_in, d_h);
                let x = u.take(&[d_in]);
                let h0 = u.take(&[d_h]);
                let c0 = u.take(&[d_h]);
                let (h, c, cache) = lstm_step(x.data(), h0.data(), c0.data(), &p)?;
                let mut g = p.zeros_like();
                let (dx, dh0, dc0) = lstm_step_backward(&cache, &rh, &rc, &p, &mut g);
                let mut grad = Vec::with_capacity(th.len());
                flatten_lstm(&g, &mut grad);
                grad.extend(dx);
                grad.extend(dh0);
                grad.extend(dc0);
                Ok((dot(&h, &rh) + dot(&c, &rc), grad))
            });
            (theta, eval, format!("d_in={d_in} d_h={d_h}"))
        }
        OpKind::LstmSequence => {
            let d_h = d_out;
            let reverse = rng.gen_bool(0.5);
            let n_params = LstmCellParams::<f64>::zeros(d_in, d_h).param_count();
            let theta = uniform(n_params + t_len * d_in, rng);
            let r = uniform(t_len * d_h, rng);
            let eval: Eval = Box::new(move |th| {
                let mut u = Unpack::new(th);
                let p = u.lstm(d_in, d_h);
                let x = u.take(&[t_len, d_in]);
                let (y, cache) = lstm_sequence(&x, &p, reverse)?;
                let dy = Tensor::new(vec![t_len, d_h], r.clone())?;
                let mut g = p.zeros_like();
                let dx = lstm_sequence_backward(&cache, &dy, &p, &mut g);
                let mut grad = Vec::with_capacity(th.len());
                flatten_lstm(&g, &mut grad);
                grad.extend(dx.into_data());
                Ok((dot(y.data(), &r), grad))
            });
            (
                theta,
                eval,
                format!("T={t_len} d_in={d_in} d_h={d_h} reverse={reverse}"),
            )
        }
        OpKind::BiLstm => {
            let d_h = d_out;
            let n_params = LstmCellParams::<f64>::zeros(d_in, d_h).param_count();
            let theta = uniform(2 * n_params + t_len * d_in, rng);
            let r = uniform(t_len * 2 * d_h, rng);
            let eval: Eval = Box::new(move |th| {
                let mut u = Unpack::new(th);
                let fwd = u.lstm(d_in, d_h);
                let bwd = u.lstm(d_in, d_h);
                let x = u.take(&[t_len, d_in]);
                let (y, cache) = bilstm_forward(&x, &fwd, &bwd)?;
                let dy = Tensor::new(vec![t_len, 2 * d_h], r.clone())?;
                let (mut gf, mut gb) = (fwd.zeros_like(), bwd.zeros_like());
                let dx = bilstm_backward(&cache, &dy, &fwd, &bwd, &mut gf, &mut gb);
                let mut grad = Vec::with_capacity(th.len());
                flatten_lstm(&gf, &mut grad);
                flatten_lstm(&gb, &mut grad);
                grad.extend(dx.into_data());
                Ok((dot(y.data(), &r), grad))
            });
            (theta, eval, format!("T={t_len} d_in={d_in} d_h={d_h}"))
        }
        OpKind::Pool | OpKind::MaskedPool => {
            let mask: Option<Vec<bool>> = (op == OpKind::MaskedPool).then(|| {
                let valid = rng.gen_range(1..=t_len);
                (0..t_len).map(|t| t < valid).collect()
            });
            let theta = uniform(t_len * d_in, rng);
            let r = uniform(2 * d_in, rng);
            let desc = format!("T={t_len} c={d_in} mask={mask:?}");
            let eval: Eval = Box::new(move |th| {
                let x = Tensor::new(vec![t_len, d_in], th.to_vec())?;
                let (y, cache) = global_pool_concat(&x, mask.as_deref())?;
                let dx = global_pool_backward(&cache, &r);
                Ok((dot(&y, &r), dx.into_data()))
            });
            (theta, eval, desc)
        }
        OpKind::Loss => {
            let theta: Vec<f64> = uniform(N_LOGITS, rng).into_iter().map(|v| 2.0 * v).collect();
            let mut gold = LabelSet::new();
            for &a in &Aspect::CONTENT {
                if rng.gen_bool(0.3) {
                    gold = gold.with(a, Polarity::ALL[rng.gen_range(0..3)]);
                }
            }
            if gold.is_empty() || rng.gen_bool(0.2) {
                gold = gold.with_others();
            }
            let desc = format!("gold={}", gold.to_label_string());
            let eval: Eval = Box::new(move |th| multitask_loss_and_grad(th, &gold, None));
            (theta, eval, desc)
        }
        OpKind::SpatialDropout => {
            let theta = uniform(t_len * d_in, rng);
            let r = uniform(t_len * d_in, rng);
            let x0 = Tensor::new(vec![t_len, d_in], theta.clone()).expect("sized");
            let (_, mask) = spatial_dropout(&x0, 0.3, Mode::Train, rng).expect("valid rate");
            let desc = format!("T={t_len} d={d_in} scales={:?}", mask.scales);
            let eval: Eval = Box::new(move |th| {
                let x = Tensor::new(vec![t_len, d_in], th.to_vec())?;
                let y = mask.apply(&x);
                let dy = Tensor::new(vec![t_len, d_in], r.clone())?;
                Ok((dot(y.data(), &r), mask.apply(&dy).into_data()))
            });
            (theta, eval, desc)
        }
    }
}

/// Checks `op` on one random shape drawn from `seed`.
pub fn check_op(op: OpKind, seed: u64, eps: f64) -> Result<OpCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (theta, eval, shape) = build_probe(op, &mut rng);
    let (_, analytic) = eval(&theta)?;
    let report = finite_diff_check(&theta, eps, |th| eval(th).map(|(l, _)| l), &analytic)?;
    Ok(OpCheck { op, shape, report })
}

/// Checks every op on `shapes_per_op` random shapes each.
pub fn check_all(shapes_per_op: usize, seed: u64, eps: f64) -> Result<Vec<OpCheck>> {
    let mut out = Vec::with_capacity(shapes_per_op * OpKind::ALL.len());
    for (k, &op) in OpKind::ALL.iter().enumerate() {
        for s in 0..shapes_per_op {
            let sub = seed ^ ((k as u64) << 32) ^ (s as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            out.push(check_op(op, sub, eps)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let theta = [0.3, -1.2, 2.0];
        let grad: Vec<f64> = theta.iter().map(|v| 2.0 * v).collect();
        let r = finite_diff_check(&theta, 1e-3, |t| Ok(t.iter().map(|v| v * v).sum()), &grad).unwrap();
        assert!(r.max_rel_error < 1e-9);
        assert_eq!(r.n_coords, 3);
    }

    #[test]
    fn rejects_bad_eps_and_non_finite_loss() {
        let theta = [1.0];
        assert!(finite_diff_check(&theta, 1e-7, |_| Ok(0.0), &[0.0]).is_err());
        assert!(finite_diff_check(&theta, 0.1, |_| Ok(0.0), &[0.0]).is_err());
        assert!(matches!(
            finite_diff_check(&theta, 1e-3, |_| Ok(f64::NAN), &[0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn affine_passes() {
        let c = check_op(OpKind::Affine, 7, 1e-3).unwrap();
        assert!(c.report.max_rel_error <= 1e-4, "{c:?}");
    }

    #[test]
    fn lstm_step_passes() {
        let c = check_op(OpKind::LstmStep, 11, 1e-5).unwrap();
        assert!(c.report.max_rel_error <= 1e-6, "{c:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (theta, eval, _) = build_probe(OpKind::LstmStep, &mut rng);
        let (_, mut grad) = eval(&theta).unwrap();
        let i = grad
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        grad[i] *= 1.1;
        let r = finite_diff_check(&theta, 1e-5, |t| eval(t).map(|(l, _)| l), &grad).unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");
        assert_eq!(r.worst_index, i);
    }

    #[test]
    fn every_op_passes_in_double_precision() {
        for c in check_all(3, 2024, 1e-5).unwrap() {
            assert!(c.report.max_rel_error <= 1e-6, "{} {}: {:?}", c.op, c.shape, c.report);
        }
    }
}

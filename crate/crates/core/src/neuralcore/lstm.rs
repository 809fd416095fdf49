//! LSTM cell, unidirectional sequences and the bidirectional wrapper.
//!
//! Gates: `i = σ(W_i x + U_i h + b_i)`, `f`, `o` likewise, `g = tanh(...)`;
//! `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.

use rand::Rng;

use super::tensor::{glorot_bound, matvec_acc, matvec_t_acc, outer_acc, sigmoid, Scalar, Tensor};
use crate::error::{Error, Result};

pub const INPUT: usize = 0;
pub const FORGET: usize = 1;
pub const OUTPUT: usize = 2;
pub const CANDIDATE: usize = 3;
const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "candidate"];

/// Weights of one LSTM unit, indexed by gate (`INPUT`, `FORGET`, `OUTPUT`,
/// `CANDIDATE`). `w[g]` is `[d_h, d_in]`, `u[g]` is `[d_h, d_h]`, `b[g]` is `[d_h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams<F = f32> {
    pub w: [Tensor<F>; 4],
    pub u: [Tensor<F>; 4],
    pub b: [Tensor<F>; 4],
}

impl<F: Scalar> LstmCellParams<F> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        LstmCellParams {
            w: std::array::from_fn(|_| Tensor::zeros(&[d_h, d_in])),
            u: std::array::from_fn(|_| Tensor::zeros(&[d_h, d_h])),
            b: std::array::from_fn(|_| Tensor::zeros(&[d_h])),
        }
    }

    /// Glorot-uniform weights, zero biases except a forget bias of 1.
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_h: usize, rng: &mut R) -> Self {
        let wb = glorot_bound(d_in, d_h);
        let ub = glorot_bound(d_h, d_h);
        let mut p = LstmCellParams {
            w: std::array::from_fn(|_| Tensor::uniform(&[d_h, d_in], wb, rng)),
            u: std::array::from_fn(|_| Tensor::uniform(&[d_h, d_h], ub, rng)),
            b: std::array::from_fn(|_| Tensor::zeros(&[d_h])),
        };
        p.b[FORGET].data_mut().iter_mut().for_each(|v| *v = F::one());
        p
    }

    pub fn d_in(&self) -> usize {
        self.w[0].cols()
    }

    pub fn d_hidden(&self) -> usize {
        self.w[0].rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in(), self.d_hidden())
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::with_capacity(12);
        for g in 0..4 {
            out.push((format!("w_{}", GATE_NAMES[g]), &self.w[g]));
            out.push((format!("u_{}", GATE_NAMES[g]), &self.u[g]));
            out.push((format!("b_{}", GATE_NAMES[g]), &self.b[g]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let LstmCellParams { w, u, b } = self;
        let mut out = Vec::with_capacity(12);
        for ((w, u), b) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
            out.push(w);
            out.push(u);
            out.push(b);
        }
        out
    }

    pub fn cast<G: Scalar>(&self) -> LstmCellParams<G> {
        LstmCellParams {
            w: std::array::from_fn(|g| self.w[g].cast()),
            u: std::array::from_fn(|g| self.u[g].cast()),
            b: std::array::from_fn(|g| self.b[g].cast()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Activations saved by [`lstm_step`] for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmStepCache<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    gates: [Vec<F>; 4],
    tanh_c: Vec<F>,
}

pub fn lstm_step<F: Scalar>(
    x: &[F],
    h_prev: &[F],
    c_prev: &[F],
    p: &LstmCellParams<F>,
) -> Result<(Vec<F>, Vec<F>, LstmStepCache<F>)> {
    let d_h = p.d_hidden();
    if x.len() != p.d_in() || h_prev.len() != d_h || c_prev.len() != d_h {
        return Err(Error::Shape(format!(
            "lstm step expects x[{}], h[{d_h}], c[{d_h}]; got x[{}], h[{}], c[{}]",
            p.d_in(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let gates: [Vec<F>; 4] = std::array::from_fn(|g| {
        let mut a = p.b[g].data().to_vec();
        matvec_acc(&p.w[g], x, &mut a);
        matvec_acc(&p.u[g], h_prev, &mut a);
        if g == CANDIDATE {
            a.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            a.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        a
    });
    let mut c = vec![F::zero(); d_h];
    let mut h = vec![F::zero(); d_h];
    let mut tanh_c = vec![F::zero(); d_h];
    for k in 0..d_h {
        c[k] = gates[FORGET][k] * c_prev[k] + gates[INPUT][k] * gates[CANDIDATE][k];
        tanh_c[k] = c[k].tanh();
        h[k] = gates[OUTPUT][k] * tanh_c[k];
    }
    let cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
    };
    Ok((h, c, cache))
}

/// Given upstream `dh` and `dc` for the step outputs, accumulates parameter
/// gradients into `grads` and returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward<F: Scalar>(
    cache: &LstmStepCache<F>,
    dh: &[F],
    dc: &[F],
    p: &LstmCellParams<F>,
    grads: &mut LstmCellParams<F>,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let d_h = p.d_hidden();
    let one = F::one();
    let [gi, gf, go, gg] = &cache.gates;
    let mut pre: [Vec<F>; 4] = std::array::from_fn(|_| vec![F::zero(); d_h]);
    let mut dc_prev = vec![F::zero(); d_h];
    for k in 0..d_h {
        let tc = cache.tanh_c[k];
        let d_o = dh[k] * tc;
        let dct = dc[k] + dh[k] * go[k] * (one - tc * tc);
        let d_i = dct * gg[k];
        let d_g = dct * gi[k];
        let d_f = dct * cache.c_prev[k];
        dc_prev[k] = dct * gf[k];
        pre[INPUT][k] = d_i * gi[k] * (one - gi[k]);
        pre[FORGET][k] = d_f * gf[k] * (one - gf[k]);
        pre[OUTPUT][k] = d_o * go[k] * (one - go[k]);
        pre[CANDIDATE][k] = d_g * (one - gg[k] * gg[k]);
    }
    let mut dx = vec![F::zero(); p.d_in()];
    let mut dh_prev = vec![F::zero(); d_h];
    for g in 0..4 {
        outer_acc(&mut grads.w[g], &pre[g], &cache.x);
        outer_acc(&mut grads.u[g], &pre[g], &cache.h_prev);
        for (b, d) in grads.b[g].data_mut().iter_mut().zip(&pre[g]) {
            *b += *d;
        }
        matvec_t_acc(&p.w[g], &pre[g], &mut dx);
        matvec_t_acc(&p.u[g], &pre[g], &mut dh_prev);
    }
    (dx, dh_prev, dc_prev)
}

#[derive(Clone, Debug)]
pub struct LstmSeqCache<F> {
    steps: Vec<LstmStepCache<F>>,
    reverse: bool,
}

/// Runs the cell over the rows of `x` (`[T, d_in]`) from zero states,
/// back to front when `reverse`. Row `t` of the output is the hidden state
/// after reading input row `t`.
pub fn lstm_sequence<F: Scalar>(
    x: &Tensor<F>,
    p: &LstmCellParams<F>,
    reverse: bool,
) -> Result<(Tensor<F>, LstmSeqCache<F>)> {
    let t_len = x.rows();
    if t_len == 0 {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    if x.cols() != p.d_in() {
        return Err(Error::Shape(format!(
            "sequence has {} features, cell expects {}",
            x.cols(),
            p.d_in()
        )));
    }
    let d_h = p.d_hidden();
    let mut out = Tensor::zeros(&[t_len, d_h]);
    let mut h = vec![F::zero(); d_h];
    let mut c = vec![F::zero(); d_h];
    let mut steps = Vec::with_capacity(t_len);
    for s in 0..t_len {
        let t = if reverse { t_len - 1 - s } else { s };
        let (h_next, c_next, cache) = lstm_step(x.row(t), &h, &c, p)?;
        out.row_mut(t).copy_from_slice(&h_next);
        h = h_next;
        c = c_next;
        steps.push(cache);
    }
    Ok((out, LstmSeqCache { steps, reverse }))
}

/// Backpropagation through time. `dout` is `[T, d_h]`, matching the output of
/// [`lstm_sequence`]; returns `dx` of shape `[T, d_in]`.
pub fn lstm_sequence_backward<F: Scalar>(
    cache: &LstmSeqCache<F>,
    dout: &Tensor<F>,
    p: &LstmCellParams<F>,
    grads: &mut LstmCellParams<F>,
) -> Tensor<F> {
    let t_len = cache.steps.len();
    let d_h = p.d_hidden();
    let mut dx = Tensor::zeros(&[t_len, p.d_in()]);
    let mut dh_next = vec![F::zero(); d_h];
    let mut dc_next = vec![F::zero(); d_h];
    for s in (0..t_len).rev() {
        let t = if cache.reverse { t_len - 1 - s } else { s };
        let dh: Vec<F> = dout.row(t).iter().zip(&dh_next).map(|(a, b)| *a + *b).collect();
        let (dxt, dh_prev, dc_prev) = lstm_step_backward(&cache.steps[s], &dh, &dc_next, p, grads);
        dx.row_mut(t).copy_from_slice(&dxt);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    dx
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<F> {
    fwd: LstmSeqCache<F>,
    bwd: LstmSeqCache<F>,
}

/// Row `t` is `[h_fwd[t], h_bwd[t]]`, with the backward unit reading the
/// sequence in reverse.
pub fn bilstm_forward<F: Scalar>(
    x: &Tensor<F>,
    fwd: &LstmCellParams<F>,
    bwd: &LstmCellParams<F>,
) -> Result<(Tensor<F>, BiLstmCache<F>)> {
    let (hf, cf) = lstm_sequence(x, fwd, false)?;
    let (hb, cb) = lstm_sequence(x, bwd, true)?;
    let t_len = x.rows();
    let (df, db) = (fwd.d_hidden(), bwd.d_hidden());
    let mut out = Tensor::zeros(&[t_len, df + db]);
    for t in 0..t_len {
        let row = out.row_mut(t);
        row[..df].copy_from_slice(hf.row(t));
        row[df..].copy_from_slice(hb.row(t));
    }
    Ok((out, BiLstmCache { fwd: cf, bwd: cb }))
}

pub fn bilstm_backward<F: Scalar>(
    cache: &BiLstmCache<F>,
    dout: &Tensor<F>,
    fwd: &LstmCellParams<F>,
    bwd: &LstmCellParams<F>,
    grad_fwd: &mut LstmCellParams<F>,
    grad_bwd: &mut LstmCellParams<F>,
) -> Tensor<F> {
    let t_len = dout.rows();
    let df = fwd.d_hidden();
    let mut d_f = Tensor::zeros(&[t_len, df]);
    let mut d_b = Tensor::zeros(&[t_len, bwd.d_hidden()]);
    for t in 0..t_len {
        d_f.row_mut(t).copy_from_slice(&dout.row(t)[..df]);
        d_b.row_mut(t).copy_from_slice(&dout.row(t)[df..]);
    }
    let mut dx = lstm_sequence_backward(&cache.fwd, &d_f, fwd, grad_fwd);
    dx.add_assign(&lstm_sequence_backward(&cache.bwd, &d_b, bwd, grad_bwd));
    dx
}

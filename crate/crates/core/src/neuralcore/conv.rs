use rand::Rng;

use super::tensor::{glorot_bound, Scalar, Tensor};
use crate::error::{Error, Result};

/// Kernels `[k, c_in, c_out]` and bias `[c_out]` of a same-padded 1-D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1dParams<F = f32> {
    pub kernels: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Scalar> Conv1dParams<F> {
    pub fn zeros(k: usize, c_in: usize, c_out: usize) -> Self {
        Conv1dParams {
            kernels: Tensor::zeros(&[k, c_in, c_out]),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn init<R: Rng + ?Sized>(k: usize, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Conv1dParams {
            kernels: Tensor::uniform(&[k, c_in, c_out], glorot_bound(k * c_in, k * c_out), rng),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn width(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.width(), self.c_in(), self.c_out())
    }

    pub fn cast<G: Scalar>(&self) -> Conv1dParams<G> {
        Conv1dParams {
            kernels: self.kernels.cast(),
            bias: self.bias.cast(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv1dCache<F> {
    x: Tensor<F>,
    y: Tensor<F>,
}

/// Cross-correlation over time with zero padding (`T` rows in, `T` rows
/// out) followed by ReLU.
pub fn conv1d_forward<F: Scalar>(x: &Tensor<F>, p: &Conv1dParams<F>) -> Result<(Tensor<F>, Conv1dCache<F>)> {
    let k = p.width();
    if k.is_multiple_of(2) {
        return Err(Error::Shape(format!("kernel width {k} must be odd")));
    }
    if x.cols() != p.c_in() || p.bias.len() != p.c_out() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels and {} biases, got {} and {}",
            p.c_in(),
            p.c_out(),
            x.cols(),
            p.bias.len()
        )));
    }
    let (t_len, c_in, c_out) = (x.rows(), p.c_in(), p.c_out());
    let half = k / 2;
    let kd = p.kernels.data();
    let mut y = Tensor::zeros(&[t_len, c_out]);
    for t in 0..t_len {
        let out = y.row_mut(t);
        out.copy_from_slice(p.bias.data());
        for j in 0..k {
            let Some(src) = (t + j).checked_sub(half).filter(|&s| s < t_len) else {
                continue;
            };
            let xr = x.row(src);
            for (c, &xv) in xr.iter().enumerate() {
                if xv == F::zero() {
                    continue;
                }
                let krow = &kd[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                for (o, &w) in out.iter_mut().zip(krow) {
                    *o += w * xv;
                }
            }
        }
        for v in out.iter_mut() {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
    }
    Ok((y.clone(), Conv1dCache { x: x.clone(), y }))
}

pub fn conv1d_backward<F: Scalar>(
    cache: &Conv1dCache<F>,
    dy: &Tensor<F>,
    p: &Conv1dParams<F>,
    grads: &mut Conv1dParams<F>,
) -> Tensor<F> {
    let (k, c_in, c_out) = (p.width(), p.c_in(), p.c_out());
    let t_len = cache.x.rows();
    let half = k / 2;
    let mut dx = Tensor::zeros(&[t_len, c_in]);
    let kd = p.kernels.data();
    for t in 0..t_len {
        let dpre: Vec<F> = dy
            .row(t)
            .iter()
            .zip(cache.y.row(t))
            .map(|(&g, &out)| if out > F::zero() { g } else { F::zero() })
            .collect();
        if dpre.iter().all(|&v| v == F::zero()) {
            continue;
        }
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&dpre) {
            *b += *d;
        }
        for j in 0..k {
            let Some(src) = (t + j).checked_sub(half).filter(|&s| s < t_len) else {
                continue;
            };
            for c in 0..c_in {
                let base = (j * c_in + c) * c_out;
                let xv = cache.x.row(src)[c];
                let gk = &mut grads.kernels.data_mut()[base..base + c_out];
                let mut acc = F::zero();
                for o in 0..c_out {
                    gk[o] += xv * dpre[o];
                    acc += kd[base + o] * dpre[o];
                }
                dx.row_mut(src)[c] += acc;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_passes_nonnegative_input() {
        let mut p = Conv1dParams::<f64>::zeros(1, 3, 3);
        for c in 0..3 {
            p.kernels.data_mut()[c * 3 + c] = 1.0;
        }
        let x = Tensor::new(vec![2, 3], vec![0.0, 1.5, 2.0, 3.0, 0.25, 7.0]).unwrap();
        let (y, _) = conv1d_forward(&x, &p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernels_unit_bias() {
        let mut p = Conv1dParams::<f64>::zeros(3, 2, 4);
        p.bias.data_mut().iter_mut().for_each(|b| *b = 1.0);
        let x = Tensor::from_fn(&[5, 2], |i| i as f64 - 3.0);
        let (y, _) = conv1d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[5, 4]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_even_kernel_and_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[3, 2]);
        assert!(conv1d_forward(&x, &Conv1dParams::zeros(2, 2, 2)).is_err());
        assert!(conv1d_forward(&x, &Conv1dParams::zeros(3, 3, 2)).is_err());
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::uniform(&[4, 2], 1.0, &mut rng);
        let p = Conv1dParams {
            kernels: Tensor::uniform(&[3, 2, 3], 1.0, &mut rng),
            bias: Tensor::uniform(&[3], 0.3, &mut rng),
        };
        let (y, _) = conv1d_forward(&x, &p).unwrap();
        for t in 0..4i64 {
            for o in 0..3 {
                let mut s = p.bias.data()[o];
                for j in 0..3i64 {
                    let src = t + j - 1;
                    if !(0..4).contains(&src) {
                        continue;
                    }
                    for c in 0..2 {
                        s += x.row(src as usize)[c] * p.kernels.data()[(j as usize * 2 + c) * 3 + o];
                    }
                }
                let expected = s.max(0.0);
                assert!((y.row(t as usize)[o] - expected).abs() < 1e-6);
            }
        }
    }
}

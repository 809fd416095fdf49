use rand::Rng;

use super::tensor::{glorot_bound, matvec_acc, matvec_t_acc, outer_acc, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Softmax,
}

/// `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineParams<F = f32> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Scalar> AffineParams<F> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        AffineParams {
            weight: Tensor::zeros(&[n_out, n_in]),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        AffineParams {
            weight: Tensor::uniform(&[n_out, n_in], glorot_bound(n_in, n_out), rng),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in(), self.n_out())
    }

    pub fn cast<G: Scalar>(&self) -> AffineParams<G> {
        AffineParams {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

pub fn softmax<F: Scalar>(z: &[F]) -> Vec<F> {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax at output `y`.
pub fn softmax_backward<F: Scalar>(y: &[F], dy: &[F]) -> Vec<F> {
    let dot: F = y.iter().zip(dy).map(|(a, b)| *a * *b).sum();
    y.iter().zip(dy).map(|(&p, &g)| p * (g - dot)).collect()
}

#[derive(Clone, Debug)]
pub struct AffineCache<F> {
    x: Vec<F>,
    y: Vec<F>,
    activation: Activation,
}

pub fn affine<F: Scalar>(x: &[F], p: &AffineParams<F>, activation: Activation) -> Result<(Vec<F>, AffineCache<F>)> {
    if x.len() != p.n_in() || p.bias.len() != p.n_out() {
        return Err(Error::Shape(format!(
            "affine expects {} inputs and {} biases, got {} and {}",
            p.n_in(),
            p.n_out(),
            x.len(),
            p.bias.len()
        )));
    }
    let mut z = p.bias.data().to_vec();
    matvec_acc(&p.weight, x, &mut z);
    let y = match activation {
        Activation::Identity => z,
        Activation::Softmax => softmax(&z),
    };
    Ok((
        y.clone(),
        AffineCache {
            x: x.to_vec(),
            y,
            activation,
        },
    ))
}

pub fn affine_backward<F: Scalar>(
    cache: &AffineCache<F>,
    dy: &[F],
    p: &AffineParams<F>,
    grads: &mut AffineParams<F>,
) -> Vec<F> {
    let dz = match cache.activation {
        Activation::Identity => dy.to_vec(),
        Activation::Softmax => softmax_backward(&cache.y, dy),
    };
    outer_acc(&mut grads.weight, &dz, &cache.x);
    for (b, d) in grads.bias.data_mut().iter_mut().zip(&dz) {
        *b += *d;
    }
    let mut dx = vec![F::zero(); p.n_in()];
    matvec_t_acc(&p.weight, &dz, &mut dx);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_softmax_is_uniform() {
        let p = AffineParams::<f64>::zeros(3, 4);
        let (y, _) = affine(&[1.0, 2.0, 3.0], &p, Activation::Softmax).unwrap();
        assert_eq!(y, vec![0.25; 4]);
    }

    #[test]
    fn identity_weight_is_identity() {
        let mut p = AffineParams::<f64>::zeros(3, 3);
        for i in 0..3 {
            p.weight.data_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.5, -2.0, 7.0];
        let (y, _) = affine(&x, &p, Activation::Identity).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn matches_scalar_oracle_and_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = AffineParams::<f64>::init(5, 4, &mut rng);
        let p = AffineParams {
            bias: Tensor::uniform(&[4], 0.5, &mut rng),
            ..p
        };
        let x = [0.1, -0.4, 0.3, 0.9, -0.2];
        let (y, _) = affine(&x, &p, Activation::Softmax).unwrap();
        let z: Vec<f64> = (0..4)
            .map(|o| p.bias.data()[o] + (0..5).map(|i| p.weight.data()[o * 5 + i] * x[i]).sum::<f64>())
            .collect();
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        for o in 0..4 {
            assert!((y[o] - z[o].exp() / denom).abs() < 1e-12);
        }
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let p = AffineParams::<f64>::zeros(3, 2);
        assert!(affine(&[1.0, 2.0], &p, Activation::Identity).is_err());
    }
}

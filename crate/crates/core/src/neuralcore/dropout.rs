use rand::Rng;

use super::tensor::{lit, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel multipliers drawn by [`spatial_dropout`]: 0 for a dropped
/// channel, `1/(1-rate)` for a kept one.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMask<F = f32> {
    pub scales: Vec<F>,
}

impl<F: Scalar> ChannelMask<F> {
    pub fn identity(channels: usize) -> Self {
        ChannelMask {
            scales: vec![F::one(); channels],
        }
    }

    /// Multiplies every row of `x` by the channel scales. The same map is
    /// its own backward pass.
    pub fn apply(&self, x: &Tensor<F>) -> Tensor<F> {
        let mut y = x.clone();
        for t in 0..y.rows() {
            for (v, s) in y.row_mut(t).iter_mut().zip(&self.scales) {
                *v *= *s;
            }
        }
        y
    }
}

/// Channel-wise dropout over a `[T, d]` sequence: each of the `d` channels
/// is zeroed for all timesteps with probability `rate`.
pub fn spatial_dropout<F: Scalar, R: Rng + ?Sized>(
    x: &Tensor<F>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<F>, ChannelMask<F>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("dropout rate {rate} outside [0, 1)")));
    }
    let d = x.cols();
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), ChannelMask::identity(d)));
    }
    let keep: F = lit(1.0 / (1.0 - rate));
    let scales = (0..d)
        .map(|_| if rng.gen_bool(rate) { F::zero() } else { keep })
        .collect();
    let mask = ChannelMask { scales };
    Ok((mask.apply(x), mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq() -> Tensor<f64> {
        Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, _) = spatial_dropout(&seq(), 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(y, seq());
        let (y, _) = spatial_dropout(&seq(), 0.9, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, seq());
    }

    #[test]
    fn rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(spatial_dropout(&seq(), 1.0, Mode::Train, &mut rng).is_err());
        assert!(spatial_dropout(&seq(), -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropped_channel_is_zero_across_time() {
        let mask = ChannelMask { scales: vec![2.0, 0.0] };
        let y = mask.apply(&seq());
        assert_eq!(y.data(), &[2.0, 0.0, 6.0, 0.0, 10.0, 0.0]);
    }

    #[test]
    fn sampled_masks_are_channelwise_and_seeded() {
        let x = Tensor::<f64>::from_fn(&[5, 64], |_| 1.0);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let (ya, ma) = spatial_dropout(&x, 0.5, Mode::Train, &mut a).unwrap();
        let (yb, _) = spatial_dropout(&x, 0.5, Mode::Train, &mut b).unwrap();
        assert_eq!(ya, yb);
        for c in 0..64 {
            let col: Vec<f64> = (0..5).map(|t| ya.row(t)[c]).collect();
            assert!(col.iter().all(|&v| v == col[0]));
            assert!(col[0] == 0.0 || col[0] == 2.0);
            assert_eq!(col[0], ma.scales[c]);
        }
        assert!(ma.scales.contains(&0.0) && ma.scales.contains(&2.0));
    }
}

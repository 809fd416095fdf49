use super::tensor::{lit, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct PoolCache {
    rows: usize,
    valid: Vec<usize>,
    argmax: Vec<usize>,
}

/// Concatenation of the per-channel mean and per-channel max over time.
/// `mask[t] == false` excludes row `t` from both statistics.
pub fn global_pool_concat<F: Scalar>(x: &Tensor<F>, mask: Option<&[bool]>) -> Result<(Vec<F>, PoolCache)> {
    let (t_len, c) = (x.rows(), x.cols());
    if let Some(m) = mask {
        if m.len() != t_len {
            return Err(Error::Shape(format!("mask has {} entries for {t_len} rows", m.len())));
        }
    }
    let valid: Vec<usize> = (0..t_len).filter(|&t| mask.is_none_or(|m| m[t])).collect();
    if valid.is_empty() {
        return Err(Error::InvalidInput(
            "pooling over a sequence with no unmasked positions".into(),
        ));
    }
    let inv: F = lit(1.0 / valid.len() as f64);
    let mut out = vec![F::zero(); 2 * c];
    let mut argmax = vec![valid[0]; c];
    for ch in 0..c {
        out[c + ch] = x.row(valid[0])[ch];
    }
    for &t in &valid {
        let row = x.row(t);
        for ch in 0..c {
            out[ch] += row[ch];
            if row[ch] > out[c + ch] {
                out[c + ch] = row[ch];
                argmax[ch] = t;
            }
        }
    }
    out[..c].iter_mut().for_each(|v| *v *= inv);
    Ok((
        out,
        PoolCache {
            rows: t_len,
            valid,
            argmax,
        },
    ))
}

pub fn global_pool_backward<F: Scalar>(cache: &PoolCache, dout: &[F]) -> Tensor<F> {
    let c = cache.argmax.len();
    let mut dx = Tensor::zeros(&[cache.rows, c]);
    let inv: F = lit(1.0 / cache.valid.len() as f64);
    for &t in &cache.valid {
        for (d, g) in dx.row_mut(t).iter_mut().zip(&dout[..c]) {
            *d += *g * inv;
        }
    }
    for (ch, &t) in cache.argmax.iter().enumerate() {
        dx.row_mut(t)[ch] += dout[c + ch];
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_then_max() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 3.0, 2.0, 0.0]).unwrap();
        let (y, _) = global_pool_concat(&x, None).unwrap();
        assert_eq!(y, vec![1.5, 1.5, 2.0, 3.0]);
    }

    #[test]
    fn single_row_and_constant() {
        let x = Tensor::new(vec![1, 3], vec![4.0, -1.0, 0.5]).unwrap();
        let (y, _) = global_pool_concat(&x, None).unwrap();
        assert_eq!(y, vec![4.0, -1.0, 0.5, 4.0, -1.0, 0.5]);
        let x = Tensor::from_fn(&[4, 2], |_| 2.5f64);
        let (y, _) = global_pool_concat(&x, None).unwrap();
        assert_eq!(y, vec![2.5; 4]);
    }

    #[test]
    fn masked_rows_are_ignored() {
        let x = Tensor::new(vec![3, 1], vec![1.0, 3.0, 100.0]).unwrap();
        let (y, _) = global_pool_concat(&x, Some(&[true, true, false])).unwrap();
        assert_eq!(y, vec![2.0, 3.0]);
        assert!(global_pool_concat(&x, Some(&[false, false, false])).is_err());
    }
}

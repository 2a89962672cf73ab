//! Per-positive losses over a shared set of negative scores.

use crate::error::{KgeError, Result};
use crate::real::Real;

/// `B × N` validity mask over shared negatives; `false` drops the pair
/// from the loss (used to filter false negatives).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeMask {
    positives: usize,
    negatives: usize,
    keep: Vec<bool>,
}

impl NegativeMask {
    pub fn all(positives: usize, negatives: usize) -> Self {
        NegativeMask {
            positives,
            negatives,
            keep: vec![true; positives * negatives],
        }
    }

    pub fn from_rows(positives: usize, negatives: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != positives * negatives {
            return Err(KgeError::Shape(format!(
                "mask has {} cells, expected {positives}×{negatives}",
                keep.len()
            )));
        }
        Ok(NegativeMask {
            positives,
            negatives,
            keep,
        })
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.negatives
    }

    pub fn row(&self, b: usize) -> &[bool] {
        &self.keep[b * self.negatives..(b + 1) * self.negatives]
    }

    pub fn get(&self, b: usize, i: usize) -> bool {
        self.keep[b * self.negatives + i]
    }

    pub fn is_all_ones(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }
}

/// `log σ(x)` computed as `-softplus(-x)`.
#[inline]
pub fn log_sigmoid<T: Real>(x: T) -> T {
    -softplus(-x)
}

#[inline]
pub fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check_negatives(n: usize) -> Result<()> {
    if n == 0 {
        return Err(KgeError::Shape("loss requires at least one negative".into()));
    }
    Ok(())
}

/// Self-adversarial weights `softmax(a · f_neg)` over the kept entries.
/// Dropped entries get weight 0. An all-dropped row yields all zeros.
pub fn adversarial_weights<T: Real>(neg: &[T], keep: Option<&[bool]>, temperature: T) -> Vec<T> {
    let kept = |i: usize| keep.map_or(true, |k| k[i]);
    let max = (0..neg.len())
        .filter(|&i| kept(i))
        .map(|i| temperature * neg[i])
        .fold(T::neg_infinity(), T::max);
    let mut w: Vec<T> = (0..neg.len())
        .map(|i| {
            if kept(i) {
                (temperature * neg[i] - max).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = w.iter().copied().sum();
    if total > T::zero() {
        for x in &mut w {
            *x = *x / total;
        }
    }
    w
}

/// Log-sigmoid loss with self-adversarial negative weighting.
///
/// Returns the loss and the weights `w_i`, which are constants with respect
/// to differentiation.
pub fn log_sigmoid_loss<T: Real>(pos: T, neg: &[T], margin: T, temperature: T) -> Result<(T, Vec<T>)> {
    check_negatives(neg.len())?;
    let w = adversarial_weights(neg, None, temperature);
    let loss = log_sigmoid_with_weights(pos, neg, &w, margin);
    Ok((loss, w))
}

/// Log-sigmoid loss for externally fixed weights.
pub fn log_sigmoid_with_weights<T: Real>(pos: T, neg: &[T], weights: &[T], margin: T) -> T {
    let mut loss = -log_sigmoid(margin + pos);
    for (f, w) in neg.iter().zip(weights) {
        loss = loss - *w * log_sigmoid(-margin - *f);
    }
    loss
}

/// Loss plus `∂L/∂f_pos`, with `∂L/∂f_neg` written into `d_neg`.
pub(crate) fn log_sigmoid_grad<T: Real>(
    pos: T,
    neg: &[T],
    keep: Option<&[bool]>,
    margin: T,
    temperature: T,
    d_neg: &mut [T],
) -> (T, T) {
    let w = adversarial_weights(neg, keep, temperature);
    let loss = log_sigmoid_with_weights(pos, neg, &w, margin);
    let d_pos = -sigmoid(-margin - pos);
    for i in 0..neg.len() {
        d_neg[i] = w[i] * sigmoid(margin + neg[i]);
    }
    (loss, d_pos)
}

/// Sampled softmax cross entropy with the `log((|E| − 1)/N)` correction
/// on negative logits.
pub fn sampled_softmax_ce_loss<T: Real>(pos: T, neg: &[T], entity_count: usize) -> Result<T> {
    check_negatives(neg.len())?;
    if entity_count < 2 {
        return Err(KgeError::Shape("sampled softmax needs at least 2 entities".into()));
    }
    let mut scratch = vec![T::zero(); neg.len()];
    Ok(sampled_softmax_grad(pos, neg, None, entity_count, &mut scratch).0)
}

/// `c = log((|E| − 1)/N)`.
pub fn softmax_correction<T: Real>(entity_count: usize, negatives: usize) -> T {
    T::lit(((entity_count - 1) as f64 / negatives as f64).ln())
}

pub(crate) fn sampled_softmax_grad<T: Real>(
    pos: T,
    neg: &[T],
    keep: Option<&[bool]>,
    entity_count: usize,
    d_neg: &mut [T],
) -> (T, T) {
    let kept = |i: usize| keep.map_or(true, |k| k[i]);
    let n_kept = (0..neg.len()).filter(|&i| kept(i)).count();
    if n_kept == 0 {
        d_neg.iter_mut().for_each(|g| *g = T::zero());
        return (T::zero(), T::zero());
    }
    let c: T = softmax_correction(entity_count, n_kept);
    let max = (0..neg.len())
        .filter(|&i| kept(i))
        .map(|i| neg[i] + c)
        .fold(pos, T::max);
    let e_pos = (pos - max).exp();
    let mut total = e_pos;
    for i in 0..neg.len() {
        d_neg[i] = if kept(i) { (neg[i] + c - max).exp() } else { T::zero() };
        total = total + d_neg[i];
    }
    let lse = max + total.ln();
    for g in d_neg.iter_mut() {
        *g = *g / total;
    }
    (lse - pos, e_pos / total - T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_temperature_gives_uniform_weights() {
        let (_, w) = log_sigmoid_loss(0.3f64, &[1.0, -2.0, 5.0, 0.0], 1.0, 0.0).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_negative_at_zero() {
        let (l, _) = log_sigmoid_loss(0.0f64, &[0.0], 0.0, 1.0).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_negatives_rejected() {
        assert!(log_sigmoid_loss(0.0f64, &[], 0.0, 1.0).is_err());
        assert!(sampled_softmax_ce_loss(0.0f64, &[], 10).is_err());
    }

    #[test]
    fn correction_vanishes_at_full_enumeration() {
        assert_eq!(softmax_correction::<f64>(11, 10), 0.0);
    }

    #[test]
    fn dominant_positive_has_vanishing_loss() {
        let l = sampled_softmax_ce_loss(1e4f64, &[0.0, 1.0, -3.0], 1000).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn extreme_scores_stay_finite() {
        for s in [-1e4f64, -50.0, 0.0, 50.0, 1e4] {
            let (l, _) = log_sigmoid_loss(s, &[-s, s, 0.0], 3.0, 1.0).unwrap();
            assert!(l.is_finite(), "{s}");
            let (l32, _) = log_sigmoid_loss(s as f32, &[-s as f32, s as f32], 3.0, 1.0).unwrap();
            assert!(l32.is_finite(), "{s}");
        }
    }

    #[test]
    fn masked_weights_renormalise() {
        let w = adversarial_weights(&[1.0f64, 2.0, 3.0], Some(&[true, false, true]), 1.0);
        assert_eq!(w[1], 0.0);
        assert!((w[0] + w[2] - 1.0).abs() < 1e-15);
    }
}

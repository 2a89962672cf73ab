//! L3 regularisation of final embeddings, shallow embeddings and feature
//! projections.

use crate::real::Real;

/// `Σ|x|³`, or `(Σ|x|³)^{1/3}` when `plain_norm` is set.
pub fn l3_penalty<T: Real>(x: &[T], plain_norm: bool) -> T {
    let cubed: T = x.iter().map(|v| v.abs().powi(3)).sum();
    if plain_norm {
        cubed.cbrt()
    } else {
        cubed
    }
}

/// Adds `scale · ∂penalty/∂x` into `grad`.
pub fn l3_penalty_grad<T: Real>(x: &[T], plain_norm: bool, scale: T, grad: &mut [T]) {
    let three = T::lit(3.0);
    if plain_norm {
        // ∂‖x‖₃/∂x_i = x_i|x_i| / ‖x‖₃²
        let norm = l3_penalty(x, true);
        if norm > T::zero() {
            let denom = norm * norm;
            for (g, &v) in grad.iter_mut().zip(x) {
                *g = *g + scale * v * v.abs() / denom;
            }
        }
    } else {
        for (g, &v) in grad.iter_mut().zip(x) {
            *g = *g + scale * three * v * v.abs();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegWeights {
    pub lambda_t: f64,
    pub lambda_s: f64,
    pub lambda_f: f64,
}

impl RegWeights {
    pub fn is_zero(&self) -> bool {
        self.lambda_t == 0.0 && self.lambda_s == 0.0 && self.lambda_f == 0.0
    }
}

/// `λ_T·Ω_T + λ_S·Ω_S + λ_F·Ω_F`.
///
/// Each slice is a row-major stack of `dim`-wide vectors: every head,
/// positive tail and (shared) negative tail of the micro-batch, once.
/// `finals` are the encoder outputs, `shallow` the trainable components and
/// `projected` the feature projections `M·e_F`.
pub fn l3_regulariser<T: Real>(
    finals: &[T],
    shallow: &[T],
    projected: &[T],
    dim: usize,
    weights: RegWeights,
    plain_norm: bool,
) -> T {
    let omega = |rows: &[T]| -> T {
        if dim == 0 {
            return T::zero();
        }
        rows.chunks(dim).map(|r| l3_penalty(r, plain_norm)).sum()
    };
    T::lit(weights.lambda_t) * omega(finals)
        + T::lit(weights.lambda_s) * omega(shallow)
        + T::lit(weights.lambda_f) * omega(projected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_embeddings_have_zero_penalty() {
        let z = [0.0f64; 12];
        let w = RegWeights {
            lambda_t: 1.0,
            lambda_s: 2.0,
            lambda_f: 3.0,
        };
        assert_eq!(l3_regulariser(&z, &z, &z, 4, w, false), 0.0);
        assert_eq!(l3_regulariser(&z, &z, &z, 4, w, true), 0.0);
    }

    #[test]
    fn single_positive_final_term() {
        // h = [1, -1], t = [0, 0], no negatives
        let finals = [1.0f64, -1.0, 0.0, 0.0];
        let w = RegWeights {
            lambda_t: 1.0,
            ..Default::default()
        };
        assert_eq!(l3_regulariser(&finals, &[0.0; 4], &[0.0; 4], 2, w, false), 2.0);
    }

    #[test]
    fn cubed_gradient_is_three_x_abs_x() {
        let x = [0.5f64, -2.0, 0.0];
        let mut g = [0.0; 3];
        l3_penalty_grad(&x, false, 0.1, &mut g);
        for (gi, xi) in g.iter().zip(x) {
            assert!((gi - 3.0 * 0.1 * xi * xi.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn plain_norm_gradient_matches_finite_difference() {
        let x = [0.7f64, -1.3, 0.2];
        let mut g = [0.0; 3];
        l3_penalty_grad(&x, true, 1.0, &mut g);
        let h = 1e-6;
        for i in 0..3 {
            let (mut a, mut b) = (x, x);
            a[i] += h;
            b[i] -= h;
            let fd = (l3_penalty(&a, true) - l3_penalty(&b, true)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}

use rand::Rng;

use super::SharedParams;
use crate::error::{KgeError, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Head,
    Tail,
}

/// `out = M · features` for a row-major `d × F` matrix.
#[inline]
pub fn project<T: Real>(matrix: &[T], features: &[T], out: &mut [T]) {
    let f = features.len();
    if f == 0 {
        out.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    for (o, row) in out.iter_mut().zip(matrix.chunks(f)) {
        let mut acc = T::zero();
        for (m, x) in row.iter().zip(features) {
            acc = acc + *m * *x;
        }
        *o = acc;
    }
}

/// Final entity embedding `e_S + dropout(M_role · e_F)`.
///
/// `mask` holds the inverted-dropout multipliers (`0` or `1/(1−rate)`);
/// `None` means evaluation mode.
pub fn encode_entity<T: Real>(
    shallow: &[T],
    features: &[T],
    role: Role,
    params: &SharedParams<T>,
    mask: Option<&[T]>,
) -> Result<Vec<T>> {
    let d = params.embedding_dim;
    if shallow.len() != d || features.len() != params.feature_dim {
        return Err(KgeError::Shape(format!(
            "encoder expects e_S of {d} and e_F of {}, got {} and {}",
            params.feature_dim,
            shallow.len(),
            features.len()
        )));
    }
    if mask.is_some_and(|m| m.len() != d) {
        return Err(KgeError::Shape("dropout mask width differs from d".into()));
    }
    let matrix = match role {
        Role::Head => params.head_proj(),
        Role::Tail => params.tail_proj(),
    };
    let mut out = vec![T::zero(); d];
    project(matrix, features, &mut out);
    for i in 0..d {
        let m = mask.map_or(T::one(), |m| m[i]);
        out[i] = shallow[i] + m * out[i];
    }
    Ok(out)
}

/// Inverted-dropout multipliers for one micro-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    /// `B × d`
    pub head: Vec<T>,
    /// `B × d`
    pub tail: Vec<T>,
    /// `N × d`
    pub negative: Vec<T>,
}

impl<T: Real> DropoutMasks<T> {
    /// Draws head, tail then negative masks in that order from `rng`.
    pub fn sample<R: Rng>(rate: f64, positives: usize, negatives: usize, dim: usize, rng: &mut R) -> Self {
        let keep = T::lit(1.0 / (1.0 - rate));
        let mut draw = |n: usize| -> Vec<T> {
            (0..n)
                .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
                .collect()
        };
        let head = draw(positives * dim);
        let tail = draw(positives * dim);
        let negative = draw(negatives * dim);
        DropoutMasks {
            head,
            tail,
            negative,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize, f: usize) -> SharedParams<f64> {
        let cfg = ModelConfig {
            embedding_dim: d,
            feature_dim: f,
            ..Default::default()
        };
        SharedParams::zeros(&cfg, 1)
    }

    #[test]
    fn zero_features_or_matrix_leave_shallow() {
        let mut p = params(4, 3);
        let s = [0.1, -0.2, 0.3, 0.4];
        assert_eq!(encode_entity(&s, &[0.0; 3], Role::Head, &p, None).unwrap(), s);
        assert_eq!(encode_entity(&s, &[1.0, 2.0, 3.0], Role::Tail, &p, None).unwrap(), s);
        p.proj_head.iter_mut().for_each(|x| *x = 1.0);
        assert_eq!(encode_entity(&s, &[0.0; 3], Role::Head, &p, None).unwrap(), s);
    }

    #[test]
    fn matches_dense_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = params(4, 3);
        for x in p.proj_head.iter_mut().chain(p.proj_tail.iter_mut()) {
            *x = rng.gen_range(-1.0..1.0);
        }
        let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = encode_entity(&s, &f, Role::Tail, &p, None).unwrap();
        for i in 0..4 {
            let dot = p.proj_tail[i * 3] * f[0] + p.proj_tail[i * 3 + 1] * f[1] + p.proj_tail[i * 3 + 2] * f[2];
            assert!((out[i] - (s[i] + dot)).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_in_shallow_part() {
        let mut p = params(3, 2);
        p.proj_head = vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
        let f = [0.3, -0.6];
        let s = [1.0, -2.0, 0.5];
        let alpha = 3.0;
        let scaled: Vec<f64> = s.iter().map(|x| alpha * x).collect();
        let a = encode_entity(&scaled, &f, Role::Head, &p, None).unwrap();
        let z = encode_entity(&[0.0; 3], &f, Role::Head, &p, None).unwrap();
        for i in 0..3 {
            assert_eq!(a[i] - z[i], alpha * s[i]);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = params(4, 3);
        assert!(encode_entity(&[0.0; 3], &[0.0; 3], Role::Head, &p, None).is_err());
    }

    #[test]
    fn dropout_mask_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = DropoutMasks::<f64>::sample(0.5, 2, 3, 8, &mut rng);
        assert_eq!(m.negative.len(), 24);
        assert!(m.head.iter().all(|&x| x == 0.0 || x == 2.0));
        assert!(m.head.iter().any(|&x| x == 0.0));
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal, Uniform};

use super::{ModelConfig, ScoreFunction};
use crate::error::{KgeError, Result};
use crate::real::{Real, StoragePrecision};
use crate::seed::derive_seed;

/// Parameters other than entity embeddings: relation table, TransH normals
/// and the head/tail feature projections. The same shape doubles as the
/// gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedParams<T> {
    pub relation_count: usize,
    pub relation_dim: usize,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub tied: bool,
    /// `R × k`
    pub relations: Vec<T>,
    /// `R × d`, empty unless the score function is TransH.
    pub normals: Vec<T>,
    /// `d × F`, row-major.
    pub proj_head: Vec<T>,
    /// `d × F`; empty when projections are tied.
    pub proj_tail: Vec<T>,
}

impl<T: Real> SharedParams<T> {
    pub fn zeros(config: &ModelConfig, relation_count: usize) -> Self {
        let d = config.embedding_dim;
        let k = config.relation_dim();
        let f = config.feature_dim;
        SharedParams {
            relation_count,
            relation_dim: k,
            embedding_dim: d,
            feature_dim: f,
            tied: config.tie_projections,
            relations: vec![T::zero(); relation_count * k],
            normals: if config.score_fn == ScoreFunction::TransH {
                vec![T::zero(); relation_count * d]
            } else {
                Vec::new()
            },
            proj_head: vec![T::zero(); d * f],
            proj_tail: if config.tie_projections {
                Vec::new()
            } else {
                vec![T::zero(); d * f]
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        SharedParams {
            relations: vec![T::zero(); self.relations.len()],
            normals: vec![T::zero(); self.normals.len()],
            proj_head: vec![T::zero(); self.proj_head.len()],
            proj_tail: vec![T::zero(); self.proj_tail.len()],
            ..*self
        }
    }

    pub fn relation(&self, r: usize) -> &[T] {
        &self.relations[r * self.relation_dim..(r + 1) * self.relation_dim]
    }

    pub fn normal(&self, r: usize) -> Option<&[T]> {
        if self.normals.is_empty() {
            None
        } else {
            Some(&self.normals[r * self.embedding_dim..(r + 1) * self.embedding_dim])
        }
    }

    pub fn head_proj(&self) -> &[T] {
        &self.proj_head
    }

    pub fn tail_proj(&self) -> &[T] {
        if self.tied {
            &self.proj_head
        } else {
            &self.proj_tail
        }
    }

    pub fn buffers(&self) -> [&Vec<T>; 4] {
        [&self.relations, &self.normals, &self.proj_head, &self.proj_tail]
    }

    pub fn buffers_mut(&mut self) -> [&mut Vec<T>; 4] {
        [
            &mut self.relations,
            &mut self.normals,
            &mut self.proj_head,
            &mut self.proj_tail,
        ]
    }

    pub fn len(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenation of all buffers in `buffers()` order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for b in self.buffers() {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(KgeError::Shape(format!(
                "flat parameter vector has {} values, expected {}",
                flat.len(),
                self.len()
            )));
        }
        let mut at = 0;
        for b in self.buffers_mut() {
            let n = b.len();
            b.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &SharedParams<T>) {
        for (dst, src) in self.buffers_mut().into_iter().zip(other.buffers()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a = *a + *b;
            }
        }
    }
}

/// Full (unsharded) model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub entity_count: usize,
    pub embedding_dim: usize,
    /// `|E| × d` shallow embeddings.
    pub entities: Vec<T>,
    pub shared: SharedParams<T>,
}

impl<T: Real> ModelParams<T> {
    /// Seeded initialisation. Entity rows are drawn in id order, so the
    /// result does not depend on how the table is later sharded.
    pub fn init(
        config: &ModelConfig,
        entity_count: usize,
        relation_count: usize,
        seed: u64,
        storage: StoragePrecision,
    ) -> Self {
        let d = config.embedding_dim;
        let scale = config.init_scale;
        let normal = Normal::new(0.0, scale).expect("positive scale");

        let mut erng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x656e74]));
        let mut entities: Vec<T> = (0..entity_count * d)
            .map(|_| T::lit(erng.sample(normal)))
            .collect();
        storage.quantize_slice(&mut entities);

        let mut shared = SharedParams::zeros(config, relation_count);
        let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x736872]));
        if config.score_fn == ScoreFunction::RotatE {
            let phase = Uniform::new(-std::f64::consts::PI, std::f64::consts::PI);
            for x in &mut shared.relations {
                *x = T::lit(srng.sample(phase));
            }
        } else {
            for x in &mut shared.relations {
                *x = T::lit(srng.sample(normal));
            }
        }
        for x in &mut shared.normals {
            *x = T::lit(srng.sample::<f64, _>(StandardNormal));
        }
        if config.feature_dim > 0 {
            let proj = Normal::new(0.0, scale / (config.feature_dim as f64).sqrt())
                .expect("positive scale");
            for x in shared.proj_head.iter_mut().chain(shared.proj_tail.iter_mut()) {
                *x = T::lit(srng.sample(proj));
            }
        }
        ModelParams {
            entity_count,
            embedding_dim: d,
            entities,
            shared,
        }
    }

    pub fn entity(&self, e: usize) -> &[T] {
        &self.entities[e * self.embedding_dim..(e + 1) * self.embedding_dim]
    }

    pub fn entity_mut(&mut self, e: usize) -> &mut [T] {
        &mut self.entities[e * self.embedding_dim..(e + 1) * self.embedding_dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig {
            embedding_dim: 4,
            feature_dim: 3,
            ..Default::default()
        };
        let a = ModelParams::<f32>::init(&cfg, 10, 2, 5, StoragePrecision::Single);
        let b = ModelParams::<f32>::init(&cfg, 10, 2, 5, StoragePrecision::Single);
        assert_eq!(a, b);
        assert_eq!(a.shared.proj_tail.len(), 12);
    }

    #[test]
    fn flatten_round_trip() {
        let cfg = ModelConfig {
            score_fn: ScoreFunction::TransH,
            embedding_dim: 4,
            feature_dim: 2,
            ..Default::default()
        };
        let p = ModelParams::<f64>::init(&cfg, 3, 2, 1, StoragePrecision::Double);
        let mut z = p.shared.zeros_like();
        z.load_flat(&p.shared.flatten()).unwrap();
        assert_eq!(z, p.shared);
    }
}

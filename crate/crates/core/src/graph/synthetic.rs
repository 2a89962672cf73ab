//! Seeded synthetic graphs with power-law relation frequencies.
//!
//! Entities are dealt into clusters of roughly 16 members (`e mod C`). Every
//! cluster has a standard-normal centre in a small latent space and every
//! relation a standard-normal translation. A triple's tail is drawn
//! uniformly from the cluster whose centre lies nearest to the head
//! cluster's centre plus the relation's translation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, WeightedAliasIndex};

use super::{EntityId, FeatureMatrix, KnowledgeGraph, RelationId, Triple};
use crate::error::{KgeError, Result};

const CLUSTER_SIZE: usize = 16;
const LATENT_DIM: usize = 8;
const FEATURE_STREAM: u64 = 0x6b67_6566_6561_7400;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub entity_count: usize,
    pub relation_count: usize,
    pub triple_count: usize,
    /// Power-law exponent: relation `r` has weight `(r + 1)^-skew`.
    pub skew: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(entity_count: usize, relation_count: usize, triple_count: usize, skew: f64, seed: u64) -> Self {
        SyntheticSpec {
            entity_count,
            relation_count,
            triple_count,
            skew,
            feature_dim: 0,
            seed,
        }
    }

    pub fn with_feature_dim(mut self, dim: usize) -> Self {
        self.feature_dim = dim;
        self
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<KnowledgeGraph> {
    if spec.entity_count < 2 {
        return Err(KgeError::config("synthetic.entity_count", "must be at least 2"));
    }
    if spec.triple_count < 1 {
        return Err(KgeError::config("synthetic.triple_count", "must be at least 1"));
    }
    if spec.relation_count < 1 {
        return Err(KgeError::config("synthetic.relation_count", "must be at least 1"));
    }
    if !spec.skew.is_finite() || spec.skew < 0.0 {
        return Err(KgeError::config("synthetic.skew", "must be finite and non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clusters = (spec.entity_count / CLUSTER_SIZE).max(1);
    let members: Vec<Vec<EntityId>> = (0..clusters)
        .map(|c| {
            (c..spec.entity_count)
                .step_by(clusters)
                .map(|e| e as EntityId)
                .collect()
        })
        .collect();
    let mut latent = || -> Vec<f64> { (0..LATENT_DIM).map(|_| rng.sample(StandardNormal)).collect() };
    let centres: Vec<Vec<f64>> = (0..clusters).map(|_| latent()).collect();
    let shifts: Vec<Vec<f64>> = (0..spec.relation_count).map(|_| latent()).collect();
    // target cluster of (relation, head cluster)
    let targets: Vec<Vec<usize>> = shifts
        .iter()
        .map(|shift| {
            centres
                .iter()
                .map(|from| {
                    let dist = |c: &Vec<f64>| -> f64 {
                        c.iter().zip(from).zip(shift).map(|((x, f), s)| (x - f - s).powi(2)).sum()
                    };
                    (0..clusters)
                        .min_by(|&a, &b| dist(&centres[a]).total_cmp(&dist(&centres[b])))
                        .expect("at least one cluster")
                })
                .collect()
        })
        .collect();

    let weights: Vec<f64> = (0..spec.relation_count)
        .map(|r| ((r + 1) as f64).powf(-spec.skew))
        .collect();
    let relation_dist = WeightedAliasIndex::new(weights)
        .map_err(|e| KgeError::config("synthetic.skew", e.to_string()))?;

    let mut triples = Vec::with_capacity(spec.triple_count);
    for _ in 0..spec.triple_count {
        let relation = rng.sample(&relation_dist) as RelationId;
        let head = rng.gen_range(0..spec.entity_count);
        let target = targets[relation as usize][head % clusters];
        let tail = *members[target].choose(&mut rng).expect("non-empty cluster");
        triples.push(Triple::new(head as EntityId, relation, tail));
    }

    let mut frng = ChaCha8Rng::seed_from_u64(spec.seed ^ FEATURE_STREAM);
    let data: Vec<f32> = (0..spec.entity_count * spec.feature_dim)
        .map(|_| frng.sample(StandardNormal))
        .collect();
    let features = FeatureMatrix::new(spec.entity_count, spec.feature_dim, data)?;
    KnowledgeGraph::new(spec.entity_count, spec.relation_count, triples, features)
}

/// Removes `count` randomly chosen triples, returning the remaining graph
/// and the held-out triples (in their original relative order).
pub fn split_holdout(
    graph: &KnowledgeGraph,
    count: usize,
    seed: u64,
) -> Result<(KnowledgeGraph, Vec<Triple>)> {
    let n = graph.triples().len();
    if count > n {
        return Err(KgeError::config(
            "holdout",
            format!("cannot hold out {count} of {n} triples"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, count) {
        held[i] = true;
    }
    let (mut train, mut out) = (Vec::with_capacity(n - count), Vec::with_capacity(count));
    for (t, h) in graph.triples().iter().zip(held) {
        if h {
            out.push(*t);
        } else {
            train.push(*t);
        }
    }
    Ok((graph.with_triples(train)?, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::new(1000, 10, 50_000, 1.0, 7).with_feature_dim(4);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn zero_skew_is_roughly_uniform() {
        let g = generate_synthetic(&SyntheticSpec::new(200, 4, 40_000, 0.0, 3)).unwrap();
        for &c in g.relation_counts() {
            // mean 10000, sd ≈ 87
            assert!((c as f64 - 10_000.0).abs() < 500.0, "{c}");
        }
    }

    #[test]
    fn strong_skew_concentrates_mass() {
        let g = generate_synthetic(&SyntheticSpec::new(100, 4, 10_000, 2.0, 1)).unwrap();
        let max = *g.relation_counts().iter().max().unwrap();
        assert!(max as f64 / 10_000.0 > 0.40, "{max}");
    }

    #[test]
    fn preconditions() {
        assert!(generate_synthetic(&SyntheticSpec::new(1, 1, 10, 1.0, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(10, 1, 0, 1.0, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(2, 1, 5, 1.0, 0)).is_ok());
    }

    #[test]
    fn holdout_partitions_triples() {
        let g = generate_synthetic(&SyntheticSpec::new(50, 3, 500, 1.0, 2)).unwrap();
        let (train, held) = split_holdout(&g, 100, 5).unwrap();
        assert_eq!(train.triples().len(), 400);
        assert_eq!(held.len(), 100);
        let mut all: Vec<Triple> = train.triples().iter().chain(&held).copied().collect();
        let mut orig = g.triples().to_vec();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }
}

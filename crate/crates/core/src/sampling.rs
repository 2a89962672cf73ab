//! Balanced micro-batch plans: cube-root relation sampling per bucket and
//! shard-balanced shared negatives.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::WeightedAliasIndex;
use rayon::prelude::*;

use crate::error::{KgeError, Result};
use crate::graph::{EntityId, EntityPartition, KnowledgeGraph, RelationId, TripleBuckets};
use crate::model::NegativeMask;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Positives per worker per step, `B`.
    pub micro_batch_size: usize,
    /// Shared negatives per worker per step, `N`.
    pub negative_count: usize,
    pub workers: usize,
    pub seed: u64,
    pub cube_root_relation_sampling: bool,
    /// Weight relations by their global training counts instead of the
    /// counts inside each bucket.
    pub global_relation_counts: bool,
    pub filter_false_negatives: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            micro_batch_size: 512,
            negative_count: 1024,
            workers: 1,
            seed: 0,
            cube_root_relation_sampling: true,
            global_relation_counts: false,
            filter_false_negatives: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let (b, n, d) = (self.micro_batch_size, self.negative_count, self.workers);
        if d == 0 {
            return Err(KgeError::config("runtime.workers", "must be at least 1"));
        }
        if d > b {
            return Err(KgeError::config(
                "sampler.micro_batch_size",
                format!("B={b} is smaller than D={d}"),
            ));
        }
        if d > n {
            return Err(KgeError::config(
                "sampler.negative_count",
                format!("N={n} is smaller than D={d}"),
            ));
        }
        if b % d != 0 {
            return Err(KgeError::config(
                "sampler.micro_batch_size",
                format!("B={b} is not a multiple of D={d}"),
            ));
        }
        if n % d != 0 {
            return Err(KgeError::config(
                "sampler.negative_count",
                format!("N={n} is not a multiple of D={d}"),
            ));
        }
        Ok(())
    }

    pub fn triples_per_bucket(&self) -> usize {
        self.micro_batch_size / self.workers
    }

    pub fn negatives_per_shard(&self) -> usize {
        self.negative_count / self.workers
    }
}

/// Index plan for one training step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroBatchPlan {
    pub step: u64,
    workers: usize,
    /// `B_{i,j}` at `i·D + j`: indices into the graph's triple list.
    triples: Vec<Vec<usize>>,
    /// `N_{i,j}` at `i·D + j`: real entities of shard `j`.
    negatives: Vec<Vec<EntityId>>,
    /// Buckets that were empty and sampled from `T_{i,·}` instead.
    fallbacks: Vec<(usize, usize)>,
}

impl MicroBatchPlan {
    pub fn from_parts(
        step: u64,
        workers: usize,
        triples: Vec<Vec<usize>>,
        negatives: Vec<Vec<EntityId>>,
    ) -> Result<Self> {
        if triples.len() != workers * workers || negatives.len() != workers * workers {
            return Err(KgeError::Sampler(format!(
                "plan needs {} buckets, got {} triple and {} negative lists",
                workers * workers,
                triples.len(),
                negatives.len()
            )));
        }
        Ok(MicroBatchPlan {
            step,
            workers,
            triples,
            negatives,
            fallbacks: Vec::new(),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn triples(&self, i: usize, j: usize) -> &[usize] {
        &self.triples[i * self.workers + j]
    }

    pub fn negatives(&self, i: usize, j: usize) -> &[EntityId] {
        &self.negatives[i * self.workers + j]
    }

    pub fn fallbacks(&self) -> &[(usize, usize)] {
        &self.fallbacks
    }

    /// Worker `i`'s positives in batch order: `B_{i,0}`, `B_{i,1}`, ...
    pub fn worker_triples(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.workers).flat_map(move |j| self.triples(i, j).iter().copied())
    }

    /// Worker `i`'s shared negatives in batch order: `N_{i,0}`, `N_{i,1}`, ...
    pub fn worker_negatives(&self, i: usize) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.workers).flat_map(move |j| self.negatives(i, j).iter().copied())
    }
}

/// Draws triples from one bucket: a relation by weight, then a uniform
/// triple among that relation's triples.
#[derive(Debug, Clone)]
pub struct RelationSampler {
    groups: Vec<(RelationId, Vec<usize>)>,
    alias: Option<WeightedAliasIndex<f64>>,
    all: Vec<usize>,
}

impl RelationSampler {
    /// `weight(r, n_r)` gives the unnormalised probability of relation `r`
    /// which occurs `n_r` times in `indices`. `None` samples uniformly.
    pub fn new(
        graph: &KnowledgeGraph,
        indices: &[usize],
        weight: Option<&dyn Fn(RelationId, u64) -> f64>,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(KgeError::Sampler("cannot sample from an empty bucket".into()));
        }
        let triples = graph.triples();
        let mut sorted: Vec<usize> = indices.to_vec();
        sorted.sort_by_key(|&k| (triples[k].relation, k));
        let mut groups: Vec<(RelationId, Vec<usize>)> = Vec::new();
        for k in sorted {
            let r = triples[k].relation;
            match groups.last_mut() {
                Some((last, v)) if *last == r => v.push(k),
                _ => groups.push((r, vec![k])),
            }
        }
        let alias = match weight {
            Some(w) => {
                let weights: Vec<f64> = groups.iter().map(|(r, v)| w(*r, v.len() as u64)).collect();
                Some(
                    WeightedAliasIndex::new(weights)
                        .map_err(|e| KgeError::Sampler(format!("relation weights: {e}")))?,
                )
            }
            None => None,
        };
        Ok(RelationSampler {
            groups,
            alias,
            all: indices.to_vec(),
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match &self.alias {
            Some(alias) => {
                let (_, members) = &self.groups[alias.sample(rng)];
                members[rng.gen_range(0..members.len())]
            }
            None => self.all[rng.gen_range(0..self.all.len())],
        }
    }

    /// Relations present, ascending by id.
    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.groups.iter().map(|(r, _)| *r)
    }
}

/// Reusable per-bucket sampling tables for one partitioned graph.
#[derive(Debug, Clone)]
pub struct PlanSampler {
    config: SamplerConfig,
    buckets: Vec<RelationSampler>,
    fallbacks: Vec<(usize, usize)>,
    shard_entities: Vec<Vec<EntityId>>,
}

impl PlanSampler {
    pub fn new(
        graph: &KnowledgeGraph,
        buckets: &TripleBuckets,
        partition: &EntityPartition,
        config: &SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.workers;
        if buckets.shard_count() != d || partition.shard_count() != d {
            return Err(KgeError::Sampler(format!(
                "sampler configured for D={d}, partition has {} shards",
                partition.shard_count()
            )));
        }
        let global = graph.relation_counts();
        let cube = |r: RelationId, local: u64| -> f64 {
            if config.global_relation_counts {
                (global[r as usize] as f64).cbrt()
            } else {
                (local as f64).cbrt()
            }
        };
        let weight: Option<&dyn Fn(RelationId, u64) -> f64> =
            if config.cube_root_relation_sampling { Some(&cube) } else { None };

        let mut tables = Vec::with_capacity(d * d);
        let mut fallbacks = Vec::new();
        for i in 0..d {
            let mut row_union: Option<RelationSampler> = None;
            for j in 0..d {
                let bucket = buckets.bucket(i, j);
                if bucket.is_empty() {
                    if row_union.is_none() {
                        let union: Vec<usize> = (0..d).flat_map(|jj| buckets.bucket(i, jj).iter().copied()).collect();
                        if union.is_empty() {
                            return Err(KgeError::Sampler(format!(
                                "worker {i} owns no training triples"
                            )));
                        }
                        row_union = Some(RelationSampler::new(graph, &union, weight)?);
                    }
                    log::warn!("bucket ({i},{j}) is empty; sampling from all of worker {i}'s triples");
                    fallbacks.push((i, j));
                    tables.push(row_union.clone().expect("built above"));
                } else {
                    tables.push(RelationSampler::new(graph, bucket, weight)?);
                }
            }
        }
        let shard_entities = (0..d).map(|j| partition.real_entities(j).to_vec()).collect();
        Ok(PlanSampler {
            config: config.clone(),
            buckets: tables,
            fallbacks,
            shard_entities,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Deterministic plan for `step`; every bucket draws from its own
    /// stream seeded by `(seed, step, i, j)`.
    pub fn sample(&self, step: u64) -> MicroBatchPlan {
        let d = self.config.workers;
        let bt = self.config.triples_per_bucket();
        let nt = self.config.negatives_per_shard();
        let seed = self.config.seed;
        let drawn: Vec<(Vec<usize>, Vec<EntityId>)> = (0..d * d)
            .into_par_iter()
            .map(|ij| {
                let (i, j) = (ij / d, ij % d);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, step, i as u64, j as u64]));
                let table = &self.buckets[ij];
                let triples = (0..bt).map(|_| table.sample(&mut rng)).collect();
                let pool = &self.shard_entities[j];
                let negatives = (0..nt).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
                (triples, negatives)
            })
            .collect();
        let (triples, negatives) = drawn.into_iter().unzip();
        MicroBatchPlan {
            step,
            workers: d,
            triples,
            negatives,
            fallbacks: self.fallbacks.clone(),
        }
    }
}

/// One-shot plan; prefer [`PlanSampler`] when sampling many steps.
pub fn sample_micro_batches(
    graph: &KnowledgeGraph,
    buckets: &TripleBuckets,
    partition: &EntityPartition,
    config: &SamplerConfig,
    step: u64,
) -> Result<MicroBatchPlan> {
    Ok(PlanSampler::new(graph, buckets, partition, config)?.sample(step))
}

/// `B × N` mask for worker `i`: zero where a shared negative equals the
/// positive's true tail and filtering is on.
pub fn make_shared_negative_mask(
    plan: &MicroBatchPlan,
    graph: &KnowledgeGraph,
    worker: usize,
    filter_false_negatives: bool,
) -> NegativeMask {
    let tails: Vec<EntityId> = plan.worker_triples(worker).map(|k| graph.triples()[k].tail).collect();
    let negatives: Vec<EntityId> = plan.worker_negatives(worker).collect();
    let (b, n) = (tails.len(), negatives.len());
    if !filter_false_negatives {
        return NegativeMask::all(b, n);
    }
    let keep = tails
        .iter()
        .flat_map(|t| negatives.iter().map(move |neg| neg != t))
        .collect();
    NegativeMask::from_rows(b, n, keep).expect("shape built from plan")
}

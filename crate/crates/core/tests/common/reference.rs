//! Single-process trainer holding the whole entity table. It replays a
//! `D`-worker plan as `D` micro-batches inside one step and applies one
//! textbook Adam update, with no sharding, fabric or row encoding.

#![allow(dead_code)]

use std::collections::BTreeMap;

use kge_core::graph::KnowledgeGraph;
use kge_core::model::{batch_forward_backward, BatchInput, DropoutMasks, ModelConfig, ModelParams};
use kge_core::runtime::DROPOUT_STREAM;
use kge_core::sampling::{make_shared_negative_mask, MicroBatchPlan};
use kge_core::seed::derive_seed;
use kge_core::{Real, StoragePrecision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct ReferenceTrainer<T> {
    pub cfg: ModelConfig,
    pub params: ModelParams<T>,
    pub features: Vec<T>,
    m: Vec<T>,
    v: Vec<T>,
    shared_m: Vec<T>,
    shared_v: Vec<T>,
    storage: StoragePrecision,
    betas: (f64, f64, f64),
    seed: u64,
    filter: bool,
    pub step: u64,
}

fn adam<T: Real>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], lr: T, t: u64, (b1, b2, eps): (f64, f64, f64)) {
    let one = T::one();
    let (b1t, b2t) = (T::lit(b1), T::lit(b2));
    let c1 = T::lit(1.0 - b1.powf(t as f64));
    let c2 = T::lit(1.0 - b2.powf(t as f64));
    for i in 0..p.len() {
        m[i] = b1t * m[i] + (one - b1t) * g[i];
        v[i] = b2t * v[i] + (one - b2t) * g[i] * g[i];
        p[i] = p[i] - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + T::lit(eps));
    }
}

impl<T: Real> ReferenceTrainer<T> {
    pub fn new(graph: &KnowledgeGraph, cfg: &ModelConfig, params: &ModelParams<T>, storage: StoragePrecision, seed: u64, filter: bool) -> Self {
        let mut params = params.clone();
        storage.quantize_slice(&mut params.entities);
        let mut features: Vec<T> = graph.features().as_slice().iter().map(|&x| T::lit(x as f64)).collect();
        storage.quantize_slice(&mut features);
        let n = params.entities.len();
        let s = params.shared.len();
        ReferenceTrainer {
            cfg: cfg.clone(),
            params,
            features,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            shared_m: vec![T::zero(); s],
            shared_v: vec![T::zero(); s],
            storage,
            betas: (0.9, 0.999, 1e-8),
            seed,
            filter,
            step: 0,
        }
    }

    fn rows(&self, ids: &[u32]) -> (Vec<T>, Vec<T>) {
        let d = self.cfg.embedding_dim;
        let f = self.cfg.feature_dim;
        let mut s = Vec::new();
        let mut feats = Vec::new();
        for &e in ids {
            let e = e as usize;
            s.extend_from_slice(&self.params.entities[e * d..(e + 1) * d]);
            feats.extend_from_slice(&self.features[e * f..(e + 1) * f]);
        }
        (s, feats)
    }

    /// Returns the mean micro-batch objective.
    pub fn step(&mut self, graph: &KnowledgeGraph, plan: &MicroBatchPlan, lr: f64) -> f64 {
        let d = self.cfg.embedding_dim;
        let workers = plan.workers();
        let triples = graph.triples();
        let mut entity_grads: BTreeMap<u32, Vec<T>> = BTreeMap::new();
        let mut shared_total = vec![T::zero(); self.params.shared.len()];
        let mut loss = 0.0;
        let mut add = |e: u32, g: &[T]| {
            let acc = entity_grads.entry(e).or_insert_with(|| vec![T::zero(); d]);
            for (a, x) in acc.iter_mut().zip(g) {
                *a = *a + *x;
            }
        };
        for i in 0..workers {
            let positives: Vec<usize> = plan.worker_triples(i).collect();
            let heads: Vec<u32> = positives.iter().map(|&k| triples[k].head).collect();
            let tails: Vec<u32> = positives.iter().map(|&k| triples[k].tail).collect();
            let rels: Vec<u32> = positives.iter().map(|&k| triples[k].relation).collect();
            let negs: Vec<u32> = plan.worker_negatives(i).collect();
            let (hs, hf) = self.rows(&heads);
            let (ts, tf) = self.rows(&tails);
            let (ns, nf) = self.rows(&negs);
            let dropout = (self.cfg.feature_dropout > 0.0).then(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, self.step, i as u64, DROPOUT_STREAM]));
                DropoutMasks::sample(self.cfg.feature_dropout, heads.len(), negs.len(), d, &mut rng)
            });
            let mask = self.filter.then(|| make_shared_negative_mask(plan, graph, i, true));
            let input = BatchInput {
                relations: &rels,
                head_shallow: &hs,
                head_features: &hf,
                tail_shallow: &ts,
                tail_features: &tf,
                negative_shallow: &ns,
                negative_features: &nf,
                mask: mask.as_ref(),
                dropout: dropout.as_ref(),
            };
            let g = batch_forward_backward(&self.cfg, graph.entity_count(), &self.params.shared, &input).unwrap();
            loss += g.loss.as_f64();
            for (b, &e) in heads.iter().enumerate() {
                add(e, &g.head[b * d..(b + 1) * d]);
            }
            for (b, &e) in tails.iter().enumerate() {
                add(e, &g.tail[b * d..(b + 1) * d]);
            }
            for (b, &e) in negs.iter().enumerate() {
                add(e, &g.negative[b * d..(b + 1) * d]);
            }
            for (a, x) in shared_total.iter_mut().zip(g.shared.flatten()) {
                *a = *a + x;
            }
        }
        let t = self.step + 1;
        let lr_t = T::lit(lr);
        for (e, g) in entity_grads {
            let span = e as usize * d..(e as usize + 1) * d;
            adam(
                &mut self.params.entities[span.clone()],
                &g,
                &mut self.m[span.clone()],
                &mut self.v[span.clone()],
                lr_t,
                t,
                self.betas,
            );
            self.storage.quantize_slice(&mut self.params.entities[span]);
        }
        let mut flat = self.params.shared.flatten();
        adam(&mut flat, &shared_total, &mut self.shared_m, &mut self.shared_v, lr_t, t, self.betas);
        self.params.shared.load_flat(&flat).unwrap();
        self.step += 1;
        loss / workers as f64
    }
}

/// Largest `|a − b| / max(|b|, floor)` over entity rows and replicated
/// parameters.
pub fn max_relative_difference<T: Real>(a: &ModelParams<T>, b: &ModelParams<T>, floor: f64) -> f64 {
    let (fa, fb) = (a.shared.flatten(), b.shared.flatten());
    a.entities
        .iter()
        .zip(&b.entities)
        .chain(fa.iter().zip(&fb))
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs() / y.as_f64().abs().max(floor))
        .fold(0.0, f64::max)
}

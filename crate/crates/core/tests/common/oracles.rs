//! Brute-force reference answers for inference and fusion.

use std::collections::BTreeSet;

use kge_core::eval::{rank_order, Prediction, Query, RankedPredictions};
use kge_core::graph::KnowledgeGraph;
use kge_core::model::{encode_entity, score, ModelConfig, ModelParams, Role};
use kge_core::Real;

/// Scores each query against every entity and sorts the whole list.
pub fn brute_force<T: Real>(params: &ModelParams<T>, graph: &KnowledgeGraph, cfg: &ModelConfig, queries: &[Query], k: usize) -> Vec<Vec<Prediction>> {
    let feat = |e: usize| graph.features().row(e).iter().map(|&x| T::lit(x as f64)).collect::<Vec<T>>();
    let tails: Vec<Vec<T>> = (0..graph.entity_count())
        .map(|e| encode_entity(params.entity(e), &feat(e), Role::Tail, &params.shared, None).unwrap())
        .collect();
    queries
        .iter()
        .map(|q| {
            let h = encode_entity(params.entity(q.head as usize), &feat(q.head as usize), Role::Head, &params.shared, None).unwrap();
            let r = q.relation as usize;
            let mut all: Vec<Prediction> = tails
                .iter()
                .enumerate()
                .map(|(e, t)| Prediction {
                    entity: e as u32,
                    score: score(cfg.score_fn, &h, params.shared.relation(r), t, params.shared.normal(r), cfg.distance_p).as_f64() as f32,
                })
                .collect();
            all.sort_by(rank_order);
            all.truncate(k);
            all
        })
        .collect()
}

/// Evaluates the fusion formula term by term for every mentioned entity.
pub fn exhaustive(models: &[RankedPredictions], p: f64, k: usize, out: usize) -> Vec<Vec<Prediction>> {
    let ids: BTreeSet<u64> = models.iter().flat_map(|m| m.query_ids()).collect();
    ids.into_iter()
        .map(|q| {
            let lists: Vec<&[Prediction]> = models.iter().map(|m| m.get(q).unwrap_or(&[])).collect();
            let mentioned: BTreeSet<u32> = lists.iter().flat_map(|l| l.iter().take(k).map(|p| p.entity)).collect();
            let mut all: Vec<Prediction> = mentioned
                .into_iter()
                .map(|t| {
                    let mut s = 0.0f64;
                    for l in &lists {
                        match l.iter().take(k).position(|p| p.entity == t) {
                            Some(r) => s += -p.signum() * ((r + 1) as f64).powf(p),
                            None => s -= if p > 0.0 { ((k + 1) as f64).powf(p) } else { 0.0 },
                        }
                    }
                    Prediction { entity: t, score: s as f32 }
                })
                .collect();
            all.sort_by(rank_order);
            all.truncate(out);
            all
        })
        .collect()
}


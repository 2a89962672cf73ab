//! Full-vocabulary top-K inference over a sharded model, MRR@10 and the
//! queries / predictions TSV formats.
//!
//! Candidates are ordered by score rounded to `f32` (descending), then by
//! entity id (ascending). The same total order is used for local top-K,
//! the cross-worker merge and the predictions file, so any `D` gives the
//! same lists as a single global sort.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{KgeError, Result};
use crate::graph::{EntityId, RelationId, Triple, PADDING_ENTITY};
use crate::model::{encode_entity, score, Role};
use crate::real::Real;
use crate::runtime::{map_workers, Cluster, TrafficKind};

pub type QueryId = u64;

/// A tail-prediction query `(h, r, ?)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Query {
    pub query_id: QueryId,
    pub head: EntityId,
    pub relation: RelationId,
}

/// Queries plus their ground-truth tails when the file carries them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryFile {
    pub queries: Vec<Query>,
    pub tails: Option<Vec<EntityId>>,
}

impl QueryFile {
    /// One query per triple, numbered from 0.
    pub fn from_triples(triples: &[Triple]) -> Self {
        QueryFile {
            queries: triples
                .iter()
                .enumerate()
                .map(|(k, t)| Query {
                    query_id: k as QueryId,
                    head: t.head,
                    relation: t.relation,
                })
                .collect(),
            tails: Some(triples.iter().map(|t| t.tail).collect()),
        }
    }

    /// `(query_id, tail)` pairs, or an error for an unlabelled file.
    pub fn labels(&self) -> Result<Vec<(QueryId, EntityId)>> {
        let tails = self
            .tails
            .as_ref()
            .ok_or_else(|| KgeError::Query("query file has no tail column".into()))?;
        Ok(self.queries.iter().zip(tails).map(|(q, &t)| (q.query_id, t)).collect())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query_id\thead\trelation");
        if self.tails.is_some() {
            out.push_str("\ttail");
        }
        out.push('\n');
        for (k, q) in self.queries.iter().enumerate() {
            write!(out, "{}\t{}\t{}", q.query_id, q.head, q.relation).unwrap();
            if let Some(t) = &self.tails {
                write!(out, "\t{}", t[k]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the queries TSV. The header line is optional; either every
    /// row has a tail or none does.
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = QueryFile::default();
        let mut tails = Vec::new();
        let mut width = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.is_empty() || (n == 0 && line.starts_with("query_id")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 && cols.len() != 4 {
                return Err(KgeError::parse("queries", line_no, format!("expected 3 or 4 columns, found {}", cols.len())));
            }
            if *width.get_or_insert(cols.len()) != cols.len() {
                return Err(KgeError::parse("queries", line_no, "tail column present on some rows only"));
            }
            let field = |i: usize, name: &str| -> Result<u64> {
                cols[i]
                    .parse::<u64>()
                    .map_err(|_| KgeError::parse("queries", line_no, format!("bad {name} {:?}", cols[i])))
            };
            let id32 = |i: usize, name: &str| -> Result<u32> {
                let v = field(i, name)?;
                u32::try_from(v)
                    .ok()
                    .filter(|&v| v != PADDING_ENTITY)
                    .ok_or_else(|| KgeError::parse("queries", line_no, format!("{name} {v} out of range")))
            };
            file.queries.push(Query {
                query_id: field(0, "query_id")?,
                head: id32(1, "head")?,
                relation: id32(2, "relation")?,
            });
            if cols.len() == 4 {
                tails.push(id32(3, "tail")?);
            }
        }
        if width == Some(4) {
            file.tails = Some(tails);
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// One ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub entity: EntityId,
    pub score: f32,
}

/// The deterministic ranking order: score descending, then entity id.
pub fn rank_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPredictions {
    pub query_id: QueryId,
    /// Best first under [`rank_order`].
    pub ranked: Vec<Prediction>,
}

/// Per-query top-K lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedPredictions {
    lists: Vec<QueryPredictions>,
}

impl RankedPredictions {
    /// Checks ordering, duplicates and query-id uniqueness.
    pub fn new(lists: Vec<QueryPredictions>) -> Result<Self> {
        let mut seen = HashSet::new();
        for l in &lists {
            if !seen.insert(l.query_id) {
                return Err(KgeError::Query(format!("query {} listed twice", l.query_id)));
            }
            let mut entities = HashSet::new();
            for (k, p) in l.ranked.iter().enumerate() {
                if p.entity == PADDING_ENTITY || p.score.is_nan() {
                    return Err(KgeError::Query(format!("query {} rank {} is not a real prediction", l.query_id, k + 1)));
                }
                if !entities.insert(p.entity) {
                    return Err(KgeError::Query(format!("query {} repeats entity {}", l.query_id, p.entity)));
                }
                if k > 0 && rank_order(&l.ranked[k - 1], p) != Ordering::Less {
                    return Err(KgeError::Query(format!("query {} rank {} is out of order", l.query_id, k + 1)));
                }
            }
        }
        Ok(RankedPredictions { lists })
    }

    pub fn lists(&self) -> &[QueryPredictions] {
        &self.lists
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = QueryId> + '_ {
        self.lists.iter().map(|l| l.query_id)
    }

    pub fn get(&self, query_id: QueryId) -> Option<&[Prediction]> {
        self.lists.iter().find(|l| l.query_id == query_id).map(|l| &l.ranked[..])
    }

    /// Longest list length.
    pub fn depth(&self) -> usize {
        self.lists.iter().map(|l| l.ranked.len()).max().unwrap_or(0)
    }

    /// Keeps the first `k` predictions of every list.
    pub fn truncated(&self, k: usize) -> Self {
        RankedPredictions {
            lists: self
                .lists
                .iter()
                .map(|l| QueryPredictions {
                    query_id: l.query_id,
                    ranked: l.ranked.iter().take(k).copied().collect(),
                })
                .collect(),
        }
    }

    /// Lists sorted by query id, as written to disk.
    pub fn sorted(&self) -> Self {
        let mut lists = self.lists.clone();
        lists.sort_by_key(|l| l.query_id);
        RankedPredictions { lists }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query_id\trank\tentity_id\tscore\n");
        for l in self.sorted().lists {
            for (k, p) in l.ranked.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{:.8e}", l.query_id, k + 1, p.entity, p.score).unwrap();
            }
        }
        out
    }

    /// Parses the predictions TSV. Rows must be sorted by
    /// `(query_id, rank)` with ranks counting from 1.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "query_id\trank\tentity_id\tscore")) => {}
            _ => return Err(KgeError::parse("predictions", 1, "missing header")),
        }
        let mut lists: Vec<QueryPredictions> = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            let err = |m: String| KgeError::parse("predictions", line_no, m);
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            }
            let query_id: QueryId = cols[0].parse().map_err(|_| err(format!("bad query_id {:?}", cols[0])))?;
            let rank: usize = cols[1].parse().map_err(|_| err(format!("bad rank {:?}", cols[1])))?;
            let entity: EntityId = cols[2]
                .parse()
                .ok()
                .filter(|&e| e != PADDING_ENTITY)
                .ok_or_else(|| err(format!("bad entity_id {:?}", cols[2])))?;
            let score: f32 = cols[3]
                .parse()
                .ok()
                .filter(|s: &f32| !s.is_nan())
                .ok_or_else(|| err(format!("bad score {:?}", cols[3])))?;
            let p = Prediction { entity, score };
            match lists.last_mut() {
                Some(l) if l.query_id == query_id => {
                    if rank != l.ranked.len() + 1 {
                        return Err(err(format!("expected rank {}, found {rank}", l.ranked.len() + 1)));
                    }
                    if rank_order(l.ranked.last().unwrap(), &p) != Ordering::Less {
                        return Err(err("prediction out of order".into()));
                    }
                    if l.ranked.iter().any(|q| q.entity == entity) {
                        return Err(err(format!("entity {entity} repeated")));
                    }
                    l.ranked.push(p);
                }
                last => {
                    if last.is_some_and(|l| l.query_id >= query_id) {
                        return Err(err(format!("query {query_id} out of order")));
                    }
                    if rank != 1 {
                        return Err(err(format!("expected rank 1, found {rank}")));
                    }
                    lists.push(QueryPredictions { query_id, ranked: vec![p] });
                }
            }
        }
        Ok(RankedPredictions { lists })
    }
}

pub fn export_predictions(predictions: &RankedPredictions, path: &Path) -> Result<()> {
    std::fs::write(path, predictions.to_tsv())?;
    Ok(())
}

pub fn import_predictions(path: &Path) -> Result<RankedPredictions> {
    RankedPredictions::parse(&std::fs::read_to_string(path)?)
}

/// Keeps the best `k` of `items` under [`rank_order`], sorted.
pub fn top_k(mut items: Vec<Prediction>, k: usize) -> Vec<Prediction> {
    if items.len() > k && k > 0 {
        items.select_nth_unstable_by(k - 1, rank_order);
        items.truncate(k);
    }
    items.truncate(k);
    items.sort_unstable_by(rank_order);
    items
}

#[derive(Debug, Clone, Copy)]
struct QueryMsg<T> {
    /// Index into the caller's query list; `u32::MAX` marks padding.
    slot: u32,
    relation: RelationId,
    head: T,
}

const NO_SLOT: u32 = u32::MAX;

/// Scores every query against every real entity and returns the top `k`.
///
/// Queries are grouped by the shard owning their head. In each round every
/// worker contributes up to `query_micro_batch_size` encoded heads to an
/// AllGather, scores all gathered queries against its local tails, and
/// returns per-query local top-K lists to the owners through an AllToAll.
/// Owners merge the `D·k` candidates. Output lists follow the input order.
pub fn infer_topk<T: Real>(
    cluster: &mut Cluster<T>,
    queries: &[Query],
    k: usize,
    query_micro_batch_size: usize,
) -> Result<RankedPredictions> {
    if k == 0 {
        return Err(KgeError::config("k", "must be at least 1"));
    }
    if query_micro_batch_size == 0 {
        return Err(KgeError::config("query_micro_batch_size", "must be at least 1"));
    }
    if queries.len() >= NO_SLOT as usize {
        return Err(KgeError::Query("too many queries".into()));
    }
    let d_workers = cluster.worker_count();
    let entity_count = cluster.entity_count();
    let relation_count = cluster.workers()[0].shared.relation_count;
    let mut groups = vec![Vec::new(); d_workers];
    let mut ids = HashSet::new();
    for (slot, q) in queries.iter().enumerate() {
        if q.head as usize >= entity_count {
            return Err(KgeError::Query(format!("query {}: head {} is not in any shard", q.query_id, q.head)));
        }
        if q.relation as usize >= relation_count {
            return Err(KgeError::Query(format!("query {}: relation {} out of range", q.query_id, q.relation)));
        }
        if !ids.insert(q.query_id) {
            return Err(KgeError::Query(format!("query {} appears twice", q.query_id)));
        }
        groups[cluster.partition().shard_of(q.head)].push(slot);
    }

    let config = cluster.config().clone();
    let dim = config.embedding_dim;
    let mode = cluster.options().mode;
    let partition = cluster.partition().clone();
    // tail encodings of every real row, per worker
    let tails: Vec<Vec<(EntityId, Vec<T>)>> = map_workers(mode, cluster.workers(), |w| {
        w.entities
            .iter()
            .enumerate()
            .filter(|(_, &e)| e != PADDING_ENTITY)
            .map(|(r, &e)| Ok((e, encode_entity(w.embedding(r), w.feature(r), Role::Tail, &w.shared, None)?)))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let rounds = groups.iter().map(|g| g.len().div_ceil(query_micro_batch_size)).max().unwrap_or(0);
    let mut results: Vec<Vec<Prediction>> = vec![Vec::new(); queries.len()];
    let msg_bytes = 8 + dim * T::BYTES;
    cluster.fabric_mut().begin_step();
    for round in 0..rounds {
        let outgoing: Vec<Vec<QueryMsg<Vec<T>>>> = map_workers(mode, cluster.workers(), |w| {
            let mine = groups[w.index].iter().skip(round * query_micro_batch_size).take(query_micro_batch_size);
            let mut msgs: Vec<QueryMsg<Vec<T>>> = mine
                .map(|&slot| {
                    let q = queries[slot];
                    let row = partition.row_of(q.head);
                    let head = encode_entity(w.embedding(row), w.feature(row), Role::Head, &w.shared, None)?;
                    Ok(QueryMsg {
                        slot: slot as u32,
                        relation: q.relation,
                        head,
                    })
                })
                .collect::<Result<_>>()?;
            msgs.resize(
                query_micro_batch_size,
                QueryMsg {
                    slot: NO_SLOT,
                    relation: 0,
                    head: Vec::new(),
                },
            );
            Ok(msgs)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let gathered = cluster.fabric_mut().all_gather(TrafficKind::QueryGather, outgoing, msg_bytes)?;

        let sentinel = Prediction {
            entity: PADDING_ENTITY,
            score: f32::NEG_INFINITY,
        };
        let send: Vec<Vec<Vec<Prediction>>> = map_workers(mode, cluster.workers(), |w| {
            let local = &tails[w.index];
            gathered[w.index]
                .chunks(query_micro_batch_size)
                .map(|batch| {
                    let mut out = Vec::with_capacity(batch.len() * k);
                    for msg in batch {
                        let mut best = Vec::new();
                        if msg.slot != NO_SLOT {
                            let r = msg.relation as usize;
                            let rel = w.shared.relation(r);
                            let normal = w.shared.normal(r);
                            let cands = local
                                .iter()
                                .map(|(e, t)| Prediction {
                                    entity: *e,
                                    score: score(config.score_fn, &msg.head, rel, t, normal, config.distance_p).as_f64() as f32,
                                })
                                .collect();
                            best = top_k(cands, k);
                        }
                        best.resize(k, sentinel);
                        out.extend(best);
                    }
                    out
                })
                .collect()
        });
        let recv = cluster.fabric_mut().all_to_all(TrafficKind::TopKReturn, send, 8)?;

        for (i, from) in recv.iter().enumerate() {
            let mine = groups[i].iter().skip(round * query_micro_batch_size).take(query_micro_batch_size);
            for (q, &slot) in mine.enumerate() {
                let cands = from
                    .iter()
                    .flat_map(|chunk| &chunk[q * k..(q + 1) * k])
                    .filter(|p| p.entity != PADDING_ENTITY)
                    .copied()
                    .collect();
                results[slot] = top_k(cands, k);
            }
        }
    }
    RankedPredictions::new(
        queries
            .iter()
            .zip(results)
            .map(|(q, ranked)| QueryPredictions {
                query_id: q.query_id,
                ranked,
            })
            .collect(),
    )
}

/// Mean over `labels` of `1/rank` when the true tail appears within the
/// first `cutoff` predictions, else 0.
pub fn mrr_at(predictions: &RankedPredictions, labels: &[(QueryId, EntityId)], cutoff: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(KgeError::Query("no labelled queries".into()));
    }
    let by_id: HashMap<QueryId, &[Prediction]> = predictions.lists.iter().map(|l| (l.query_id, &l.ranked[..])).collect();
    let labelled: HashSet<QueryId> = labels.iter().map(|l| l.0).collect();
    if labelled.len() != labels.len() {
        return Err(KgeError::Query("labels repeat a query id".into()));
    }
    let mut missing: Vec<QueryId> = labelled.iter().copied().filter(|q| !by_id.contains_key(q)).collect();
    let mut extra: Vec<QueryId> = by_id.keys().copied().filter(|q| !labelled.contains(q)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(KgeError::Query(format!(
            "query ids differ: unpredicted {:?}, unlabelled {:?}",
            &missing[..missing.len().min(10)],
            &extra[..extra.len().min(10)]
        )));
    }
    let total: f64 = labels
        .iter()
        .map(|(q, t)| {
            by_id[q]
                .iter()
                .take(cutoff)
                .position(|p| p.entity == *t)
                .map_or(0.0, |r| 1.0 / (r + 1) as f64)
        })
        .sum();
    Ok(total / labels.len() as f64)
}

pub fn mrr_at_10(predictions: &RankedPredictions, labels: &[(QueryId, EntityId)]) -> Result<f64> {
    mrr_at(predictions, labels, 10)
}

/// MRR@10 of the model on `triples`, read as `(h, r, ?)` queries.
pub fn evaluate_triples<T: Real>(cluster: &mut Cluster<T>, triples: &[Triple], query_micro_batch_size: usize) -> Result<f64> {
    let file = QueryFile::from_triples(triples);
    let predictions = infer_topk(cluster, &file.queries, 10, query_micro_batch_size)?;
    mrr_at_10(&predictions, &file.labels()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(entity: EntityId, score: f32) -> Prediction {
        Prediction { entity, score }
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        let got = top_k(vec![p(5, 1.0), p(2, 1.0), p(9, 3.0), p(1, 0.5)], 3);
        assert_eq!(got, vec![p(9, 3.0), p(2, 1.0), p(5, 1.0)]);
        assert_eq!(top_k(vec![p(1, 0.0)], 4).len(), 1);
    }

    #[test]
    fn rejects_out_of_order_lists() {
        let bad = QueryPredictions {
            query_id: 0,
            ranked: vec![p(1, 1.0), p(0, 1.0)],
        };
        assert!(RankedPredictions::new(vec![bad]).is_err());
    }

    #[test]
    fn queries_round_trip() {
        let f = QueryFile::parse("query_id\thead\trelation\ttail\n3\t1\t0\t2\n4\t2\t1\t0\n").unwrap();
        assert_eq!(f.labels().unwrap(), vec![(3, 2), (4, 0)]);
        assert_eq!(QueryFile::parse(&f.to_tsv()).unwrap(), f);
        let err = QueryFile::parse("1\t2\t3\n4\t5\t6\t7\n").unwrap_err().to_string();
        assert!(err.starts_with("parse: queries line 2"), "{err}");
    }
}

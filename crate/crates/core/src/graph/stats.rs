use std::fmt::Write as _;

use super::{EntityId, KnowledgeGraph, RelationId};

/// Rescales counts to probabilities proportional to `c^{1/3}`.
///
/// All-zero input yields all-zero output.
pub fn cube_root_rescale(counts: &[u64]) -> Vec<f64> {
    let roots: Vec<f64> = counts.iter().map(|&c| (c as f64).cbrt()).collect();
    let total: f64 = roots.iter().sum();
    if total == 0.0 {
        return vec![0.0; counts.len()];
    }
    roots.into_iter().map(|r| r / total).collect()
}

/// A named list of `(head, relation, tail?)` queries, e.g. a validation split.
#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    pub name: String,
    pub items: Vec<(EntityId, RelationId, Option<EntityId>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationRow {
    pub relation: RelationId,
    pub count: u64,
    pub frequency: f64,
    pub cumulative_frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitStats {
    pub name: String,
    pub total: u64,
    /// Every relation, sorted by count descending then id ascending.
    pub relations: Vec<RelationRow>,
    /// Cumulative frequency after the top 1, 2, 4, 8, ... relations.
    pub curve: Vec<(usize, f64)>,
    /// Fraction of tails never seen as a training tail (`None` for the
    /// training split or tail-less query sets).
    pub tail_coverage_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub training: SplitStats,
    /// Cube-root relation distribution of the training set, by relation id.
    pub cube_root: Vec<f64>,
    pub sets: Vec<SplitStats>,
}

fn relation_table(counts: &[u64]) -> (u64, Vec<RelationRow>, Vec<(usize, f64)>) {
    let total: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut cum = 0u64;
    let rows: Vec<RelationRow> = order
        .into_iter()
        .map(|r| {
            cum += counts[r];
            let denom = total.max(1) as f64;
            RelationRow {
                relation: r as RelationId,
                count: counts[r],
                frequency: counts[r] as f64 / denom,
                cumulative_frequency: cum as f64 / denom,
            }
        })
        .collect();
    let mut curve = Vec::new();
    let mut k = 1;
    while k <= rows.len() {
        curve.push((k, rows[k - 1].cumulative_frequency));
        k *= 2;
    }
    if let Some(last) = rows.last() {
        if curve.last().map(|c| c.0) != Some(rows.len()) {
            curve.push((rows.len(), last.cumulative_frequency));
        }
    }
    (total, rows, curve)
}

/// Relation and tail-entity statistics of the training graph and of each
/// supplied query set.
pub fn split_stats(graph: &KnowledgeGraph, query_sets: &[QuerySet]) -> StatsReport {
    let (total, relations, curve) = relation_table(graph.relation_counts());
    let training = SplitStats {
        name: "train".into(),
        total,
        relations,
        curve,
        tail_coverage_gap: None,
    };

    let mut is_train_tail = vec![false; graph.entity_count()];
    for t in graph.triples() {
        is_train_tail[t.tail as usize] = true;
    }

    let sets = query_sets
        .iter()
        .map(|qs| {
            let mut counts = vec![0u64; graph.relation_count()];
            let mut tails = 0u64;
            let mut unseen = 0u64;
            for &(_, r, t) in &qs.items {
                if let Some(c) = counts.get_mut(r as usize) {
                    *c += 1;
                }
                if let Some(t) = t {
                    tails += 1;
                    if !is_train_tail.get(t as usize).copied().unwrap_or(false) {
                        unseen += 1;
                    }
                }
            }
            let (total, relations, curve) = relation_table(&counts);
            SplitStats {
                name: qs.name.clone(),
                total,
                relations,
                curve,
                tail_coverage_gap: (tails > 0).then(|| unseen as f64 / tails as f64),
            }
        })
        .collect();

    StatsReport {
        training,
        cube_root: cube_root_rescale(graph.relation_counts()),
        sets,
    }
}

impl StatsReport {
    /// One row per relation of the training set, sorted by descending count.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "relation_id\tcount\tfrequency\tcumulative_frequency\tcube_root_probability\n",
        );
        for row in &self.training.relations {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.9}\t{:.9}\t{:.9}",
                row.relation,
                row.count,
                row.frequency,
                row.cumulative_frequency,
                self.cube_root[row.relation as usize]
            );
        }
        out
    }

    /// Human-readable per-split summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in std::iter::once(&self.training).chain(&self.sets) {
            let top = s.relations.first();
            let _ = write!(
                out,
                "{}: {} items, top relation {} at {:.4}",
                s.name,
                s.total,
                top.map(|r| r.relation as i64).unwrap_or(-1),
                top.map(|r| r.frequency).unwrap_or(0.0)
            );
            if let Some(gap) = s.tail_coverage_gap {
                let _ = write!(out, ", tails unseen in training {gap:.4}");
            }
            out.push('\n');
        }
        out
    }
}

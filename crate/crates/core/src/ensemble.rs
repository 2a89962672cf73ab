//! Power-rank fusion of per-model top-K lists.
//!
//! A model ranking entity `t` at position `k` of its top-K list contributes
//! `−sgn(p)·k^p`; an entity missing from that list contributes 0 for
//! `p < 0` and `−(K+1)^p` for `p > 0`. Only ranks are used, never scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{KgeError, Result};
use crate::eval::{mrr_at_10, top_k, Prediction, QueryId, QueryPredictions, RankedPredictions};
use crate::graph::EntityId;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Nonzero exponent `p`.
    pub power: f64,
    /// Per-model list depth `K`.
    pub depth: usize,
    pub output_depth: usize,
    /// Treat queries missing from a model as all-absent instead of failing.
    pub allow_partial: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            power: -0.5,
            depth: 100,
            output_depth: 10,
            allow_partial: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.power == 0.0 || !self.power.is_finite() {
            return Err(KgeError::config("ensemble.power", "must be finite and nonzero"));
        }
        if self.depth < 10 {
            return Err(KgeError::config("ensemble.depth", "must be at least 10"));
        }
        if self.output_depth == 0 {
            return Err(KgeError::config("ensemble.output_depth", "must be at least 1"));
        }
        Ok(())
    }

    /// Contribution of rank `k` (1-based), or of absence when `k` is `None`.
    pub fn contribution(&self, k: Option<usize>) -> f64 {
        let p = self.power;
        match k {
            Some(k) => -p.signum() * (k as f64).powf(p),
            None if p > 0.0 => -((self.depth + 1) as f64).powf(p),
            None => 0.0,
        }
    }
}

/// Accumulated `s(t)` for every entity mentioned by any model, per query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionScoreTable {
    pub queries: Vec<(QueryId, BTreeMap<EntityId, f64>)>,
}

impl FusionScoreTable {
    pub fn build(models: &[RankedPredictions], config: &EnsembleConfig) -> Result<Self> {
        config.validate()?;
        if models.is_empty() {
            return Err(KgeError::Ensemble("no models to fuse".into()));
        }
        let all: BTreeSet<QueryId> = models.iter().flat_map(|m| m.query_ids()).collect();
        let lookup: Vec<BTreeMap<QueryId, &[Prediction]>> = models
            .iter()
            .map(|m| m.lists().iter().map(|l| (l.query_id, &l.ranked[..])).collect())
            .collect();
        for (m, map) in lookup.iter().enumerate() {
            let missing: Vec<QueryId> = all.iter().copied().filter(|q| !map.contains_key(q)).collect();
            if !missing.is_empty() && !config.allow_partial {
                return Err(KgeError::Ensemble(format!(
                    "model {m} is missing {} queries: {:?}",
                    missing.len(),
                    &missing[..missing.len().min(20)]
                )));
            }
            if let Some((q, l)) = map.iter().find(|(_, l)| l.len() < config.depth) {
                return Err(KgeError::Ensemble(format!(
                    "model {m} query {q} has {} predictions, fewer than depth {}",
                    l.len(),
                    config.depth
                )));
            }
        }
        let absent = config.contribution(None);
        let queries = all
            .into_iter()
            .map(|q| {
                let mut table: BTreeMap<EntityId, f64> = BTreeMap::new();
                let lists: Vec<&[Prediction]> = lookup
                    .iter()
                    .map(|map| map.get(&q).map_or(&[][..], |l| &l[..config.depth]))
                    .collect();
                for l in &lists {
                    for p in l.iter() {
                        table.insert(p.entity, 0.0);
                    }
                }
                for l in &lists {
                    let ranks: BTreeMap<EntityId, usize> = l.iter().enumerate().map(|(k, p)| (p.entity, k + 1)).collect();
                    for (e, s) in table.iter_mut() {
                        *s += ranks.get(e).map_or(absent, |&k| config.contribution(Some(k)));
                    }
                }
                (q, table)
            })
            .collect();
        Ok(FusionScoreTable { queries })
    }
}

/// Fuses `models` into top-`output_depth` lists ordered by `s(t)` (rounded
/// to `f32`) descending, then entity id. Output is sorted by query id.
pub fn fuse(models: &[RankedPredictions], config: &EnsembleConfig) -> Result<RankedPredictions> {
    let table = FusionScoreTable::build(models, config)?;
    RankedPredictions::new(
        table
            .queries
            .into_iter()
            .map(|(query_id, scores)| {
                let cands = scores
                    .into_iter()
                    .map(|(entity, s)| Prediction { entity, score: s as f32 })
                    .collect();
                QueryPredictions {
                    query_id,
                    ranked: top_k(cands, config.output_depth),
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub subset: String,
    pub models: usize,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn get(&self, subset: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.subset == subset).map(|r| r.mrr)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("subset\tmodels\tmrr\n");
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{:.6}", r.subset, r.models, r.mrr).unwrap();
        }
        out
    }
}

/// MRR@10 of the full ensemble (`all`), of each group alone (`only:A`),
/// of the ensemble without each group (`without:A`, when two or more
/// groups exist) and of every pair of groups (`A+B`).
pub fn ablate(
    models: &[RankedPredictions],
    groups: &[String],
    config: &EnsembleConfig,
    labels: &[(QueryId, EntityId)],
) -> Result<AblationReport> {
    if groups.len() != models.len() {
        return Err(KgeError::Ensemble(format!("{} group labels for {} models", groups.len(), models.len())));
    }
    let names: Vec<&String> = groups.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rows = Vec::new();
    let mut run = |subset: String, keep: &dyn Fn(&str) -> bool| -> Result<()> {
        let chosen: Vec<RankedPredictions> = models
            .iter()
            .zip(groups)
            .filter(|(_, g)| keep(g))
            .map(|(m, _)| m.clone())
            .collect();
        let mrr = mrr_at_10(&fuse(&chosen, config)?, labels)?;
        rows.push(AblationRow {
            subset,
            models: chosen.len(),
            mrr,
        });
        Ok(())
    };
    run("all".into(), &|_| true)?;
    for g in &names {
        run(format!("only:{g}"), &|x| x == g.as_str())?;
    }
    if names.len() > 1 {
        for g in &names {
            run(format!("without:{g}"), &|x| x != g.as_str())?;
        }
    }
    for (a, ga) in names.iter().enumerate() {
        for gb in &names[a + 1..] {
            run(format!("{ga}+{gb}"), &|x| x == ga.as_str() || x == gb.as_str())?;
        }
    }
    Ok(AblationReport { rows })
}

/// Six evenly spaced powers from −1 to −0.5.
pub fn default_power_grid() -> Vec<f64> {
    (0..6).map(|i| -1.0 + 0.1 * i as f64).collect()
}

/// Ensemble MRR@10 for each power in `powers`.
pub fn power_sweep(
    models: &[RankedPredictions],
    config: &EnsembleConfig,
    labels: &[(QueryId, EntityId)],
    powers: &[f64],
) -> Result<Vec<(f64, f64)>> {
    powers
        .iter()
        .map(|&p| {
            let cfg = EnsembleConfig { power: p, ..config.clone() };
            Ok((p, mrr_at_10(&fuse(models, &cfg)?, labels)?))
        })
        .collect()
}

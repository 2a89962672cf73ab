use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EntityId, KnowledgeGraph, RelationId, PADDING_ENTITY};
use crate::error::{KgeError, Result};

/// Random row-wise split of the entity table into `D` equal-sized shards.
///
/// Real entities occupy the leading rows of each shard; trailing rows hold
/// [`PADDING_ENTITY`]. At most one padding row lands in any shard, on the
/// last `D·⌈|E|/D⌉ − |E|` shards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityPartition {
    shard_size: usize,
    shards: Vec<Vec<EntityId>>,
    // entity id -> (shard, row)
    assignment: Vec<(u32, u32)>,
}

impl EntityPartition {
    /// Builds a partition from explicit shard contents. Each shard must list
    /// `shard_size` rows, real entities first.
    pub fn from_shards(entity_count: usize, shards: Vec<Vec<EntityId>>) -> Result<Self> {
        let shard_count = shards.len();
        if shard_count == 0 {
            return Err(KgeError::Partition("no shards".into()));
        }
        let shard_size = shards[0].len();
        let mut assignment = vec![(u32::MAX, u32::MAX); entity_count];
        for (s, rows) in shards.iter().enumerate() {
            if rows.len() != shard_size {
                return Err(KgeError::Partition(format!(
                    "shard {s} has {} rows, expected {shard_size}",
                    rows.len()
                )));
            }
            let mut seen_padding = false;
            for (r, &e) in rows.iter().enumerate() {
                if e == PADDING_ENTITY {
                    seen_padding = true;
                    continue;
                }
                if seen_padding {
                    return Err(KgeError::Partition(format!(
                        "shard {s} has a real row after padding"
                    )));
                }
                let slot = assignment.get_mut(e as usize).ok_or_else(|| {
                    KgeError::Partition(format!("entity {e} out of range in shard {s}"))
                })?;
                if slot.0 != u32::MAX {
                    return Err(KgeError::Partition(format!("entity {e} assigned twice")));
                }
                *slot = (s as u32, r as u32);
            }
        }
        if let Some(e) = assignment.iter().position(|a| a.0 == u32::MAX) {
            return Err(KgeError::Partition(format!("entity {e} not assigned")));
        }
        Ok(EntityPartition {
            shard_size,
            shards,
            assignment,
        })
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_size(&self) -> usize {
        self.shard_size
    }

    pub fn entity_count(&self) -> usize {
        self.assignment.len()
    }

    #[inline]
    pub fn shard_of(&self, entity: EntityId) -> usize {
        self.assignment[entity as usize].0 as usize
    }

    #[inline]
    pub fn row_of(&self, entity: EntityId) -> usize {
        self.assignment[entity as usize].1 as usize
    }

    /// Entity stored at `(shard, row)`, or [`PADDING_ENTITY`].
    pub fn entity_at(&self, shard: usize, row: usize) -> EntityId {
        self.shards[shard][row]
    }

    /// All rows of a shard including padding.
    pub fn shard_rows(&self, shard: usize) -> &[EntityId] {
        &self.shards[shard]
    }

    pub fn real_count(&self, shard: usize) -> usize {
        self.shard_size - self.padding_count(shard)
    }

    pub fn padding_count(&self, shard: usize) -> usize {
        self.shards[shard]
            .iter()
            .rev()
            .take_while(|&&e| e == PADDING_ENTITY)
            .count()
    }

    /// Real (non-padding) entities of a shard, in row order.
    pub fn real_entities(&self, shard: usize) -> &[EntityId] {
        &self.shards[shard][..self.real_count(shard)]
    }
}

/// Uniform random permutation of the entities dealt into `D` shards of
/// `⌈|E|/D⌉` rows. Deterministic under `seed`.
pub fn partition_entities(
    graph: &KnowledgeGraph,
    shard_count: usize,
    seed: u64,
) -> Result<EntityPartition> {
    partition_entity_count(graph.entity_count(), shard_count, seed)
}

pub(crate) fn partition_entity_count(
    entity_count: usize,
    shard_count: usize,
    seed: u64,
) -> Result<EntityPartition> {
    if shard_count == 0 {
        return Err(KgeError::Partition("D must be at least 1".into()));
    }
    if shard_count > entity_count {
        return Err(KgeError::Partition(format!(
            "D = {shard_count} exceeds entity count {entity_count}"
        )));
    }
    let mut perm: Vec<EntityId> = (0..entity_count as EntityId).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let shard_size = entity_count.div_ceil(shard_count);
    let padding = shard_size * shard_count - entity_count;
    let mut shards = Vec::with_capacity(shard_count);
    let mut next = perm.into_iter();
    for s in 0..shard_count {
        let real = if s >= shard_count - padding {
            shard_size - 1
        } else {
            shard_size
        };
        let mut rows: Vec<EntityId> = next.by_ref().take(real).collect();
        rows.resize(shard_size, PADDING_ENTITY);
        shards.push(rows);
    }
    EntityPartition::from_shards(entity_count, shards)
}

/// `D × D` grid of triple indices keyed by (head shard, tail shard).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleBuckets {
    shard_count: usize,
    buckets: Vec<Vec<usize>>,
    // sorted by relation id, zero counts omitted
    relation_counts: Vec<Vec<(RelationId, u64)>>,
}

impl TripleBuckets {
    pub fn shard_count(&self) -> usize {
        self.shard_count
    }

    /// Indices into the graph's triple list with head in shard `i`, tail in shard `j`.
    pub fn bucket(&self, i: usize, j: usize) -> &[usize] {
        &self.buckets[i * self.shard_count + j]
    }

    /// Non-zero per-relation counts `n_r^{(i,j)}`, ascending by relation id.
    pub fn relation_counts(&self, i: usize, j: usize) -> &[(RelationId, u64)] {
        &self.relation_counts[i * self.shard_count + j]
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.buckets.iter().map(Vec::len)
    }
}

pub fn bucket_triples(graph: &KnowledgeGraph, partition: &EntityPartition) -> Result<TripleBuckets> {
    if partition.entity_count() != graph.entity_count() {
        return Err(KgeError::Partition(format!(
            "partition covers {} entities, graph has {}",
            partition.entity_count(),
            graph.entity_count()
        )));
    }
    let d = partition.shard_count();
    let mut buckets = vec![Vec::new(); d * d];
    for (idx, t) in graph.triples().iter().enumerate() {
        let i = partition.shard_of(t.head);
        let j = partition.shard_of(t.tail);
        buckets[i * d + j].push(idx);
    }
    let triples = graph.triples();
    let relation_counts = buckets
        .iter()
        .map(|b| {
            let mut rels: Vec<RelationId> = b.iter().map(|&k| triples[k].relation).collect();
            rels.sort_unstable();
            let mut out: Vec<(RelationId, u64)> = Vec::new();
            for r in rels {
                match out.last_mut() {
                    Some((last, c)) if *last == r => *c += 1,
                    _ => out.push((r, 1)),
                }
            }
            out
        })
        .collect();
    Ok(TripleBuckets {
        shard_count: d,
        buckets,
        relation_counts,
    })
}

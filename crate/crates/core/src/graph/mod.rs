//! Knowledge graph storage, ingestion, synthetic generation, partitioning
//! and statistics.

mod io;
mod partition;
mod stats;
mod synthetic;
mod text;

pub use io::{
    decode_features, decode_triples, encode_features, encode_triples, ingest_features,
    ingest_graph, ingest_triples, write_features, write_triples, FeatureEncoding, TriplesHeader,
};
pub use partition::{bucket_triples, partition_entities, EntityPartition, TripleBuckets};
pub use stats::{cube_root_rescale, split_stats, QuerySet, SplitStats, StatsReport};
pub use synthetic::{generate_synthetic, split_holdout, SyntheticSpec};
pub use text::{parse_features_tsv, parse_triples_tsv};

use crate::error::{KgeError, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// Reserved id of the placeholder rows that equalise shard sizes.
pub const PADDING_ENTITY: EntityId = EntityId::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Row-major `[rows × dim]` single-precision feature table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(KgeError::Shape(format!(
                "feature buffer has {} values, expected {rows}×{dim}",
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        FeatureMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entity_count: usize,
    relation_count: usize,
    triples: Vec<Triple>,
    features: FeatureMatrix,
    relation_counts: Vec<u64>,
}

impl KnowledgeGraph {
    /// Validates ids and counts relations in one pass.
    pub fn new(
        entity_count: usize,
        relation_count: usize,
        triples: Vec<Triple>,
        features: FeatureMatrix,
    ) -> Result<Self> {
        if entity_count >= PADDING_ENTITY as usize {
            return Err(KgeError::Shape(format!(
                "entity_count {entity_count} collides with the padding sentinel"
            )));
        }
        if features.rows() != entity_count {
            return Err(KgeError::Shape(format!(
                "feature rows {} != entity_count {entity_count}",
                features.rows()
            )));
        }
        let mut relation_counts = vec![0u64; relation_count];
        for (i, t) in triples.iter().enumerate() {
            if t.head as usize >= entity_count || t.tail as usize >= entity_count {
                return Err(KgeError::Shape(format!(
                    "triple {i} references entity outside 0..{entity_count}"
                )));
            }
            match relation_counts.get_mut(t.relation as usize) {
                Some(c) => *c += 1,
                None => {
                    return Err(KgeError::Shape(format!(
                        "triple {i} references relation {} outside 0..{relation_count}",
                        t.relation
                    )))
                }
            }
        }
        Ok(KnowledgeGraph {
            entity_count,
            relation_count,
            triples,
            features,
            relation_counts,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn relation_counts(&self) -> &[u64] {
        &self.relation_counts
    }

    /// Same graph with a different triple list (features and vocabularies kept).
    pub fn with_triples(&self, triples: Vec<Triple>) -> Result<Self> {
        KnowledgeGraph::new(
            self.entity_count,
            self.relation_count,
            triples,
            self.features.clone(),
        )
    }

    pub fn with_features(self, features: FeatureMatrix) -> Result<Self> {
        KnowledgeGraph::new(self.entity_count, self.relation_count, self.triples, features)
    }
}

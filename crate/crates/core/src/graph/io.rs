//! KGT (triples) and KGF (features) binary formats.
//!
//! ```text
//! KGT: "KGT1" | u64 entity_count | u64 relation_count | u64 triple_count
//!      | triple_count × (u32 head, u32 relation, u32 tail)
//! KGF: "KGF1" | u64 row_count | u32 dim | u8 precision (0 = f32, 1 = f16)
//!      | row-major values
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureMatrix, KnowledgeGraph, Triple, PADDING_ENTITY};
use crate::error::{KgeError, Result};
use crate::wire::OffsetReader;

const KGT_MAGIC: &[u8; 4] = b"KGT1";
const KGF_MAGIC: &[u8; 4] = b"KGF1";

// Upper bound on speculative allocation from an untrusted header.
const MAX_PREALLOC: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriplesHeader {
    pub entity_count: u64,
    pub relation_count: u64,
    pub triple_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureEncoding {
    F32,
    F16,
}

/// Decodes a complete KGT stream, validating every id against the header.
pub fn decode_triples<R: Read>(reader: R) -> Result<(TriplesHeader, Vec<Triple>)> {
    let mut r = OffsetReader::new(reader, "KGT");
    r.magic(KGT_MAGIC)?;
    let header = TriplesHeader {
        entity_count: r.u64("entity_count")?,
        relation_count: r.u64("relation_count")?,
        triple_count: r.u64("triple_count")?,
    };
    if header.entity_count >= PADDING_ENTITY as u64 {
        return Err(KgeError::format("KGT", 4, "entity_count exceeds 32-bit id space"));
    }
    if header.relation_count > u32::MAX as u64 {
        return Err(KgeError::format("KGT", 12, "relation_count exceeds 32-bit id space"));
    }
    let cap = (header.triple_count as usize).min(MAX_PREALLOC);
    let mut triples = Vec::with_capacity(cap);
    for _ in 0..header.triple_count {
        let at = r.offset;
        let head = r.u32("triple record")?;
        let relation = r.u32("triple record")?;
        let tail = r.u32("triple record")?;
        if head as u64 >= header.entity_count || tail as u64 >= header.entity_count {
            return Err(KgeError::format("KGT", at, "entity id out of range"));
        }
        if relation as u64 >= header.relation_count {
            return Err(KgeError::format("KGT", at, "relation id out of range"));
        }
        triples.push(Triple {
            head,
            relation,
            tail,
        });
    }
    r.expect_eof()?;
    Ok((header, triples))
}

pub fn encode_triples<W: Write>(
    mut w: W,
    entity_count: usize,
    relation_count: usize,
    triples: &[Triple],
) -> Result<()> {
    w.write_all(KGT_MAGIC)?;
    w.write_all(&(entity_count as u64).to_le_bytes())?;
    w.write_all(&(relation_count as u64).to_le_bytes())?;
    w.write_all(&(triples.len() as u64).to_le_bytes())?;
    for t in triples {
        w.write_all(&t.head.to_le_bytes())?;
        w.write_all(&t.relation.to_le_bytes())?;
        w.write_all(&t.tail.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn decode_features<R: Read>(reader: R) -> Result<FeatureMatrix> {
    let mut r = OffsetReader::new(reader, "KGF");
    r.magic(KGF_MAGIC)?;
    let rows = r.u64("row_count")?;
    let dim = r.u32("dim")? as u64;
    let encoding = match r.u8("precision flag")? {
        0 => FeatureEncoding::F32,
        1 => FeatureEncoding::F16,
        other => {
            return Err(KgeError::format(
                "KGF",
                16,
                format!("unknown precision flag {other}"),
            ))
        }
    };
    let total = rows
        .checked_mul(dim)
        .filter(|n| *n <= usize::MAX as u64 / 8)
        .ok_or_else(|| KgeError::format("KGF", 4, "row_count × dim overflows"))?;
    let mut data = Vec::with_capacity((total as usize).min(MAX_PREALLOC));
    match encoding {
        FeatureEncoding::F32 => {
            let mut b = [0u8; 4];
            for _ in 0..total {
                r.fill(&mut b, "feature value")?;
                data.push(f32::from_le_bytes(b));
            }
        }
        FeatureEncoding::F16 => {
            let mut b = [0u8; 2];
            for _ in 0..total {
                r.fill(&mut b, "feature value")?;
                data.push(half::f16::from_le_bytes(b).to_f32());
            }
        }
    }
    r.expect_eof()?;
    FeatureMatrix::new(rows as usize, dim as usize, data)
}

pub fn encode_features<W: Write>(
    mut w: W,
    features: &FeatureMatrix,
    encoding: FeatureEncoding,
) -> Result<()> {
    w.write_all(KGF_MAGIC)?;
    w.write_all(&(features.rows() as u64).to_le_bytes())?;
    w.write_all(&(features.dim() as u32).to_le_bytes())?;
    match encoding {
        FeatureEncoding::F32 => {
            w.write_all(&[0u8])?;
            for v in features.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        FeatureEncoding::F16 => {
            w.write_all(&[1u8])?;
            for v in features.as_slice() {
                w.write_all(&half::f16::from_f32(*v).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a KGT file and checks its header against the expected vocabulary
/// sizes. The returned graph carries zero-dimensional features.
pub fn ingest_triples(
    path: &Path,
    entity_count: usize,
    relation_count: usize,
) -> Result<KnowledgeGraph> {
    let (header, triples) = decode_triples(BufReader::new(File::open(path)?))?;
    if header.entity_count != entity_count as u64 {
        return Err(KgeError::format(
            "KGT",
            4,
            format!(
                "entity_count {} does not match expected {entity_count}",
                header.entity_count
            ),
        ));
    }
    if header.relation_count != relation_count as u64 {
        return Err(KgeError::format(
            "KGT",
            12,
            format!(
                "relation_count {} does not match expected {relation_count}",
                header.relation_count
            ),
        ));
    }
    KnowledgeGraph::new(
        entity_count,
        relation_count,
        triples,
        FeatureMatrix::zeros(entity_count, 0),
    )
}

pub fn ingest_features(path: &Path) -> Result<FeatureMatrix> {
    decode_features(BufReader::new(File::open(path)?))
}

/// Loads a graph from a KGT file plus an optional KGF feature file,
/// taking vocabulary sizes from the KGT header.
pub fn ingest_graph(triples: &Path, features: Option<&Path>) -> Result<KnowledgeGraph> {
    let (header, list) = decode_triples(BufReader::new(File::open(triples)?))?;
    let entity_count = header.entity_count as usize;
    let features = match features {
        Some(p) => ingest_features(p)?,
        None => FeatureMatrix::zeros(entity_count, 0),
    };
    KnowledgeGraph::new(entity_count, header.relation_count as usize, list, features)
}

pub fn write_triples(path: &Path, graph: &KnowledgeGraph) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    encode_triples(w, graph.entity_count(), graph.relation_count(), graph.triples())
}

pub fn write_features(path: &Path, graph: &KnowledgeGraph, encoding: FeatureEncoding) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    encode_features(w, graph.features(), encoding)
}

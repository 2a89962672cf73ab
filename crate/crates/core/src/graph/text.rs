//! Tab-separated text inputs for ingestion: `head\trelation\ttail` triples
//! and one feature row per line.

use super::{EntityId, FeatureMatrix, Triple, PADDING_ENTITY};
use crate::error::{KgeError, Result};

/// Parses integer-id triples. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_triples_tsv(text: &str) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(KgeError::parse("triples", n + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let id = |i: usize, name: &str| -> Result<EntityId> {
            cols[i]
                .trim()
                .parse::<u32>()
                .ok()
                .filter(|&v| v != PADDING_ENTITY)
                .ok_or_else(|| KgeError::parse("triples", n + 1, format!("bad {name} {:?}", cols[i])))
        };
        out.push(Triple::new(id(0, "head")?, id(1, "relation")?, id(2, "tail")?));
    }
    Ok(out)
}

/// Parses a dense feature matrix, one tab-separated row per entity.
pub fn parse_features_tsv(text: &str) -> Result<FeatureMatrix> {
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let start = data.len();
        for v in line.split('\t') {
            let x: f32 = v
                .trim()
                .parse()
                .ok()
                .filter(|x: &f32| x.is_finite())
                .ok_or_else(|| KgeError::parse("features", n + 1, format!("bad value {v:?}")))?;
            data.push(x);
        }
        let width = data.len() - start;
        if *dim.get_or_insert(width) != width {
            return Err(KgeError::parse("features", n + 1, format!("row has {width} values, expected {}", dim.unwrap())));
        }
        rows += 1;
    }
    FeatureMatrix::new(rows, dim.unwrap_or(0), data)
}

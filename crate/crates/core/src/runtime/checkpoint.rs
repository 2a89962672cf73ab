//! KGC1 checkpoints: everything needed to resume a run bit-exactly.
//!
//! ```text
//! "KGC1" | [32] config digest | u64 seed | u64 step
//!        | u8 storage (0 half, 1 single, 2 double) | u8 compute width (4, 8)
//!        | u32 workers | u64 shard rows | u32 d | u32 F | u64 replicated length
//!        | per worker: rows × u32 entity id, rows·d embeddings, rows·d first
//!          moments, rows·d second moments, rows·F features
//!        | replicated values, first moments, second moments
//! ```
//!
//! Values are little-endian at compute width.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::cluster::Cluster;
use crate::error::{KgeError, Result};
use crate::graph::EntityId;
use crate::real::{Real, StoragePrecision};
use crate::wire::{native, put_values, OffsetReader};

const MAGIC: &[u8; 4] = b"KGC1";

pub fn config_digest(config_text: &str) -> [u8; 32] {
    Sha256::digest(config_text.as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardDump<T> {
    pub entities: Vec<EntityId>,
    pub embeddings: Vec<T>,
    pub moment1: Vec<T>,
    pub moment2: Vec<T>,
    pub features: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub digest: [u8; 32],
    pub seed: u64,
    /// Completed steps; the resumed run continues with this step index.
    pub step: u64,
    pub storage: StoragePrecision,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub shards: Vec<ShardDump<T>>,
    pub shared: Vec<T>,
    pub shared_moment1: Vec<T>,
    pub shared_moment2: Vec<T>,
}

fn storage_code(p: StoragePrecision) -> u8 {
    match p {
        StoragePrecision::Half => 0,
        StoragePrecision::Single => 1,
        StoragePrecision::Double => 2,
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn encode(&self) -> Vec<u8> {
        let w = native::<T>();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.push(storage_code(self.storage));
        out.push(T::BYTES as u8);
        out.extend_from_slice(&(self.shards.len() as u32).to_le_bytes());
        let rows = self.shards.first().map_or(0, |s| s.entities.len());
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.embedding_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.feature_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.shared.len() as u64).to_le_bytes());
        for s in &self.shards {
            for e in &s.entities {
                out.extend_from_slice(&e.to_le_bytes());
            }
            put_values(&s.embeddings, w, &mut out);
            put_values(&s.moment1, w, &mut out);
            put_values(&s.moment2, w, &mut out);
            put_values(&s.features, w, &mut out);
        }
        put_values(&self.shared, w, &mut out);
        put_values(&self.shared_moment1, w, &mut out);
        put_values(&self.shared_moment2, w, &mut out);
        out
    }

    /// Decodes a complete checkpoint. Errors carry the byte offset of the
    /// offending field.
    pub fn decode<R: Read>(reader: R) -> Result<Self> {
        let mut r = OffsetReader::new(reader, "checkpoint");
        r.magic(MAGIC)?;
        let digest = r.bytes::<32>("config digest")?;
        let seed = r.u64("seed")?;
        let step = r.u64("step")?;
        let at = r.offset;
        let storage = match r.u8("storage precision")? {
            0 => StoragePrecision::Half,
            1 => StoragePrecision::Single,
            2 => StoragePrecision::Double,
            other => return Err(KgeError::format("checkpoint", at, format!("unknown storage precision {other}"))),
        };
        let at = r.offset;
        let width = r.u8("compute width")?;
        if width as usize != T::BYTES {
            return Err(KgeError::format(
                "checkpoint",
                at,
                format!("values are {width}-byte, reader expects {}-byte", T::BYTES),
            ));
        }
        let at = r.offset;
        let workers = r.u32("worker count")?;
        if workers == 0 {
            return Err(KgeError::format("checkpoint", at, "zero workers"));
        }
        let at = r.offset;
        let rows = r.u64("shard rows")?;
        if rows == 0 {
            return Err(KgeError::format("checkpoint", at, "empty shards"));
        }
        let d = r.u32("embedding dim")? as u64;
        let f = r.u32("feature dim")? as u64;
        let shared_len = r.u64("replicated length")?;
        let at = r.offset;
        let overflow = || KgeError::format("checkpoint", at, "shape overflows");
        let rd = rows.checked_mul(d).ok_or_else(overflow)?;
        let rf = rows.checked_mul(f).ok_or_else(overflow)?;
        let w = native::<T>();
        let mut shards = Vec::new();
        for _ in 0..workers {
            let entities = r.u32s(rows, "entity ids")?;
            shards.push(ShardDump {
                entities,
                embeddings: r.values(rd, w, "embeddings")?,
                moment1: r.values(rd, w, "first moments")?,
                moment2: r.values(rd, w, "second moments")?,
                features: r.values(rf, w, "features")?,
            });
        }
        let shared = r.values(shared_len, w, "replicated values")?;
        let shared_moment1 = r.values(shared_len, w, "replicated first moments")?;
        let shared_moment2 = r.values(shared_len, w, "replicated second moments")?;
        r.expect_eof()?;
        Ok(Checkpoint {
            digest,
            seed,
            step,
            storage,
            embedding_dim: d as usize,
            feature_dim: f as usize,
            shards,
            shared,
            shared_moment1,
            shared_moment2,
        })
    }

    /// Writes to a temporary sibling and renames it into place, so an
    /// interrupted save never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.encode())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(std::io::BufReader::new(fs::File::open(path)?))
    }
}

impl<T: Real> Cluster<T> {
    pub fn checkpoint(&self, digest: [u8; 32]) -> Result<Checkpoint<T>> {
        if !self.replicas_consistent() {
            return Err(KgeError::Checkpoint("replicated parameters diverged across workers".into()));
        }
        let first = &self.workers()[0];
        Ok(Checkpoint {
            digest,
            seed: self.options().seed,
            step: self.step(),
            storage: self.options().storage,
            embedding_dim: self.config().embedding_dim,
            feature_dim: self.config().feature_dim,
            shards: self
                .workers()
                .iter()
                .map(|w| ShardDump {
                    entities: w.entities.clone(),
                    embeddings: w.embeddings.clone(),
                    moment1: w.moment1.clone(),
                    moment2: w.moment2.clone(),
                    features: w.features.clone(),
                })
                .collect(),
            shared: first.shared.flatten(),
            shared_moment1: first.shared_moment1.clone(),
            shared_moment2: first.shared_moment2.clone(),
        })
    }

    /// Loads shard rows, replicas, optimiser state and the step counter.
    /// The cluster must have been built with the same configuration.
    pub fn restore(&mut self, ckpt: &Checkpoint<T>, expected_digest: [u8; 32]) -> Result<()> {
        if ckpt.digest != expected_digest {
            return Err(KgeError::Checkpoint("config digest differs from the running configuration".into()));
        }
        if ckpt.seed != self.options().seed || ckpt.storage != self.options().storage {
            return Err(KgeError::Checkpoint("seed or storage precision differs".into()));
        }
        if ckpt.shards.len() != self.worker_count()
            || ckpt.embedding_dim != self.config().embedding_dim
            || ckpt.feature_dim != self.config().feature_dim
        {
            return Err(KgeError::Checkpoint("worker count or embedding shape differs".into()));
        }
        for (w, s) in self.workers().iter().zip(&ckpt.shards) {
            if w.entities != s.entities {
                return Err(KgeError::Checkpoint(format!("shard {} holds different entities", w.index)));
            }
            if s.embeddings.len() != w.embeddings.len() || s.features.len() != w.features.len() {
                return Err(KgeError::Checkpoint(format!("shard {} has a different shape", w.index)));
            }
        }
        let shared_len = self.workers()[0].shared.len();
        if ckpt.shared.len() != shared_len
            || ckpt.shared_moment1.len() != shared_len
            || ckpt.shared_moment2.len() != shared_len
        {
            return Err(KgeError::Checkpoint("replicated parameter length differs".into()));
        }
        for (w, s) in self.workers_mut().iter_mut().zip(&ckpt.shards) {
            w.embeddings.clone_from(&s.embeddings);
            w.moment1.clone_from(&s.moment1);
            w.moment2.clone_from(&s.moment2);
            w.features.clone_from(&s.features);
            w.shared.load_flat(&ckpt.shared)?;
            w.shared_moment1.clone_from(&ckpt.shared_moment1);
            w.shared_moment2.clone_from(&ckpt.shared_moment2);
        }
        self.set_step(ckpt.step);
        Ok(())
    }
}

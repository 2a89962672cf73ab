//! The training loop: sampling, lockstep steps, periodic MRR evaluation,
//! metrics log and checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::{evaluate_triples, infer_topk, QueryFile, RankedPredictions};
use crate::graph::{bucket_triples, partition_entities, KnowledgeGraph, Triple};
use crate::model::ModelParams;
use crate::real::Real;
use crate::runtime::{config_digest, Checkpoint, Cluster, ClusterOptions, MetricsRecord};
use crate::sampling::PlanSampler;
use crate::seed::derive_seed;

const TRAIN_EVAL_STREAM: u64 = 0x6576616c;

pub const CHECKPOINT_FILE: &str = "checkpoint.kgc";
pub const METRICS_FILE: &str = "metrics.tsv";

/// Digest of the keys that determine the training trajectory.
pub fn trajectory_digest(config: &RunConfig) -> [u8; 32] {
    let text: String = config
        .entries()
        .into_iter()
        .filter(|(k, _)| {
            !k.starts_with("runtime.")
                || matches!(*k, "runtime.workers" | "runtime.precision" | "runtime.seed")
        })
        .filter(|(k, _)| *k != "schedule.eval_interval")
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    config_digest(&text)
}

pub struct TrainingRun<'g, T> {
    config: RunConfig,
    graph: &'g KnowledgeGraph,
    sampler: PlanSampler,
    cluster: Cluster<T>,
    digest: [u8; 32],
}

impl<'g, T: Real> TrainingRun<'g, T> {
    /// Partitions `graph` and initialises a fresh model from the run seed.
    pub fn new(config: &RunConfig, graph: &'g KnowledgeGraph) -> Result<Self> {
        config.validate()?;
        let r = &config.runtime;
        let partition = partition_entities(graph, r.workers, r.seed)?;
        let buckets = bucket_triples(graph, &partition)?;
        let sampler = PlanSampler::new(graph, &buckets, &partition, &config.sampler_config())?;
        let params = ModelParams::<T>::init(&config.model, graph.entity_count(), graph.relation_count(), r.seed, r.precision);
        let options = ClusterOptions {
            storage: r.precision,
            optimizer: config.schedule.optimizer,
            seed: r.seed,
            filter_false_negatives: config.sampler.filter_false_negatives,
            mode: r.mode,
        };
        let cluster = Cluster::new(graph, partition, &config.model, &params, options)?;
        Ok(TrainingRun {
            config: config.clone(),
            graph,
            sampler,
            cluster,
            digest: trajectory_digest(config),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn cluster(&self) -> &Cluster<T> {
        &self.cluster
    }

    pub fn cluster_mut(&mut self) -> &mut Cluster<T> {
        &mut self.cluster
    }

    pub fn sampler(&self) -> &PlanSampler {
        &self.sampler
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    /// Loads a checkpoint written by a run with the same trajectory keys.
    pub fn resume(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::load(path)?;
        self.cluster.restore(&ckpt, self.digest)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.cluster.checkpoint(self.digest)?.save(path)
    }

    /// Runs one step at the scheduled learning rate and returns its loss.
    pub fn step(&mut self) -> Result<f64> {
        let step = self.cluster.step();
        let lr = self.config.schedule.lr_at(step)?;
        let plan = self.sampler.sample(step);
        Ok(self.cluster.train_step(self.graph, &plan, lr)?.loss)
    }

    /// MRR@10 on a fixed seeded sample of training triples.
    pub fn train_mrr(&mut self) -> Result<Option<f64>> {
        let n = self.config.runtime.train_eval_samples.min(self.graph.triples().len());
        if n == 0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.config.runtime.seed, TRAIN_EVAL_STREAM]));
        let mut picks = rand::seq::index::sample(&mut rng, self.graph.triples().len(), n).into_vec();
        picks.sort_unstable();
        let sample: Vec<Triple> = picks.into_iter().map(|k| self.graph.triples()[k]).collect();
        evaluate_triples(&mut self.cluster, &sample, self.config.runtime.query_micro_batch_size).map(Some)
    }

    /// MRR@10 on (a prefix of) the labelled queries.
    pub fn mrr_on(&mut self, queries: &QueryFile) -> Result<f64> {
        let limit = match self.config.runtime.valid_eval_samples {
            0 => queries.queries.len(),
            n => n.min(queries.queries.len()),
        };
        let labels = queries.labels()?;
        let preds = infer_topk(&mut self.cluster, &queries.queries[..limit], 10, self.config.runtime.query_micro_batch_size)?;
        crate::eval::mrr_at_10(&preds, &labels[..limit])
    }

    pub fn predict(&mut self, queries: &QueryFile, k: usize) -> Result<RankedPredictions> {
        infer_topk(&mut self.cluster, &queries.queries, k, self.config.runtime.query_micro_batch_size)
    }

    /// Trains from the current step to `schedule.total_steps`, writing one
    /// metrics record per evaluation to `metrics` and checkpoints to
    /// `checkpoint` at the configured cadence and at the end.
    pub fn run(
        &mut self,
        valid: Option<&QueryFile>,
        metrics: &mut dyn Write,
        checkpoint: Option<&Path>,
    ) -> Result<Vec<MetricsRecord>> {
        let total = self.config.schedule.total_steps;
        let interval = self.config.schedule.eval_interval;
        let cadence = self.config.runtime.checkpoint_interval;
        let mut records = Vec::new();
        let (mut loss_sum, mut steps, mut started) = (0.0, 0u64, Instant::now());
        if self.cluster.step() == 0 {
            writeln!(metrics, "{}", MetricsRecord::HEADER)?;
        }
        while self.cluster.step() < total {
            let step = self.cluster.step();
            let lr = self.config.schedule.lr_at(step)?;
            let plan = self.sampler.sample(step);
            let report = self.cluster.train_step(self.graph, &plan, lr)?;
            loss_sum += report.loss;
            steps += 1;
            let last_bytes = report.bytes();
            let done = step + 1;
            if (interval > 0 && done % interval == 0) || done == total {
                let secs = started.elapsed().as_secs_f64();
                let per_step = (self.config.sampler.micro_batch_size * self.config.runtime.workers) as f64;
                let train_mrr = self.train_mrr()?;
                let valid_mrr = valid.map(|v| self.mrr_on(v)).transpose()?;
                let record = MetricsRecord {
                    step: done,
                    lr,
                    loss: loss_sum / steps as f64,
                    train_mrr,
                    valid_mrr,
                    triples_per_second: if secs > 0.0 { per_step * steps as f64 / secs } else { 0.0 },
                    bytes_per_step: last_bytes as f64,
                };
                log::info!("{record}");
                writeln!(metrics, "{record}")?;
                metrics.flush()?;
                records.push(record);
                loss_sum = 0.0;
                steps = 0;
                started = Instant::now();
            }
            if let Some(path) = checkpoint {
                if (cadence > 0 && done % cadence == 0) || done == total {
                    self.save_checkpoint(path)?;
                }
            }
        }
        Ok(records)
    }
}

/// Standard output locations under `runtime.out_dir`.
pub fn output_paths(out_dir: &Path) -> (PathBuf, PathBuf) {
    (out_dir.join(CHECKPOINT_FILE), out_dir.join(METRICS_FILE))
}

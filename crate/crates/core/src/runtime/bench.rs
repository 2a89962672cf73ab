use std::time::Instant;

use super::cluster::Cluster;
use crate::error::{KgeError, Result};
use crate::graph::KnowledgeGraph;
use crate::real::Real;
use crate::sampling::PlanSampler;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub steps: u64,
    pub workers: usize,
    /// `B·D`
    pub triples_per_step: u64,
    pub elapsed_seconds: f64,
    pub triples_per_second: f64,
    pub mean_step_seconds: f64,
    pub min_step_seconds: f64,
    pub max_step_seconds: f64,
    pub bytes_per_step: f64,
}

impl BenchmarkReport {
    pub fn to_tsv(&self) -> String {
        let rows = [
            ("steps", self.steps.to_string()),
            ("workers", self.workers.to_string()),
            ("triples_per_step", self.triples_per_step.to_string()),
            ("elapsed_seconds", format!("{:.6}", self.elapsed_seconds)),
            ("triples_per_second", format!("{:.1}", self.triples_per_second)),
            ("mean_step_seconds", format!("{:.6}", self.mean_step_seconds)),
            ("min_step_seconds", format!("{:.6}", self.min_step_seconds)),
            ("max_step_seconds", format!("{:.6}", self.max_step_seconds)),
            ("bytes_per_step", format!("{:.1}", self.bytes_per_step)),
        ];
        let mut out = String::from("metric\tvalue\n");
        for (k, v) in rows {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        out
    }
}

/// Times `steps` training steps at learning rate `lr`, starting from the
/// cluster's current step. Warm up beforehand if cold caches matter.
pub fn benchmark_throughput<T: Real>(
    cluster: &mut Cluster<T>,
    graph: &KnowledgeGraph,
    sampler: &PlanSampler,
    steps: u64,
    lr: f64,
) -> Result<BenchmarkReport> {
    if steps == 0 {
        return Err(KgeError::Benchmark("no measurement window".into()));
    }
    let b = sampler.config().micro_batch_size as u64;
    let d = cluster.worker_count();
    let mut times = Vec::with_capacity(steps as usize);
    let mut bytes = 0u64;
    let start = Instant::now();
    for _ in 0..steps {
        let t0 = Instant::now();
        let plan = sampler.sample(cluster.step());
        let report = cluster.train_step(graph, &plan, lr)?;
        times.push(t0.elapsed().as_secs_f64());
        bytes += report.bytes();
    }
    let elapsed = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let triples_per_step = b * d as u64;
    Ok(BenchmarkReport {
        steps,
        workers: d,
        triples_per_step,
        elapsed_seconds: elapsed,
        triples_per_second: (triples_per_step * steps) as f64 / elapsed,
        mean_step_seconds: times.iter().sum::<f64>() / steps as f64,
        min_step_seconds: times.iter().cloned().fold(f64::INFINITY, f64::min),
        max_step_seconds: times.iter().cloned().fold(0.0, f64::max),
        bytes_per_step: bytes as f64 / steps as f64,
    })
}

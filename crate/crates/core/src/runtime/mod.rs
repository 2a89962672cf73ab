//! Simulated `D`-worker execution: sharded rows, collectives, optimiser
//! updates, schedules, checkpoints and the per-step cost model.

mod bench;
mod checkpoint;
mod cluster;
mod cost;
mod fabric;
mod metrics;
mod optim;

pub use bench::{benchmark_throughput, BenchmarkReport};
pub use checkpoint::{config_digest, Checkpoint, ShardDump};
pub(crate) use cluster::map_workers;
pub use cluster::{Cluster, ClusterOptions, ExecutionMode, StepReport, WorkerState, DROPOUT_STREAM};
pub use cost::{cost_model, CostEstimate};
pub use fabric::{CollectiveFabric, TrafficKind, TrafficMatrix};
pub use metrics::MetricsRecord;
pub use optim::{LrDecay, Optimizer, TrainSchedule};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fabric::{CollectiveFabric, TrafficKind, TrafficMatrix};
use super::optim::Optimizer;
use crate::error::{KgeError, Result};
use crate::graph::{EntityId, EntityPartition, KnowledgeGraph, PADDING_ENTITY};
use crate::model::{batch_forward_backward, BatchGrads, BatchInput, DropoutMasks, ModelConfig, ModelParams, SharedParams};
use crate::real::{Real, StoragePrecision};
use crate::sampling::{make_shared_negative_mask, MicroBatchPlan};
use crate::seed::derive_seed;
use crate::wire::{get_values, native, put_values};

/// Stream tag mixed into dropout seeds: `(seed, step, worker, DROPOUT_STREAM)`.
pub const DROPOUT_STREAM: u64 = 0x64726f70;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    /// Workers run concurrently on the rayon pool.
    Parallel,
    /// Workers run one after another in index order.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOptions {
    pub storage: StoragePrecision,
    pub optimizer: Optimizer,
    /// Run seed; dropout masks derive from it.
    pub seed: u64,
    pub filter_false_negatives: bool,
    pub mode: ExecutionMode,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            storage: StoragePrecision::Single,
            optimizer: Optimizer::default(),
            seed: 0,
            filter_false_negatives: false,
            mode: ExecutionMode::Parallel,
        }
    }
}

/// One worker's shard and its replica of the small parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState<T> {
    pub index: usize,
    /// Entity id of every shard row, padding rows included.
    pub entities: Vec<EntityId>,
    /// `rows × d` shallow embeddings at storage precision.
    pub embeddings: Vec<T>,
    pub moment1: Vec<T>,
    pub moment2: Vec<T>,
    /// `rows × F` features at storage precision.
    pub features: Vec<T>,
    pub shared: SharedParams<T>,
    pub shared_moment1: Vec<T>,
    pub shared_moment2: Vec<T>,
}

impl<T: Real> WorkerState<T> {
    pub fn rows(&self) -> usize {
        self.entities.len()
    }

    pub fn embedding(&self, row: usize) -> &[T] {
        let d = self.shared.embedding_dim;
        &self.embeddings[row * d..(row + 1) * d]
    }

    pub fn feature(&self, row: usize) -> &[T] {
        let f = self.shared.feature_dim;
        &self.features[row * f..(row + 1) * f]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Index of the step that was applied.
    pub step: u64,
    pub lr: f64,
    /// Mean over workers of the micro-batch objective.
    pub loss: f64,
    pub worker_losses: Vec<f64>,
    pub traffic: TrafficMatrix,
}

impl StepReport {
    pub fn bytes(&self) -> u64 {
        self.traffic.total()
    }
}

/// `D` simulated workers advancing in lockstep.
#[derive(Debug, Clone)]
pub struct Cluster<T> {
    config: ModelConfig,
    options: ClusterOptions,
    entity_count: usize,
    partition: EntityPartition,
    workers: Vec<WorkerState<T>>,
    fabric: CollectiveFabric,
    step: u64,
}

pub(crate) fn map_workers<W: Sync, R: Send>(mode: ExecutionMode, items: &[W], f: impl Fn(&W) -> R + Sync + Send) -> Vec<R> {
    match mode {
        ExecutionMode::Parallel => items.par_iter().map(f).collect(),
        ExecutionMode::Sequential => items.iter().map(f).collect(),
    }
}

fn map_workers_mut<W: Send, R: Send>(
    mode: ExecutionMode,
    items: &mut [W],
    f: impl Fn(usize, &mut W) -> R + Sync + Send,
) -> Vec<R> {
    match mode {
        ExecutionMode::Parallel => items.par_iter_mut().enumerate().map(|(i, w)| f(i, w)).collect(),
        ExecutionMode::Sequential => items.iter_mut().enumerate().map(|(i, w)| f(i, w)).collect(),
    }
}

fn split_pad<T: Real>(flat: &[T], parts: usize) -> Vec<Vec<T>> {
    let chunk = flat.len().div_ceil(parts);
    (0..parts)
        .map(|k| {
            let mut c: Vec<T> = flat.iter().skip(k * chunk).take(chunk).copied().collect();
            c.resize(chunk, T::zero());
            c
        })
        .collect()
}

impl<T: Real> Cluster<T> {
    /// Shards `params` according to `partition`. Entity rows and features
    /// are rounded to the storage precision.
    pub fn new(
        graph: &KnowledgeGraph,
        partition: EntityPartition,
        config: &ModelConfig,
        params: &ModelParams<T>,
        options: ClusterOptions,
    ) -> Result<Self> {
        config.validate()?;
        if graph.feature_dim() != config.feature_dim {
            return Err(KgeError::Shape(format!(
                "graph features have width {}, model expects {}",
                graph.feature_dim(),
                config.feature_dim
            )));
        }
        if params.entity_count != graph.entity_count() || partition.entity_count() != graph.entity_count() {
            return Err(KgeError::Shape("parameter, partition and graph entity counts differ".into()));
        }
        if params.shared.relation_count != graph.relation_count() {
            return Err(KgeError::Shape(format!(
                "parameters cover {} relations, graph has {}",
                params.shared.relation_count,
                graph.relation_count()
            )));
        }
        let d = config.embedding_dim;
        let f = config.feature_dim;
        let storage = options.storage;
        let shared_len = params.shared.len();
        let workers = (0..partition.shard_count())
            .map(|i| {
                let entities = partition.shard_rows(i).to_vec();
                let rows = entities.len();
                let mut embeddings = vec![T::zero(); rows * d];
                let mut features = vec![T::zero(); rows * f];
                for (r, &e) in entities.iter().enumerate() {
                    if e == PADDING_ENTITY {
                        continue;
                    }
                    embeddings[r * d..(r + 1) * d].copy_from_slice(params.entity(e as usize));
                    for (dst, src) in features[r * f..(r + 1) * f].iter_mut().zip(graph.features().row(e as usize)) {
                        *dst = T::lit(*src as f64);
                    }
                }
                storage.quantize_slice(&mut embeddings);
                storage.quantize_slice(&mut features);
                WorkerState {
                    index: i,
                    entities,
                    embeddings,
                    moment1: vec![T::zero(); rows * d],
                    moment2: vec![T::zero(); rows * d],
                    features,
                    shared: params.shared.clone(),
                    shared_moment1: vec![T::zero(); shared_len],
                    shared_moment2: vec![T::zero(); shared_len],
                }
            })
            .collect();
        Ok(Cluster {
            config: config.clone(),
            options,
            entity_count: graph.entity_count(),
            fabric: CollectiveFabric::new(partition.shard_count()),
            partition,
            workers,
            step: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn options(&self) -> &ClusterOptions {
        &self.options
    }

    pub fn set_mode(&mut self, mode: ExecutionMode) {
        self.options.mode = mode;
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn partition(&self) -> &EntityPartition {
        &self.partition
    }

    pub fn workers(&self) -> &[WorkerState<T>] {
        &self.workers
    }

    pub(crate) fn workers_mut(&mut self) -> &mut Vec<WorkerState<T>> {
        &mut self.workers
    }

    pub fn fabric(&self) -> &CollectiveFabric {
        &self.fabric
    }

    pub fn fabric_mut(&mut self) -> &mut CollectiveFabric {
        &mut self.fabric
    }

    /// Number of completed training steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Reassembles the full parameter table (replicas taken from worker 0).
    pub fn to_global(&self) -> ModelParams<T> {
        let d = self.config.embedding_dim;
        let mut entities = vec![T::zero(); self.entity_count * d];
        for w in &self.workers {
            for (r, &e) in w.entities.iter().enumerate() {
                if e != PADDING_ENTITY {
                    let e = e as usize;
                    entities[e * d..(e + 1) * d].copy_from_slice(w.embedding(r));
                }
            }
        }
        ModelParams {
            entity_count: self.entity_count,
            embedding_dim: d,
            entities,
            shared: self.workers[0].shared.clone(),
        }
    }

    /// True when every replica of the small parameters and their optimiser
    /// state is bit-identical.
    pub fn replicas_consistent(&self) -> bool {
        let first = &self.workers[0];
        let bits = |v: &[T]| v.iter().map(|x| x.as_f64().to_bits()).collect::<Vec<_>>();
        self.workers.iter().all(|w| {
            w.shared.buffers().iter().zip(first.shared.buffers()).all(|(a, b)| bits(a) == bits(b))
                && bits(&w.shared_moment1) == bits(&first.shared_moment1)
                && bits(&w.shared_moment2) == bits(&first.shared_moment2)
        })
    }

    fn check_plan(&self, graph: &KnowledgeGraph, plan: &MicroBatchPlan) -> Result<()> {
        let d = self.workers.len();
        let plan_err = |worker: usize, bucket: usize, message: String| KgeError::Plan { worker, bucket, message };
        if plan.workers() != d {
            return Err(plan_err(0, 0, format!("plan is for {} workers, cluster has {d}", plan.workers())));
        }
        if let Some(&(i, j)) = plan.fallbacks().first() {
            return Err(plan_err(i, j, "bucket was empty and filled from other tail shards".into()));
        }
        let bt = plan.triples(0, 0).len();
        let nt = plan.negatives(0, 0).len();
        if bt == 0 || nt == 0 {
            return Err(plan_err(0, 0, "plan has empty buckets".into()));
        }
        let triples = graph.triples();
        for i in 0..d {
            for j in 0..d {
                if plan.triples(i, j).len() != bt || plan.negatives(i, j).len() != nt {
                    return Err(plan_err(i, j, "bucket sizes are not balanced".into()));
                }
                for &k in plan.triples(i, j) {
                    let t = triples
                        .get(k)
                        .ok_or_else(|| plan_err(i, j, format!("triple index {k} out of range")))?;
                    if self.partition.shard_of(t.head) != i {
                        return Err(plan_err(i, j, format!("head {} is not owned by worker {i}", t.head)));
                    }
                    if self.partition.shard_of(t.tail) != j {
                        return Err(plan_err(i, j, format!("tail {} is not in shard {j}", t.tail)));
                    }
                }
                for &e in plan.negatives(i, j) {
                    if e == PADDING_ENTITY || e as usize >= self.entity_count || self.partition.shard_of(e) != j {
                        return Err(plan_err(i, j, format!("negative {e} is not a real entity of shard {j}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// One lockstep training step over `plan` at learning rate `lr`.
    pub fn train_step(&mut self, graph: &KnowledgeGraph, plan: &MicroBatchPlan, lr: f64) -> Result<StepReport> {
        self.check_plan(graph, plan)?;
        let d_workers = self.workers.len();
        let dim = self.config.embedding_dim;
        let fdim = self.config.feature_dim;
        let storage = self.options.storage;
        let compute = native::<T>();
        let mode = self.options.mode;
        let step = self.step;
        let seed = self.options.seed;
        let filter = self.options.filter_false_negatives;
        let partition = &self.partition;
        let triples = graph.triples();
        let config = &self.config;
        let entity_count = self.entity_count;
        self.fabric.begin_step();

        // Owners serve tail and negative rows to every requester.
        let row_bytes = (dim + fdim) * storage.bytes();
        let send: Vec<Vec<Vec<u8>>> = map_workers(mode, &self.workers, |w| {
            let j = w.index;
            (0..d_workers)
                .map(|i| {
                    let tails = plan.triples(i, j).iter().map(|&k| triples[k].tail);
                    let negs = plan.negatives(i, j).iter().copied();
                    let mut buf = Vec::with_capacity(
                        (plan.triples(i, j).len() + plan.negatives(i, j).len()) * row_bytes,
                    );
                    for e in tails.chain(negs) {
                        let r = partition.row_of(e);
                        put_values(w.embedding(r), storage, &mut buf);
                        put_values(w.feature(r), storage, &mut buf);
                    }
                    buf
                })
                .collect()
        });
        let rows_in = self.fabric.all_to_all(TrafficKind::RowExchange, send, 1)?;

        // Replicated parameters: each worker contributes its slice.
        let slices: Vec<Vec<u8>> = self
            .workers
            .iter()
            .map(|w| {
                let mut buf = Vec::new();
                put_values(&split_pad(&w.shared.flatten(), d_workers)[w.index], compute, &mut buf);
                buf
            })
            .collect();
        let gathered = self.fabric.all_gather(TrafficKind::ParamGather, slices, 1)?;

        // Forward and backward per worker.
        let outputs: Vec<Result<BatchGrads<T>>> = {
            let work: Vec<(&WorkerState<T>, &Vec<Vec<u8>>, &Vec<u8>)> = self
                .workers
                .iter()
                .zip(&rows_in)
                .zip(&gathered)
                .map(|((w, r), g)| (w, r, g))
                .collect();
            map_workers(mode, &work, |&(w, incoming, params_bytes)| {
                let i = w.index;
                let mut flat = Vec::new();
                get_values::<T>(params_bytes, compute, &mut flat);
                let mut shared = w.shared.zeros_like();
                shared.load_flat(&flat[..shared.len()])?;

                let positives: Vec<usize> = plan.worker_triples(i).collect();
                let relations: Vec<u32> = positives.iter().map(|&k| triples[k].relation).collect();
                let mut head_shallow = Vec::with_capacity(positives.len() * dim);
                let mut head_features = Vec::with_capacity(positives.len() * fdim);
                for &k in &positives {
                    let r = partition.row_of(triples[k].head);
                    head_shallow.extend_from_slice(w.embedding(r));
                    head_features.extend_from_slice(w.feature(r));
                }
                let mut tail_shallow = Vec::new();
                let mut tail_features = Vec::new();
                let mut neg_shallow = Vec::new();
                let mut neg_features = Vec::new();
                for (j, chunk) in incoming.iter().enumerate() {
                    let mut vals = Vec::new();
                    get_values::<T>(chunk, storage, &mut vals);
                    let bt = plan.triples(i, j).len();
                    for (r, row) in vals.chunks(dim + fdim).enumerate() {
                        let (s, f) = row.split_at(dim);
                        if r < bt {
                            tail_shallow.extend_from_slice(s);
                            tail_features.extend_from_slice(f);
                        } else {
                            neg_shallow.extend_from_slice(s);
                            neg_features.extend_from_slice(f);
                        }
                    }
                }
                let b = positives.len();
                let n = neg_shallow.len() / dim;
                let dropout = (config.feature_dropout > 0.0).then(|| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, step, i as u64, DROPOUT_STREAM]));
                    DropoutMasks::sample(config.feature_dropout, b, n, dim, &mut rng)
                });
                let mask = filter.then(|| make_shared_negative_mask(plan, graph, i, true));
                let input = BatchInput {
                    relations: &relations,
                    head_shallow: &head_shallow,
                    head_features: &head_features,
                    tail_shallow: &tail_shallow,
                    tail_features: &tail_features,
                    negative_shallow: &neg_shallow,
                    negative_features: &neg_features,
                    mask: mask.as_ref(),
                    dropout: dropout.as_ref(),
                };
                batch_forward_backward(config, entity_count, &shared, &input)
            })
        };
        let grads: Vec<BatchGrads<T>> = outputs.into_iter().collect::<Result<_>>()?;

        // Tail and negative gradients go back to their owners.
        let send: Vec<Vec<Vec<u8>>> = grads
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut tail_at = 0;
                let mut neg_at = 0;
                (0..d_workers)
                    .map(|j| {
                        let bt = plan.triples(i, j).len();
                        let nt = plan.negatives(i, j).len();
                        let mut buf = Vec::new();
                        put_values(&g.tail[tail_at * dim..(tail_at + bt) * dim], compute, &mut buf);
                        put_values(&g.negative[neg_at * dim..(neg_at + nt) * dim], compute, &mut buf);
                        tail_at += bt;
                        neg_at += nt;
                        buf
                    })
                    .collect()
            })
            .collect();
        let grads_in = self.fabric.all_to_all(TrafficKind::GradientReturn, send, 1)?;

        // Replicated-parameter gradients: gather all, sum in worker order.
        let shared_grads: Vec<Vec<u8>> = grads
            .iter()
            .map(|g| {
                let mut buf = Vec::new();
                put_values(&g.shared.flatten(), compute, &mut buf);
                buf
            })
            .collect();
        let reduced = self.fabric.all_gather(TrafficKind::GradientReduce, shared_grads, 1)?;

        let lr_t = T::lit(lr);
        let t = step + 1;
        let optimizer = self.options.optimizer;
        let head_grads: Vec<&[T]> = grads.iter().map(|g| g.head.as_slice()).collect();
        let results: Vec<Result<()>> = map_workers_mut(mode, &mut self.workers, |j, w| {
            // Sum per-row gradients in the canonical order: for each source
            // worker i, own heads (i = j) then tails of B_{i,j} then N_{i,j}.
            let rows = w.rows();
            let mut acc = vec![T::zero(); rows * dim];
            let mut touched = vec![false; rows];
            let mut add = |row: usize, g: &[T]| {
                touched[row] = true;
                for (a, x) in acc[row * dim..(row + 1) * dim].iter_mut().zip(g) {
                    *a = *a + *x;
                }
            };
            for i in 0..d_workers {
                if i == j {
                    for (b, k) in plan.worker_triples(j).enumerate() {
                        add(partition.row_of(triples[k].head), &head_grads[j][b * dim..(b + 1) * dim]);
                    }
                }
                let mut vals = Vec::new();
                get_values::<T>(&grads_in[j][i], compute, &mut vals);
                let ents = plan.triples(i, j).iter().map(|&k| triples[k].tail).chain(plan.negatives(i, j).iter().copied());
                for (e, g) in ents.zip(vals.chunks(dim)) {
                    add(partition.row_of(e), g);
                }
            }
            for r in (0..rows).filter(|&r| touched[r]) {
                let span = r * dim..(r + 1) * dim;
                optimizer.update(
                    &mut w.embeddings[span.clone()],
                    &acc[span.clone()],
                    &mut w.moment1[span.clone()],
                    &mut w.moment2[span.clone()],
                    lr_t,
                    t,
                );
                storage.quantize_slice(&mut w.embeddings[span]);
            }

            let len = w.shared.len();
            let mut total = vec![T::zero(); len];
            let per = reduced[j].len() / d_workers;
            for i in 0..d_workers {
                let mut vals = Vec::new();
                get_values::<T>(&reduced[j][i * per..(i + 1) * per], compute, &mut vals);
                for (a, x) in total.iter_mut().zip(&vals) {
                    *a = *a + *x;
                }
            }
            let mut flat = w.shared.flatten();
            optimizer.update(&mut flat, &total, &mut w.shared_moment1, &mut w.shared_moment2, lr_t, t);
            w.shared.load_flat(&flat)
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;

        self.step += 1;
        let worker_losses: Vec<f64> = grads.iter().map(|g| g.loss.as_f64()).collect();
        Ok(StepReport {
            step,
            lr,
            loss: worker_losses.iter().sum::<f64>() / d_workers as f64,
            worker_losses,
            traffic: self.fabric.step_traffic().clone(),
        })
    }
}

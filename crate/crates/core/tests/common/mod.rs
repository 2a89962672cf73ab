#![allow(dead_code)]

pub mod naive;
pub mod oracles;
pub mod reference;

use kge_core::model::{
    batch_forward_backward, BatchGrads, BatchInput, DropoutMasks, LossKind, ModelConfig, NegativeMask,
    ScoreFunction, SharedParams,
};
use naive::Problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The eight score variants: distance functions under both p-norms plus the
/// two bilinear functions.
pub fn score_variants() -> Vec<(ScoreFunction, u8)> {
    let mut out = Vec::new();
    for f in ScoreFunction::ALL {
        if f.is_distance() {
            out.push((f, 1));
            out.push((f, 2));
        } else {
            out.push((f, 2));
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct ProblemOptions {
    pub b: usize,
    pub n: usize,
    pub d: usize,
    pub f: usize,
    pub relations: usize,
    pub entity_count: usize,
    pub margin: f64,
    pub temperature: f64,
    pub lambdas: (f64, f64, f64),
    pub plain_norm: bool,
    pub dropout: Option<f64>,
    pub mask_rate: Option<f64>,
    pub tied: bool,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            b: 4,
            n: 6,
            d: 8,
            f: 3,
            relations: 3,
            entity_count: 50,
            margin: 1.0,
            temperature: 0.0,
            lambdas: (0.0, 0.0, 0.0),
            plain_norm: false,
            dropout: None,
            mask_rate: None,
            tied: false,
        }
    }
}

pub fn random_problem(score_fn: ScoreFunction, p: u8, loss: LossKind, seed: u64, o: ProblemOptions) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        score_fn,
        distance_p: p,
        embedding_dim: o.d,
        feature_dim: o.f,
        margin: o.margin,
        adversarial_temperature: o.temperature,
        loss,
        lambda_t: o.lambdas.0,
        lambda_s: o.lambdas.1,
        lambda_f: o.lambdas.2,
        reg_use_plain_norm: o.plain_norm,
        feature_dropout: o.dropout.unwrap_or(0.0),
        tie_projections: o.tied,
        ..Default::default()
    };
    let k = cfg.relation_dim();
    let mut v = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-s..s)).collect() };
    let head_s = v(o.b * o.d, 1.0);
    let head_f = v(o.b * o.f, 1.0);
    let tail_s = v(o.b * o.d, 1.0);
    let tail_f = v(o.b * o.f, 1.0);
    let neg_s = v(o.n * o.d, 1.0);
    let neg_f = v(o.n * o.f, 1.0);
    let rel_table = v(o.relations * k, if score_fn == ScoreFunction::RotatE { 3.0 } else { 1.0 });
    let normals = if score_fn == ScoreFunction::TransH {
        v(o.relations * o.d, 1.0)
    } else {
        Vec::new()
    };
    let m_head = v(o.d * o.f, 0.5);
    let m_tail = if o.tied { Vec::new() } else { v(o.d * o.f, 0.5) };
    let relations = (0..o.b).map(|_| rng.gen_range(0..o.relations as u32)).collect();
    let (drop_head, drop_tail, drop_neg) = match o.dropout {
        Some(rate) => {
            let m = DropoutMasks::<f64>::sample(rate, o.b, o.n, o.d, &mut rng);
            (Some(m.head), Some(m.tail), Some(m.negative))
        }
        None => (None, None, None),
    };
    let keep = o
        .mask_rate
        .map(|rate| (0..o.b * o.n).map(|_| rng.gen::<f64>() >= rate).collect());
    Problem {
        cfg,
        entity_count: o.entity_count,
        relations,
        head_s,
        head_f,
        tail_s,
        tail_f,
        neg_s,
        neg_f,
        rel_table,
        normals,
        m_head,
        m_tail,
        drop_head,
        drop_tail,
        drop_neg,
        keep,
        frozen_weights: None,
    }
}

pub fn shared_params(p: &Problem) -> SharedParams<f64> {
    let mut s = SharedParams::zeros(&p.cfg, p.rel_table.len() / p.cfg.relation_dim());
    s.relations = p.rel_table.clone();
    s.normals = p.normals.clone();
    s.proj_head = p.m_head.clone();
    s.proj_tail = p.m_tail.clone();
    s
}

pub fn library_grads(p: &Problem) -> BatchGrads<f64> {
    let shared = shared_params(p);
    let mask = p
        .keep
        .as_ref()
        .map(|k| NegativeMask::from_rows(p.b(), p.n(), k.clone()).unwrap());
    let dropout = p.drop_head.as_ref().map(|h| DropoutMasks {
        head: h.clone(),
        tail: p.drop_tail.clone().unwrap(),
        negative: p.drop_neg.clone().unwrap(),
    });
    let input = BatchInput {
        relations: &p.relations,
        head_shallow: &p.head_s,
        head_features: &p.head_f,
        tail_shallow: &p.tail_s,
        tail_features: &p.tail_f,
        negative_shallow: &p.neg_s,
        negative_features: &p.neg_f,
        mask: mask.as_ref(),
        dropout: dropout.as_ref(),
    };
    batch_forward_backward(&p.cfg, p.entity_count, &shared, &input).unwrap()
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Largest relative error between the analytic gradient and central
/// differences of the naive objective, with the buffer and index it occurred at.
pub fn gradient_check(problem: &Problem, h: f64, floor: f64) -> (f64, String) {
    let grads = library_grads(problem);
    let analytic: Vec<(&str, Vec<f64>)> = vec![
        ("head_s", grads.head.clone()),
        ("tail_s", grads.tail.clone()),
        ("neg_s", grads.negative.clone()),
        ("relations", grads.shared.relations.clone()),
        ("normals", grads.shared.normals.clone()),
        ("m_head", grads.shared.proj_head.clone()),
        ("m_tail", grads.shared.proj_tail.clone()),
    ];
    let mut work = problem.clone();
    let mut worst = (0.0, String::new());
    let names: Vec<&'static str> = work.params_mut().into_iter().map(|(n, _)| n).collect();
    for (slot, name) in names.iter().enumerate() {
        let len = work.params_mut()[slot].1.len();
        let a = &analytic.iter().find(|(n, _)| n == name).unwrap().1;
        assert_eq!(a.len(), len, "gradient buffer {name} has the wrong length");
        for i in 0..len {
            let orig = work.params_mut()[slot].1[i];
            work.params_mut()[slot].1[i] = orig + h;
            let up = work.objective();
            work.params_mut()[slot].1[i] = orig - h;
            let down = work.objective();
            work.params_mut()[slot].1[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(a[i], numeric, floor);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}] analytic {} numeric {numeric}", a[i]));
            }
        }
    }
    worst
}

/// Smallest residual kept by `smooth_problem`. Real coordinates use 1e-3;
/// complex moduli need a wider radius because the curvature of `|z|` grows
/// like `1/|z|` and a 1e-4 step would otherwise see it.
pub fn kink_radius(score_fn: ScoreFunction, p: u8) -> f64 {
    if score_fn == ScoreFunction::RotatE && p == 1 {
        5e-2
    } else {
        1e-3
    }
}

/// Draws problems until one has no residual coordinate near an L1 kink.
pub fn smooth_problem(score_fn: ScoreFunction, p: u8, loss: LossKind, seed: u64, o: ProblemOptions) -> Problem {
    for attempt in 0..1000 {
        let pr = random_problem(score_fn, p, loss, seed.wrapping_mul(1000).wrapping_add(attempt), o);
        if pr.min_residual() >= kink_radius(score_fn, p) {
            return pr;
        }
    }
    panic!("no smooth sample found");
}

use kge_core::graph::{bucket_triples, generate_synthetic, partition_entities, EntityPartition, KnowledgeGraph, SyntheticSpec};
use kge_core::model::ModelParams;
use kge_core::runtime::{Cluster, ClusterOptions};
use kge_core::sampling::{PlanSampler, SamplerConfig};
use kge_core::{Real, StoragePrecision};

pub struct Setup {
    pub graph: KnowledgeGraph,
    pub partition: EntityPartition,
    pub sampler: PlanSampler,
}

pub fn synthetic_graph(entities: usize, relations: usize, triples: usize, features: usize, seed: u64) -> KnowledgeGraph {
    generate_synthetic(&SyntheticSpec::new(entities, relations, triples, 1.0, seed).with_feature_dim(features)).unwrap()
}

pub fn setup(graph: KnowledgeGraph, workers: usize, b: usize, n: usize, seed: u64) -> Setup {
    let partition = partition_entities(&graph, workers, seed).unwrap();
    let buckets = bucket_triples(&graph, &partition).unwrap();
    let cfg = SamplerConfig {
        micro_batch_size: b,
        negative_count: n,
        workers,
        seed,
        ..Default::default()
    };
    let sampler = PlanSampler::new(&graph, &buckets, &partition, &cfg).unwrap();
    Setup { graph, partition, sampler }
}

pub fn model_config(d: usize, f: usize) -> ModelConfig {
    ModelConfig {
        score_fn: ScoreFunction::TransE,
        distance_p: 2,
        embedding_dim: d,
        feature_dim: f,
        margin: 2.0,
        adversarial_temperature: 0.5,
        lambda_t: 1e-4,
        feature_dropout: 0.1,
        ..Default::default()
    }
}

pub fn cluster<T: Real>(s: &Setup, cfg: &ModelConfig, storage: StoragePrecision, seed: u64) -> (Cluster<T>, ModelParams<T>) {
    let params = ModelParams::<T>::init(cfg, s.graph.entity_count(), s.graph.relation_count(), seed, storage);
    let opts = ClusterOptions {
        storage,
        seed,
        ..Default::default()
    };
    let c = Cluster::new(&s.graph, s.partition.clone(), cfg, &params, opts).unwrap();
    (c, params)
}

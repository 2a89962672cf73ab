use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kge_core::config::{expand_sweep, write_sweep, RunConfig};
use kge_core::ensemble::{ablate, default_power_grid, fuse, power_sweep, EnsembleConfig};
use kge_core::eval::{export_predictions, import_predictions, mrr_at, QueryFile};
use kge_core::graph::{
    bucket_triples, generate_synthetic, ingest_graph, parse_features_tsv, parse_triples_tsv, partition_entities,
    split_holdout, split_stats, write_features, write_triples, FeatureEncoding, FeatureMatrix, KnowledgeGraph,
    QuerySet, SyntheticSpec,
};
use kge_core::runtime::benchmark_throughput;
use kge_core::train::{output_paths, TrainingRun};
use kge_core::{KgeError, Real, StoragePrecision};

#[derive(Debug, Parser)]
#[command(name = "kge", version, about = "Sharded knowledge-graph-embedding training and inference")]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `runtime.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `runtime.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `runtime.precision`: half, single or double.
    #[arg(long, global = true)]
    precision: Option<String>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert TSV triples (or generate a synthetic graph) into KGT/KGF files.
    Ingest(IngestArgs),
    /// Relation frequency table of a graph and optional query sets.
    Stats(StatsArgs),
    /// Shard sizes, padding and bucket occupancy for the configured D.
    PartitionCheck,
    /// Train a model as configured.
    Train(TrainArgs),
    /// Top-K predictions for a queries file.
    Predict(PredictArgs),
    /// MRR of a predictions file against labelled queries.
    Evaluate(EvaluateArgs),
    /// Fuse prediction files, or run an ablation or power sweep.
    Ensemble(EnsembleArgs),
    /// Time training steps.
    Benchmark(BenchmarkArgs),
    /// Expand list-valued keys of a config into one config per combination.
    Sweep,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// TSV of `head\trelation\ttail` integer ids.
    #[arg(long, conflicts_with = "synthetic")]
    triples: Option<PathBuf>,
    /// TSV of feature rows, one per entity.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Entity count; defaults to the largest id plus one.
    #[arg(long)]
    entities: Option<usize>,
    /// Relation count; defaults to the largest id plus one.
    #[arg(long)]
    relations: Option<usize>,
    /// Generate `ENTITIES,RELATIONS,TRIPLES` synthetically instead.
    #[arg(long, value_delimiter = ',')]
    synthetic: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    skew: f64,
    #[arg(long, default_value_t = 0)]
    feature_dim: usize,
    /// Hold out this many triples as a labelled `valid.tsv`.
    #[arg(long, default_value_t = 0)]
    holdout: usize,
    /// Store features as f16.
    #[arg(long)]
    half_features: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// KGT file; defaults to `runtime.triples`.
    #[arg(long)]
    triples: Option<PathBuf>,
    /// Query sets to profile.
    #[arg(long)]
    queries: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    queries: PathBuf,
    /// Defaults to `checkpoint.kgc` under `runtime.out_dir`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    k: usize,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Labelled queries file.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    cutoff: usize,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[arg(long, required = true, num_args = 1..)]
    predictions: Vec<PathBuf>,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    power: f64,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value_t = 10)]
    output_depth: usize,
    #[arg(long)]
    allow_partial: bool,
    /// Labelled queries, required for --groups and --power-sweep.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// One group label per predictions file; writes an ablation table.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<String>>,
    /// Writes MRR for p from -1 to -0.5.
    #[arg(long)]
    power_sweep: bool,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = 20)]
    steps: u64,
    #[arg(long, default_value_t = 2)]
    warmup: u64,
}

#[derive(Debug)]
pub enum CliError {
    Kge(KgeError),
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Kge(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
        }
    }
}

impl From<KgeError> for CliError {
    fn from(e: KgeError) -> Self {
        CliError::Kge(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Kge(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(m: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(m.into()))
}

pub fn init_logging() -> std::result::Result<(), String> {
    let level = std::env::var("KGE_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    if !matches!(level.as_str(), "error" | "warn" | "info" | "debug") {
        return Err(format!("usage: KGE_LOG_LEVEL must be error, warn, info or debug, got {level:?}"));
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest(a) => ingest(g, a),
        Command::Stats(a) => stats(g, a),
        Command::PartitionCheck => partition_check(g),
        Command::Train(a) => dispatch(g, |cfg| train::<f32>(g, cfg, &a), |cfg| train::<f64>(g, cfg, &a)),
        Command::Predict(a) => dispatch(g, |cfg| predict::<f32>(g, cfg, &a), |cfg| predict::<f64>(g, cfg, &a)),
        Command::Evaluate(a) => evaluate(g, a),
        Command::Ensemble(a) => ensemble(g, a),
        Command::Benchmark(a) => dispatch(g, |cfg| benchmark::<f32>(g, cfg, &a), |cfg| benchmark::<f64>(g, cfg, &a)),
        Command::Sweep => sweep(g),
    }
}

/// The config file (or defaults) with command-line overrides applied.
fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.set("runtime.seed", &s.to_string())?;
    }
    if let Some(d) = g.workers {
        cfg.set("runtime.workers", &d.to_string())?;
    }
    if let Some(p) = &g.precision {
        cfg.set("runtime.precision", p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Double precision computes in f64; half and single compute in f32.
fn dispatch(
    g: &Global,
    single: impl FnOnce(&RunConfig) -> Result<()>,
    double: impl FnOnce(&RunConfig) -> Result<()>,
) -> Result<()> {
    let cfg = load_config(g)?;
    match cfg.runtime.precision {
        StoragePrecision::Double => double(&cfg),
        StoragePrecision::Half | StoragePrecision::Single => single(&cfg),
    }
}

fn load_graph(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    let Some(triples) = &cfg.runtime.triples else {
        return Err(KgeError::config("runtime.triples", "no training triples configured").into());
    };
    require_file("runtime.triples", triples)?;
    if let Some(f) = &cfg.runtime.features {
        require_file("runtime.features", f)?;
    }
    Ok(ingest_graph(triples, cfg.runtime.features.as_deref())?)
}

fn input(p: &Path) -> Result<&Path> {
    if p.is_file() {
        Ok(p)
    } else {
        usage(format!("no such file {}", p.display()))
    }
}

fn require_file(key: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(KgeError::config(key, format!("no such file {}", p.display())).into())
    }
}

fn out_dir(g: &Global, cfg: &RunConfig) -> Result<PathBuf> {
    match g.out.clone().or_else(|| cfg.runtime.out_dir.clone()) {
        Some(p) => Ok(p),
        None => usage("--out or runtime.out_dir is required"),
    }
}

fn required_out(g: &Global) -> Result<&Path> {
    match &g.out {
        Some(p) => Ok(p),
        None => usage("--out is required"),
    }
}

/// Writes `text` to `--out` if given, else to stdout.
fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))
}

fn ingest(g: &Global, a: IngestArgs) -> Result<()> {
    let dir = required_out(g)?;
    let seed = g.seed.unwrap_or(0);
    let graph = match (&a.synthetic, &a.triples) {
        (Some(v), _) => {
            if v.len() != 3 {
                return usage("--synthetic takes ENTITIES,RELATIONS,TRIPLES");
            }
            let spec = SyntheticSpec::new(v[0], v[1], v[2], a.skew, seed).with_feature_dim(a.feature_dim);
            generate_synthetic(&spec)?
        }
        (None, Some(path)) => {
            let triples = parse_triples_tsv(&read_text(path)?)?;
            let max = |f: fn(&kge_core::graph::Triple) -> u32| triples.iter().map(f).max().map_or(0, |m| m as usize + 1);
            let entities = a.entities.unwrap_or_else(|| max(|t| t.head).max(max(|t| t.tail)));
            let relations = a.relations.unwrap_or_else(|| max(|t| t.relation));
            let features = match &a.features {
                Some(p) => parse_features_tsv(&read_text(p)?)?,
                None => FeatureMatrix::zeros(entities, 0),
            };
            KnowledgeGraph::new(entities, relations, triples, features)?
        }
        (None, None) => return usage("ingest needs --triples or --synthetic"),
    };
    let (train, held) = if a.holdout > 0 {
        split_holdout(&graph, a.holdout, seed)?
    } else {
        (graph, Vec::new())
    };
    std::fs::create_dir_all(dir)?;
    write_triples(&dir.join("train.kgt"), &train)?;
    if train.feature_dim() > 0 {
        let enc = if a.half_features { FeatureEncoding::F16 } else { FeatureEncoding::F32 };
        write_features(&dir.join("features.kgf"), &train, enc)?;
    }
    if !held.is_empty() {
        QueryFile::from_triples(&held).write(&dir.join("valid.tsv"))?;
    }
    println!(
        "entities {}\trelations {}\ttriples {}\tfeature_dim {}\theld_out {}",
        train.entity_count(),
        train.relation_count(),
        train.triples().len(),
        train.feature_dim(),
        held.len()
    );
    Ok(())
}

fn stats(g: &Global, a: StatsArgs) -> Result<()> {
    let graph = match a.triples {
        Some(p) => ingest_graph(input(&p)?, None)?,
        None => load_graph(&load_config(g)?)?,
    };
    let sets = a
        .queries
        .iter()
        .map(|p| {
            let f = QueryFile::read(input(p)?)?;
            let tails = f.tails.clone();
            Ok(QuerySet {
                name: p.display().to_string(),
                items: f
                    .queries
                    .iter()
                    .enumerate()
                    .map(|(k, q)| (q.head, q.relation, tails.as_ref().map(|t| t[k])))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = split_stats(&graph, &sets);
    eprint!("{}", report.summary());
    emit(g, &report.to_tsv())
}

fn partition_check(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    let graph = load_graph(&cfg)?;
    let d = cfg.runtime.workers;
    let partition = partition_entities(&graph, d, cfg.runtime.seed)?;
    let buckets = bucket_triples(&graph, &partition)?;
    let mut out = String::from("shard\treal_rows\tpadding_rows\tmin_bucket\tmax_bucket\tempty_buckets\n");
    let mut empty = Vec::new();
    for i in 0..d {
        let sizes: Vec<usize> = (0..d).map(|j| buckets.bucket(i, j).len()).collect();
        empty.extend((0..d).filter(|&j| sizes[j] == 0).map(|j| (i, j)));
        out.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\t{}\n",
            partition.real_count(i),
            partition.padding_count(i),
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap(),
            sizes.iter().filter(|&&s| s == 0).count()
        ));
    }
    emit(g, &out)?;
    if let Some(&(i, j)) = empty.first() {
        return Err(KgeError::Partition(format!(
            "{} empty buckets at D={d}, first ({i},{j}); training would need fallback sampling",
            empty.len()
        ))
        .into());
    }
    Ok(())
}

fn train<T: Real>(g: &Global, cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let graph = load_graph(cfg)?;
    let valid = cfg.runtime.valid.as_deref().map(|p| Ok::<_, CliError>(QueryFile::read(input(p)?)?)).transpose()?;
    let dir = out_dir(g, cfg)?;
    std::fs::create_dir_all(&dir)?;
    let (ckpt, metrics) = output_paths(&dir);
    let mut run = TrainingRun::<T>::new(cfg, &graph)?;
    if a.resume {
        run.resume(&ckpt)?;
        log::info!("resumed at step {}", run.cluster().step());
    }
    cfg.save(&dir.join("config.cfg"))?;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(a.resume)
        .write(true)
        .truncate(!a.resume)
        .open(&metrics)?;
    let mut w = BufWriter::new(file);
    let records = run.run(valid.as_ref(), &mut w, Some(&ckpt))?;
    w.flush()?;
    if let Some(last) = records.last() {
        println!("step {}\tloss {:.6}", last.step, last.loss);
    }
    Ok(())
}

fn predict<T: Real>(g: &Global, cfg: &RunConfig, a: &PredictArgs) -> Result<()> {
    let out = required_out(g)?;
    let graph = load_graph(cfg)?;
    let ckpt = match &a.checkpoint {
        Some(p) => p.clone(),
        None => match &cfg.runtime.out_dir {
            Some(dir) => output_paths(dir).0,
            None => return usage("predict needs --checkpoint or runtime.out_dir"),
        },
    };
    let mut run = TrainingRun::<T>::new(cfg, &graph)?;
    run.resume(input(&ckpt)?)?;
    let queries = QueryFile::read(input(&a.queries)?)?;
    let preds = run.predict(&queries, a.k)?;
    export_predictions(&preds, out)?;
    Ok(())
}

fn evaluate(g: &Global, a: EvaluateArgs) -> Result<()> {
    let preds = import_predictions(input(&a.predictions)?)?;
    let labels = QueryFile::read(input(&a.queries)?)?.labels()?;
    let mrr = mrr_at(&preds, &labels, a.cutoff)?;
    let line = format!("MRR {mrr:.6}\n");
    print!("{line}");
    if let Some(p) = &g.out {
        std::fs::write(p, line)?;
    }
    Ok(())
}

fn ensemble(g: &Global, a: EnsembleArgs) -> Result<()> {
    let cfg = EnsembleConfig {
        power: a.power,
        depth: a.depth,
        output_depth: a.output_depth,
        allow_partial: a.allow_partial,
    };
    let models = a.predictions.iter().map(|p| Ok(import_predictions(input(p)?)?)).collect::<Result<Vec<_>>>()?;
    let labels = match &a.queries {
        Some(p) => Some(QueryFile::read(input(p)?)?.labels()?),
        None => None,
    };
    if let Some(groups) = &a.groups {
        let Some(labels) = &labels else {
            return usage("--groups needs --queries with tails");
        };
        return emit(g, &ablate(&models, groups, &cfg, labels)?.to_tsv());
    }
    if a.power_sweep {
        let Some(labels) = &labels else {
            return usage("--power-sweep needs --queries with tails");
        };
        let mut out = String::from("power\tmrr\n");
        for (p, m) in power_sweep(&models, &cfg, labels, &default_power_grid())? {
            out.push_str(&format!("{p:.2}\t{m:.6}\n"));
        }
        return emit(g, &out);
    }
    let fused = fuse(&models, &cfg)?;
    export_predictions(&fused, required_out(g)?)?;
    if let Some(labels) = &labels {
        println!("MRR {:.6}", mrr_at(&fused, labels, 10)?);
    }
    Ok(())
}

fn benchmark<T: Real>(g: &Global, cfg: &RunConfig, a: &BenchmarkArgs) -> Result<()> {
    let graph = load_graph(cfg)?;
    let mut run = TrainingRun::<T>::new(cfg, &graph)?;
    for _ in 0..a.warmup {
        run.step()?;
    }
    let lr = cfg.schedule.initial_lr;
    let sampler = run.sampler().clone();
    let report = benchmark_throughput(run.cluster_mut(), &graph, &sampler, a.steps, lr)?;
    emit(g, &report.to_tsv())
}

fn sweep(g: &Global) -> Result<()> {
    let Some(path) = &g.config else {
        return usage("sweep needs --config with list-valued keys");
    };
    let points = expand_sweep(&read_text(path)?)?;
    let dir = required_out(g)?;
    write_sweep(&points, dir)?;
    println!("{} configs written to {}", points.len(), dir.display());
    Ok(())
}

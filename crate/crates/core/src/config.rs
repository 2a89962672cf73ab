//! Flat `key = value` run configuration and sweep expansion.
//!
//! Keys carry a section prefix (`model.`, `sampler.`, `schedule.`,
//! `runtime.`). Lines starting with `#` are comments. Unknown or repeated
//! keys are errors. Floats are written in shortest round-trip form, so
//! serialising and reparsing a config reproduces it exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{KgeError, Result};
use crate::model::{LossKind, ModelConfig};
use crate::real::StoragePrecision;
use crate::runtime::{ExecutionMode, LrDecay, Optimizer, TrainSchedule};
use crate::sampling::SamplerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub workers: usize,
    pub precision: StoragePrecision,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub query_micro_batch_size: usize,
    /// Training triples sampled for the train MRR at each evaluation.
    pub train_eval_samples: usize,
    /// Validation queries used per evaluation; 0 uses all of them.
    pub valid_eval_samples: usize,
    pub mode: ExecutionMode,
    pub triples: Option<PathBuf>,
    pub features: Option<PathBuf>,
    /// Labelled queries file.
    pub valid: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            workers: 1,
            precision: StoragePrecision::Single,
            seed: 0,
            checkpoint_interval: 0,
            query_micro_batch_size: 64,
            train_eval_samples: 15_000,
            valid_eval_samples: 0,
            mode: ExecutionMode::Parallel,
            triples: None,
            features: None,
            valid: None,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// `workers` and `seed` are taken from `runtime`.
    pub sampler: SamplerConfig,
    pub schedule: TrainSchedule,
    pub runtime: RuntimeConfig,
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| KgeError::config(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(KgeError::config(key, format!("expected true or false, got {value:?}"))),
    }
}

fn path_value(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn mode_name(mode: ExecutionMode) -> &'static str {
    match mode {
        ExecutionMode::Parallel => "parallel",
        ExecutionMode::Sequential => "sequential",
    }
}

impl RunConfig {
    /// Sampler settings with the runtime's worker count and seed.
    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            workers: self.runtime.workers,
            seed: self.runtime.seed,
            ..self.sampler.clone()
        }
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let s = &self.sampler;
        let t = &self.schedule;
        let r = &self.runtime;
        let (beta1, beta2, epsilon) = match t.optimizer {
            Optimizer::Adam { beta1, beta2, epsilon } => (beta1, beta2, epsilon),
            Optimizer::Sgd => match Optimizer::default() {
                Optimizer::Adam { beta1, beta2, epsilon } => (beta1, beta2, epsilon),
                Optimizer::Sgd => unreachable!(),
            },
        };
        vec![
            ("model.score_fn", m.score_fn.name().into()),
            ("model.distance_p", m.distance_p.to_string()),
            ("model.embedding_dim", m.embedding_dim.to_string()),
            ("model.feature_dim", m.feature_dim.to_string()),
            ("model.margin", format!("{:?}", m.margin)),
            ("model.adversarial_temperature", format!("{:?}", m.adversarial_temperature)),
            ("model.loss", m.loss.name().into()),
            ("model.lambda_t", format!("{:?}", m.lambda_t)),
            ("model.lambda_s", format!("{:?}", m.lambda_s)),
            ("model.lambda_f", format!("{:?}", m.lambda_f)),
            ("model.reg_use_plain_norm", m.reg_use_plain_norm.to_string()),
            ("model.feature_dropout", format!("{:?}", m.feature_dropout)),
            ("model.tie_projections", m.tie_projections.to_string()),
            ("model.init_scale", format!("{:?}", m.init_scale)),
            ("sampler.micro_batch_size", s.micro_batch_size.to_string()),
            ("sampler.negative_count", s.negative_count.to_string()),
            ("sampler.cube_root_relation_sampling", s.cube_root_relation_sampling.to_string()),
            ("sampler.global_relation_counts", s.global_relation_counts.to_string()),
            ("sampler.filter_false_negatives", s.filter_false_negatives.to_string()),
            ("schedule.total_steps", t.total_steps.to_string()),
            ("schedule.initial_lr", format!("{:?}", t.initial_lr)),
            ("schedule.decay", t.decay.name().into()),
            ("schedule.optimizer", t.optimizer.name().into()),
            ("schedule.adam_beta1", format!("{beta1:?}")),
            ("schedule.adam_beta2", format!("{beta2:?}")),
            ("schedule.adam_epsilon", format!("{epsilon:?}")),
            ("schedule.eval_interval", t.eval_interval.to_string()),
            ("runtime.workers", r.workers.to_string()),
            ("runtime.precision", r.precision.name().into()),
            ("runtime.seed", r.seed.to_string()),
            ("runtime.checkpoint_interval", r.checkpoint_interval.to_string()),
            ("runtime.query_micro_batch_size", r.query_micro_batch_size.to_string()),
            ("runtime.train_eval_samples", r.train_eval_samples.to_string()),
            ("runtime.valid_eval_samples", r.valid_eval_samples.to_string()),
            ("runtime.mode", mode_name(r.mode).into()),
            ("runtime.triples", path_text(&r.triples)),
            ("runtime.features", path_text(&r.features)),
            ("runtime.valid", path_text(&r.valid)),
            ("runtime.out_dir", path_text(&r.out_dir)),
        ]
    }

    /// All recognised keys.
    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    /// Assigns one key. Cross-field checks are left to [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let s = &mut self.sampler;
        let t = &mut self.schedule;
        let r = &mut self.runtime;
        match key {
            "model.score_fn" => m.score_fn = value.parse().map_err(|e: String| KgeError::config(key, e))?,
            "model.distance_p" => m.distance_p = parse_value(key, value)?,
            "model.embedding_dim" => m.embedding_dim = parse_value(key, value)?,
            "model.feature_dim" => m.feature_dim = parse_value(key, value)?,
            "model.margin" => m.margin = parse_value(key, value)?,
            "model.adversarial_temperature" => m.adversarial_temperature = parse_value(key, value)?,
            "model.loss" => m.loss = value.parse::<LossKind>().map_err(|e| KgeError::config(key, e))?,
            "model.lambda_t" => m.lambda_t = parse_value(key, value)?,
            "model.lambda_s" => m.lambda_s = parse_value(key, value)?,
            "model.lambda_f" => m.lambda_f = parse_value(key, value)?,
            "model.reg_use_plain_norm" => m.reg_use_plain_norm = parse_bool(key, value)?,
            "model.feature_dropout" => m.feature_dropout = parse_value(key, value)?,
            "model.tie_projections" => m.tie_projections = parse_bool(key, value)?,
            "model.init_scale" => m.init_scale = parse_value(key, value)?,
            "sampler.micro_batch_size" => s.micro_batch_size = parse_value(key, value)?,
            "sampler.negative_count" => s.negative_count = parse_value(key, value)?,
            "sampler.cube_root_relation_sampling" => s.cube_root_relation_sampling = parse_bool(key, value)?,
            "sampler.global_relation_counts" => s.global_relation_counts = parse_bool(key, value)?,
            "sampler.filter_false_negatives" => s.filter_false_negatives = parse_bool(key, value)?,
            "schedule.total_steps" => t.total_steps = parse_value(key, value)?,
            "schedule.initial_lr" => t.initial_lr = parse_value(key, value)?,
            "schedule.decay" => {
                t.decay = match value {
                    "linear" => LrDecay::Linear,
                    "constant" => LrDecay::Constant,
                    _ => return Err(KgeError::config(key, format!("expected linear or constant, got {value:?}"))),
                }
            }
            "schedule.optimizer" => {
                t.optimizer = match (value, t.optimizer) {
                    ("adam", o @ Optimizer::Adam { .. }) => o,
                    ("adam", Optimizer::Sgd) => Optimizer::default(),
                    ("sgd", _) => Optimizer::Sgd,
                    _ => return Err(KgeError::config(key, format!("expected adam or sgd, got {value:?}"))),
                }
            }
            "schedule.adam_beta1" | "schedule.adam_beta2" | "schedule.adam_epsilon" => {
                let x: f64 = parse_value(key, value)?;
                match &mut t.optimizer {
                    Optimizer::Adam { beta1, beta2, epsilon } => match key {
                        "schedule.adam_beta1" => *beta1 = x,
                        "schedule.adam_beta2" => *beta2 = x,
                        _ => *epsilon = x,
                    },
                    Optimizer::Sgd => {
                        return Err(KgeError::config(key, "only valid with schedule.optimizer = adam"));
                    }
                }
            }
            "schedule.eval_interval" => t.eval_interval = parse_value(key, value)?,
            "runtime.workers" => r.workers = parse_value(key, value)?,
            "runtime.precision" => {
                r.precision = StoragePrecision::parse(value)
                    .ok_or_else(|| KgeError::config(key, format!("expected half, single or double, got {value:?}")))?
            }
            "runtime.seed" => r.seed = parse_value(key, value)?,
            "runtime.checkpoint_interval" => r.checkpoint_interval = parse_value(key, value)?,
            "runtime.query_micro_batch_size" => r.query_micro_batch_size = parse_value(key, value)?,
            "runtime.train_eval_samples" => r.train_eval_samples = parse_value(key, value)?,
            "runtime.valid_eval_samples" => r.valid_eval_samples = parse_value(key, value)?,
            "runtime.mode" => {
                r.mode = match value {
                    "parallel" => ExecutionMode::Parallel,
                    "sequential" => ExecutionMode::Sequential,
                    _ => return Err(KgeError::config(key, format!("expected parallel or sequential, got {value:?}"))),
                }
            }
            "runtime.triples" => r.triples = path_value(value),
            "runtime.features" => r.features = path_value(value),
            "runtime.valid" => r.valid = path_value(value),
            "runtime.out_dir" => r.out_dir = path_value(value),
            _ => return Err(KgeError::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sampler_config().validate()?;
        let t = &self.schedule;
        if t.total_steps == 0 {
            return Err(KgeError::config("schedule.total_steps", "must be positive"));
        }
        if !(t.initial_lr >= 0.0 && t.initial_lr.is_finite()) {
            return Err(KgeError::config("schedule.initial_lr", "must be finite and >= 0"));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = t.optimizer {
            for (key, b) in [("schedule.adam_beta1", beta1), ("schedule.adam_beta2", beta2)] {
                if !(0.0..1.0).contains(&b) {
                    return Err(KgeError::config(key, "must lie in [0, 1)"));
                }
            }
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(KgeError::config("schedule.adam_epsilon", "must be positive"));
            }
        }
        if self.runtime.query_micro_batch_size == 0 {
            return Err(KgeError::config("runtime.query_micro_batch_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Parses and validates a config; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (line_no, key, value) in lines(text)? {
            if !seen.insert(key.to_string()) {
                return Err(KgeError::parse("config", line_no, format!("key {key} repeated")));
            }
            cfg.set(key, value).map_err(|e| match e {
                KgeError::Config { key, message } if message == "unknown key" => {
                    KgeError::parse("config", line_no, format!("unknown key {key}"))
                }
                e => e,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text listing every key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// `(line number, key, value)` for each assignment line.
fn lines(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| KgeError::parse("config", n + 1, "expected key = value"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(KgeError::parse("config", n + 1, "empty key"));
        }
        out.push((n + 1, k, v.trim()));
    }
    Ok(out)
}

/// One expanded configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub name: String,
    /// The list-valued keys and the value chosen for this point.
    pub assignment: Vec<(String, String)>,
    pub config: RunConfig,
}

pub const MAX_SWEEP_POINTS: usize = 10_000;

/// Expands every `key = [a, b, ...]` line into the cartesian product of
/// its values, first key varying slowest.
pub fn expand_sweep(text: &str) -> Result<Vec<SweepPoint>> {
    let parsed = lines(text)?;
    let mut axes: Vec<(usize, Vec<String>)> = Vec::new();
    for (idx, &(line_no, _, value)) in parsed.iter().enumerate() {
        if let Some(inner) = value.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| KgeError::parse("config", line_no, "unterminated list"))?;
            let items: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).collect();
            if items.iter().any(|s| s.is_empty()) {
                return Err(KgeError::parse("config", line_no, "empty list item"));
            }
            axes.push((idx, items));
        }
    }
    let total = axes
        .iter()
        .try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len()))
        .filter(|&n| n <= MAX_SWEEP_POINTS)
        .ok_or_else(|| KgeError::config("sweep", format!("more than {MAX_SWEEP_POINTS} combinations")))?;
    let width = total.saturating_sub(1).to_string().len().max(3);
    (0..total)
        .map(|n| {
            let mut rest = n;
            let mut choice = vec![0; axes.len()];
            for (a, (_, items)) in axes.iter().enumerate().rev() {
                choice[a] = rest % items.len();
                rest /= items.len();
            }
            let mut body = String::new();
            let mut assignment = Vec::new();
            for (idx, &(_, key, value)) in parsed.iter().enumerate() {
                let v = match axes.iter().position(|(i, _)| *i == idx) {
                    Some(a) => {
                        let v = &axes[a].1[choice[a]];
                        assignment.push((key.to_string(), v.clone()));
                        v.as_str()
                    }
                    None => value,
                };
                writeln!(body, "{key} = {v}").unwrap();
            }
            Ok(SweepPoint {
                name: format!("run-{n:0width$}"),
                assignment,
                config: RunConfig::parse(&body)?,
            })
        })
        .collect()
}

/// Writes `<name>.cfg` per sweep point and an `index.tsv` of assignments.
pub fn write_sweep(points: &[SweepPoint], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut index = String::from("name");
    if let Some(p) = points.first() {
        for (k, _) in &p.assignment {
            write!(index, "\t{k}").unwrap();
        }
    }
    index.push('\n');
    for p in points {
        p.config.save(&dir.join(format!("{}.cfg", p.name)))?;
        index.push_str(&p.name);
        for (_, v) in &p.assignment {
            write!(index, "\t{v}").unwrap();
        }
        index.push('\n');
    }
    std::fs::write(dir.join("index.tsv"), index)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = RunConfig::parse("# c\nmodel.embeding_dim = 4\n").unwrap_err().to_string();
        assert_eq!(err, "parse: config line 2: unknown key model.embeding_dim");
    }

    #[test]
    fn sweep_is_cartesian() {
        let pts = expand_sweep("model.embedding_dim = [8, 16]\nschedule.initial_lr = [0.001, 0.003, 0.01]\n").unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[4].config.model.embedding_dim, 16);
        assert_eq!(pts[4].config.schedule.initial_lr, 0.003);
    }
}

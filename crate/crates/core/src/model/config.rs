use std::fmt;
use std::str::FromStr;

use crate::error::{KgeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreFunction {
    TransE,
    TransH,
    RotatE,
    DistMult,
    ComplEx,
}

impl ScoreFunction {
    pub const ALL: [ScoreFunction; 5] = [
        ScoreFunction::TransE,
        ScoreFunction::TransH,
        ScoreFunction::RotatE,
        ScoreFunction::DistMult,
        ScoreFunction::ComplEx,
    ];

    /// Distance-based scores take a p-norm and a positive margin.
    pub fn is_distance(self) -> bool {
        matches!(
            self,
            ScoreFunction::TransE | ScoreFunction::TransH | ScoreFunction::RotatE
        )
    }

    pub fn is_complex(self) -> bool {
        matches!(self, ScoreFunction::RotatE | ScoreFunction::ComplEx)
    }

    pub fn relation_dim(self, embedding_dim: usize) -> usize {
        match self {
            ScoreFunction::RotatE => embedding_dim / 2,
            _ => embedding_dim,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreFunction::TransE => "TransE",
            ScoreFunction::TransH => "TransH",
            ScoreFunction::RotatE => "RotatE",
            ScoreFunction::DistMult => "DistMult",
            ScoreFunction::ComplEx => "ComplEx",
        }
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreFunction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ScoreFunction::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown score function {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    LogSigmoid,
    SampledSoftmaxCE,
}

impl LossKind {
    pub const ALL: [LossKind; 2] = [LossKind::LogSigmoid, LossKind::SampledSoftmaxCE];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::LogSigmoid => "LogSigmoid",
            LossKind::SampledSoftmaxCE => "SampledSoftmaxCE",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LossKind::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown loss {s:?}"))
    }
}

/// Hyperparameters of a single embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub score_fn: ScoreFunction,
    /// 1 or 2; ignored by DistMult / ComplEx.
    pub distance_p: u8,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub margin: f64,
    pub adversarial_temperature: f64,
    pub loss: LossKind,
    pub lambda_t: f64,
    pub lambda_s: f64,
    pub lambda_f: f64,
    /// Use `(Σ|x|³)^{1/3}` instead of the cubed norm `Σ|x|³`.
    pub reg_use_plain_norm: bool,
    pub feature_dropout: f64,
    pub tie_projections: bool,
    /// Standard deviation of the shallow embedding initialisation.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            score_fn: ScoreFunction::TransE,
            distance_p: 2,
            embedding_dim: 256,
            feature_dim: 0,
            margin: 10.0,
            adversarial_temperature: 1.0,
            loss: LossKind::LogSigmoid,
            lambda_t: 0.0,
            lambda_s: 0.0,
            lambda_f: 0.0,
            reg_use_plain_norm: false,
            feature_dropout: 0.0,
            tie_projections: false,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn relation_dim(&self) -> usize {
        self.score_fn.relation_dim(self.embedding_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(KgeError::config("model.embedding_dim", "must be positive"));
        }
        if self.score_fn.is_complex() && self.embedding_dim % 2 != 0 {
            return Err(KgeError::config(
                "model.embedding_dim",
                format!("{} requires an even embedding dimension", self.score_fn),
            ));
        }
        if !matches!(self.distance_p, 1 | 2) {
            return Err(KgeError::config("model.distance_p", "must be 1 or 2"));
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(KgeError::config("model.margin", "must be finite and >= 0"));
        }
        if !self.score_fn.is_distance() && self.margin != 0.0 {
            return Err(KgeError::config(
                "model.margin",
                format!("must be 0 for {}", self.score_fn),
            ));
        }
        if !(self.adversarial_temperature >= 0.0 && self.adversarial_temperature.is_finite()) {
            return Err(KgeError::config(
                "model.adversarial_temperature",
                "must be finite and >= 0",
            ));
        }
        for (key, v) in [
            ("model.lambda_t", self.lambda_t),
            ("model.lambda_s", self.lambda_s),
            ("model.lambda_f", self.lambda_f),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(KgeError::config(key, "must be finite and >= 0"));
            }
        }
        if !(0.0..1.0).contains(&self.feature_dropout) {
            return Err(KgeError::config("model.feature_dropout", "must lie in [0, 1)"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(KgeError::config("model.init_scale", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_models_need_even_dim() {
        let cfg = ModelConfig {
            score_fn: ScoreFunction::RotatE,
            embedding_dim: 7,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bilinear_models_need_zero_margin() {
        let mut cfg = ModelConfig {
            score_fn: ScoreFunction::DistMult,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.margin = 0.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn rotate_relations_are_half_width() {
        assert_eq!(ScoreFunction::RotatE.relation_dim(256), 128);
        assert_eq!(ScoreFunction::ComplEx.relation_dim(256), 256);
    }

    #[test]
    fn names_parse_case_insensitively() {
        assert_eq!("complex".parse::<ScoreFunction>().unwrap(), ScoreFunction::ComplEx);
        assert_eq!(
            "sampledsoftmaxce".parse::<LossKind>().unwrap(),
            LossKind::SampledSoftmaxCE
        );
        assert!("BoxE".parse::<ScoreFunction>().is_err());
    }
}

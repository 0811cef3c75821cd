//! JSON experiment configuration and its defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SamplerConfig, Spr};
use crate::losses::composite::CompositeLossSpec;
use crate::losses::pairwise::PairwiseLossSpec;
use crate::model::HeadNorm;
use crate::optim::{OptStyle, OptimizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    Synth {
        n: usize,
        dim: usize,
        pr: f64,
        separation: f64,
        #[serde(default)]
        seed: u64,
        /// test set size; defaults to n/2
        #[serde(default)]
        test_n: Option<usize>,
        /// test positive ratio; defaults to the training ratio
        #[serde(default)]
        test_pr: Option<f64>,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Which objective a trial optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossChoice {
    Pairwise(PairwiseLossSpec),
    Composite(CompositeLossSpec),
    /// primal-dual solver of the min-max margin objective
    Pesg {
        #[serde(default = "default_margin")]
        margin: f64,
    },
}

fn default_margin() -> f64 {
    1.0
}

impl LossChoice {
    pub fn label(&self) -> String {
        match self {
            LossChoice::Pairwise(s) => s.kind.label().to_string(),
            LossChoice::Composite(s) => s.kind.label().to_string(),
            LossChoice::Pesg { .. } => "PESG".to_string(),
        }
    }

    pub fn uses_margin(&self) -> bool {
        match self {
            LossChoice::Pairwise(s) => s.kind.uses_margin(),
            LossChoice::Composite(s) => s.kind.uses_margin(),
            LossChoice::Pesg { .. } => true,
        }
    }

    pub fn uses_scale(&self) -> bool {
        match self {
            LossChoice::Pairwise(s) => s.kind.uses_scale(),
            LossChoice::Composite(s) => s.kind.uses_scale(),
            LossChoice::Pesg { .. } => false,
        }
    }

    pub fn margin(&self) -> f64 {
        match self {
            LossChoice::Pairwise(s) => s.margin,
            LossChoice::Composite(s) => s.margin,
            LossChoice::Pesg { margin } => *margin,
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            LossChoice::Pairwise(s) => s.scale,
            LossChoice::Composite(s) => s.scale,
            LossChoice::Pesg { .. } => 1.0,
        }
    }

    pub fn with_hyper(&self, margin: f64, scale: f64) -> LossChoice {
        match *self {
            LossChoice::Pairwise(mut s) => {
                s.margin = margin;
                s.scale = scale;
                LossChoice::Pairwise(s)
            }
            LossChoice::Composite(mut s) => {
                s.margin = margin;
                s.scale = scale;
                LossChoice::Composite(s)
            }
            LossChoice::Pesg { .. } => LossChoice::Pesg { margin },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub head: HeadNorm,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], head: HeadNorm::None }
    }
}

/// Margin/scale/learning-rate candidate grids. Empty grids are filled with
/// the standard defaults at `normalize` time: margins {0.1, 1, 10} for
/// unbounded heads and {0.1, 0.5, 1} for bounded ones, scales {0.1, 1, 10},
/// learning rate pinned to the optimizer's base rate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrids {
    pub margins: Vec<f64>,
    pub scales: Vec<f64>,
    pub lrs: Vec<f64>,
}

/// One sweep axis varied while everything else stays pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    Spr(Vec<Spr>),
    CerGamma(Vec<f64>),
    WeightDecay(Vec<f64>),
    Head(Vec<HeadNorm>),
    Optimizer(Vec<OptStyle>),
    Loss(Vec<LossChoice>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Spr(v) => v.len(),
            SweepAxis::CerGamma(v) => v.len(),
            SweepAxis::WeightDecay(v) => v.len(),
            SweepAxis::Head(v) => v.len(),
            SweepAxis::Optimizer(v) => v.len(),
            SweepAxis::Loss(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Human-readable label of the i-th setting, used as the table row key.
    pub fn setting_label(&self, i: usize) -> String {
        match self {
            SweepAxis::Spr(v) => match v[i] {
                Spr::Origin => "spr=origin".to_string(),
                Spr::Rate(r) => format!("spr={r}"),
            },
            SweepAxis::CerGamma(v) => format!("cer={}", v[i]),
            SweepAxis::WeightDecay(v) => format!("wd={}", v[i]),
            SweepAxis::Head(v) => format!("head={}", v[i].label()),
            SweepAxis::Optimizer(v) => format!("opt={}", v[i].label()),
            SweepAxis::Loss(v) => format!("loss={}", v[i].label()),
        }
    }

    /// Clone `config` with the i-th setting applied.
    pub fn apply(&self, config: &ExperimentConfig, i: usize) -> ExperimentConfig {
        let mut out = config.clone();
        match self {
            SweepAxis::Spr(v) => out.sampler.spr = v[i],
            SweepAxis::CerGamma(v) => out.optimizer.cer_gamma = v[i],
            SweepAxis::WeightDecay(v) => out.optimizer.weight_decay = v[i],
            SweepAxis::Head(v) => out.model.head = v[i],
            SweepAxis::Optimizer(v) => out.optimizer.style = v[i],
            SweepAxis::Loss(v) => out.loss = v[i],
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub loss: LossChoice,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub hyper: HyperGrids,
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
}

fn default_epochs() -> usize {
    50
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_cv_folds() -> usize {
    5
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.normalize()?;
        Ok(config)
    }

    /// Fill empty grids and check the invariants.
    pub fn normalize(&mut self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be >= 2".into()));
        }
        self.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sampler.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(axis) = &self.sweep {
            if axis.is_empty() {
                return Err(Error::Config("sweep axis has no values".into()));
            }
        }
        if self.hyper.margins.is_empty() {
            self.hyper.margins = if self.model.head.bounds_output() {
                vec![0.1, 0.5, 1.0]
            } else {
                vec![0.1, 1.0, 10.0]
            };
        }
        if self.hyper.scales.is_empty() {
            self.hyper.scales = vec![0.1, 1.0, 10.0];
        }
        if self.hyper.lrs.is_empty() {
            self.hyper.lrs = vec![self.optimizer.base_lr];
        }
        Ok(())
    }

    /// Candidate (margin, scale, lr) points for this loss; grids along
    /// inapplicable axes collapse to the spec's own value.
    pub fn hyper_points(&self) -> Vec<(f64, f64, f64)> {
        let margins: Vec<f64> =
            if self.loss.uses_margin() { self.hyper.margins.clone() } else { vec![self.loss.margin()] };
        let scales: Vec<f64> =
            if self.loss.uses_scale() { self.hyper.scales.clone() } else { vec![self.loss.scale()] };
        let mut out = Vec::new();
        for &m in &margins {
            for &s in &scales {
                for &lr in &self.hyper.lrs {
                    out.push((m, s, lr));
                }
            }
        }
        out
    }
}

/// Parse a `synth:key=value,...` or CSV path dataset override from the CLI.
pub fn parse_dataset_arg(arg: &str, label_column: &str) -> Result<DatasetSource> {
    if let Some(spec) = arg.strip_prefix("synth:") {
        let mut n = 2000usize;
        let mut dim = 10usize;
        let mut pr = 0.1;
        let mut separation = 3.0;
        let mut seed = 0u64;
        let mut test_n = None;
        let mut test_pr = None;
        for part in spec.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad synth field {part:?}")))?;
            let bad = || Error::Config(format!("bad synth value {part:?}"));
            match key {
                "n" => n = value.parse().map_err(|_| bad())?,
                "dim" => dim = value.parse().map_err(|_| bad())?,
                "pr" => pr = value.parse().map_err(|_| bad())?,
                "sep" | "separation" => separation = value.parse().map_err(|_| bad())?,
                "seed" => seed = value.parse().map_err(|_| bad())?,
                "test_n" => test_n = Some(value.parse().map_err(|_| bad())?),
                "test_pr" => test_pr = Some(value.parse().map_err(|_| bad())?),
                _ => return Err(Error::Config(format!("unknown synth field {key:?}"))),
            }
        }
        Ok(DatasetSource::Synth { n, dim, pr, separation, seed, test_n, test_pr })
    } else {
        Ok(DatasetSource::Csv {
            path: PathBuf::from(arg),
            label_column: label_column.to_string(),
            test_fraction: default_test_fraction(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::pairwise::PairwiseKind;

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"{
            "dataset": {"type": "synth", "n": 200, "dim": 4, "pr": 0.2, "separation": 2.0},
            "loss": {"family": "pairwise", "kind": "PSQ", "margin": 1.0}
        }"#;
        let mut config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.normalize().unwrap();
        assert_eq!(config.epochs, 50);
        assert_eq!(config.cv_folds, 5);
        assert_eq!(config.hyper.margins, vec![0.1, 1.0, 10.0]);
        assert_eq!(config.hyper.lrs, vec![config.optimizer.base_lr]);
        assert!(matches!(config.loss, LossChoice::Pairwise(s) if s.kind == PairwiseKind::Psq));
    }

    #[test]
    fn bounded_head_narrows_margin_grid() {
        let text = r#"{
            "dataset": {"type": "synth", "n": 200, "dim": 4, "pr": 0.2, "separation": 2.0},
            "loss": {"family": "composite", "kind": "CSQ", "margin": 1.0},
            "model": {"hidden": [16], "head": "sigmoid"}
        }"#;
        let mut config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.normalize().unwrap();
        assert_eq!(config.hyper.margins, vec![0.1, 0.5, 1.0]);
    }

    #[test]
    fn hyper_points_collapse_inapplicable_axes() {
        let text = r#"{
            "dataset": {"type": "synth", "n": 200, "dim": 4, "pr": 0.2, "separation": 2.0},
            "loss": {"family": "pairwise", "kind": "PL", "scale": 2.0},
            "hyper": {"scales": [0.5, 5.0], "lrs": [0.1, 0.01]}
        }"#;
        let mut config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.normalize().unwrap();
        let points = config.hyper_points();
        // margin collapses to the spec value, 2 scales x 2 lrs remain
        assert_eq!(points.len(), 4);
        assert!(points.iter().all(|&(m, _, _)| m == 1.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let text = r#"{
            "dataset": {"type": "synth", "n": 200, "dim": 4, "pr": 0.2, "separation": 2.0},
            "loss": {"family": "pesg"},
            "epochs": 0
        }"#;
        let mut config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(config.normalize(), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_arg_parsing() {
        let src = parse_dataset_arg("synth:n=500,dim=3,pr=0.25,sep=1.5,seed=9", "label").unwrap();
        assert_eq!(
            src,
            DatasetSource::Synth {
                n: 500,
                dim: 3,
                pr: 0.25,
                separation: 1.5,
                seed: 9,
                test_n: None,
                test_pr: None
            }
        );
        assert!(matches!(parse_dataset_arg("data/x.csv", "y"), Ok(DatasetSource::Csv { .. })));
        assert!(parse_dataset_arg("synth:bogus=1", "label").is_err());
    }
}

//! Wall-clock comparison of pairwise vs composite objectives on matched
//! settings: same data, model, optimizer, and batch stream; only the loss
//! differs.

use serde::{Deserialize, Serialize};

use crate::data::{kfold_split, synth_gaussian, SamplerConfig};
use crate::harness::config::LossChoice;
use crate::harness::trial::{run_trial, TrialSetup};
use crate::losses::composite::{CompositeKind, CompositeLossSpec};
use crate::losses::pairwise::{PairwiseKind, PairwiseLossSpec};
use crate::model::HeadNorm;
use crate::optim::OptimizerConfig;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub loss: String,
    pub ms_per_40_iters_mean: f64,
    pub ms_per_40_iters_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn row(&self, loss: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.loss == loss)
    }
}

fn loss_menu() -> Vec<LossChoice> {
    let p = |kind| {
        LossChoice::Pairwise(PairwiseLossSpec { kind, margin: 1.0, scale: 1.0 })
    };
    let c = |kind| {
        LossChoice::Composite(CompositeLossSpec { kind, margin: 1.0, scale: 1.0 })
    };
    vec![p(PairwiseKind::Psq), c(CompositeKind::Csq), p(PairwiseKind::Psh), c(CompositeKind::Csh)]
}

/// Time the square and hinge loss pairs: 40 training iterations (8 per epoch
/// on n=512, batch 64) per repeat, identical batches across losses. Reports
/// per-loss mean and min over repeats; the min is the fair comparison number
/// since it sheds scheduling noise.
pub fn time_iterations(repeats: usize) -> Result<TimingTable> {
    let train = synth_gaussian(512, 16, 0.2, 1.5, 11)?;
    let test = synth_gaussian(128, 16, 0.2, 1.5, 12)?;
    let folds = kfold_split(&train, 5, 0)?;
    let (train_idx, val_idx) = folds[0].clone();
    let mut rows = Vec::new();
    for loss in loss_menu() {
        let mut samples = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let setup = TrialSetup {
                train: &train,
                train_idx: train_idx.clone(),
                val_idx: val_idx.clone(),
                test: &test,
                loss,
                optimizer: OptimizerConfig::default(),
                sampler: SamplerConfig::default(),
                hidden: vec![32, 32],
                head: HeadNorm::None,
                epochs: 5,
                seed: rep as u64,
                fold: 0,
            };
            samples.push(run_trial(&setup)?.ms_per_40_iters);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        rows.push(TimingRow {
            loss: loss.label(),
            ms_per_40_iters_mean: mean,
            ms_per_40_iters_min: min,
        });
    }
    Ok(TimingTable { rows })
}

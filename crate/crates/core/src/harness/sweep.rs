//! Cross-validated hyper-parameter selection and sweep aggregation.
//!
//! A sweep walks one experimental axis (sampling rate, regularizer strength,
//! head, ...), and for every setting runs the full grid of loss
//! hyper-parameters over seeds x folds. The reported number per setting is
//! the test AUROC of the hyper-parameter point and epoch with the best mean
//! validation AUROC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::kfold_split;
use crate::harness::config::ExperimentConfig;
use crate::harness::trial::{prepare_data, run_trial, TrialResult, TrialSetup};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub margin: f64,
    pub scale: f64,
    pub lr: f64,
}

/// All finished trials (seeds x folds) for one hyper-parameter point.
#[derive(Debug, Clone)]
pub struct HyperGroup {
    pub point: HyperPoint,
    /// (seed, trial) for every run that finished
    pub trials: Vec<(u64, TrialResult)>,
    pub failures: usize,
}

/// Pick the hyper-parameter point and epoch with the highest mean validation
/// AUROC. Ties go to the earlier epoch, then to the smaller margin, scale,
/// and learning rate, in that order.
pub fn select_by_validation(groups: &[HyperGroup]) -> Result<(usize, usize)> {
    // (mean val auroc, (margin, scale, lr), group index, epoch)
    type Candidate = (f64, (f64, f64, f64), usize, usize);
    let mut best: Option<Candidate> = None;
    for (gi, group) in groups.iter().enumerate() {
        if group.trials.is_empty() {
            continue;
        }
        let epochs = group.trials[0].1.val_auroc.len();
        for epoch in 0..epochs {
            let mean = group.trials.iter().map(|(_, t)| t.val_auroc[epoch]).sum::<f64>()
                / group.trials.len() as f64;
            let key = (group.point.margin, group.point.scale, group.point.lr);
            let better = match &best {
                None => true,
                Some((bv, bk, _, _)) => mean > *bv || (mean == *bv && key < *bk),
            };
            if better {
                best = Some((mean, key, gi, epoch));
            }
        }
    }
    best.map(|(_, _, gi, epoch)| (gi, epoch)).ok_or(Error::EmptyResults)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub loss: String,
    pub setting: String,
    pub mean: f64,
    pub std: f64,
    /// seeds contributing to the mean
    pub n: usize,
    pub failures: usize,
    pub margin: f64,
    pub scale: f64,
    pub lr: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub dataset: String,
    pub rows: Vec<SweepRow>,
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Run every sweep setting of `config` and aggregate one row per setting.
/// Individual diverged trials are counted, not fatal; a setting with no
/// surviving trial at all is.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepTable> {
    let data = prepare_data(config)?;
    let n_settings = config.sweep.as_ref().map_or(1, |axis| axis.len());
    let mut rows = Vec::with_capacity(n_settings);
    for si in 0..n_settings {
        let (setting, cfg) = match &config.sweep {
            Some(axis) => (axis.setting_label(si), axis.apply(config, si)),
            None => ("base".to_string(), config.clone()),
        };
        let points: Vec<HyperPoint> = cfg
            .hyper_points()
            .into_iter()
            .map(|(margin, scale, lr)| HyperPoint { margin, scale, lr })
            .collect();

        // one job per (point, seed, fold), dispatched in a fixed order so the
        // aggregation below is reproducible regardless of thread count
        let mut jobs = Vec::new();
        for (pi, point) in points.iter().enumerate() {
            for &seed in &cfg.seeds {
                let folds = kfold_split(&data.train, cfg.cv_folds, seed)?;
                for (fi, fold) in folds.into_iter().enumerate() {
                    jobs.push((pi, *point, seed, fi, fold));
                }
            }
        }
        let outcomes: Vec<(usize, u64, Result<TrialResult>)> = jobs
            .into_par_iter()
            .map(|(pi, point, seed, fi, (train_idx, val_idx))| {
                let mut lr_cfg = cfg.optimizer.clone();
                lr_cfg.base_lr = point.lr;
                let setup = TrialSetup {
                    train: &data.train,
                    train_idx,
                    val_idx,
                    test: &data.test,
                    loss: cfg.loss.with_hyper(point.margin, point.scale),
                    optimizer: lr_cfg,
                    sampler: cfg.sampler,
                    hidden: cfg.model.hidden.clone(),
                    head: cfg.model.head,
                    epochs: cfg.epochs,
                    seed,
                    fold: fi,
                };
                (pi, seed, run_trial(&setup))
            })
            .collect();

        let mut groups: Vec<HyperGroup> = points
            .iter()
            .map(|&point| HyperGroup { point, trials: Vec::new(), failures: 0 })
            .collect();
        let mut failures = 0usize;
        for (pi, seed, outcome) in outcomes {
            match outcome {
                Ok(trial) => groups[pi].trials.push((seed, trial)),
                Err(Error::DivergedLoss { .. }) => {
                    groups[pi].failures += 1;
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        }

        let (gi, best_epoch) = select_by_validation(&groups)?;
        let winner = &groups[gi];
        // per-seed mean over folds, then mean/std across seeds
        let mut per_seed = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let vals: Vec<f64> = winner
                .trials
                .iter()
                .filter(|(s, _)| *s == seed)
                .map(|(_, t)| t.test_auroc[best_epoch])
                .collect();
            if !vals.is_empty() {
                per_seed.push(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        if per_seed.is_empty() {
            return Err(Error::EmptyResults);
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        rows.push(SweepRow {
            loss: cfg.loss.label(),
            setting,
            mean,
            std: sample_std(&per_seed, mean),
            n: per_seed.len(),
            failures,
            margin: winner.point.margin,
            scale: winner.point.scale,
            lr: winner.point.lr,
            best_epoch,
        });
    }
    Ok(SweepTable { dataset: data.train.name.clone(), rows })
}

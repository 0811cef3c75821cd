//! Single-trial training loop: sampler -> model -> loss -> optimizer ->
//! per-epoch AUROC bookkeeping.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, stratified_holdout, synth_gaussian, BatchSampler, Dataset, SamplerConfig};
use crate::harness::config::{DatasetSource, ExperimentConfig, LossChoice};
use crate::losses::composite::{batch_components, composite_grads};
use crate::losses::pairwise::{batch_pairwise_loss, batch_pairwise_score_grad};
use crate::metrics::auroc_from_scores;
use crate::model::{HeadNorm, Mlp, Mode};
use crate::optim::{
    accumulate_stage, apply_regularizers, direction, end_stage, pesg_step, schedule_lr, sgd_update,
    update_d, OptimizerConfig, OptimizerState,
};
use crate::{Error, Result};

/// Everything a single trial needs, fully resolved.
#[derive(Debug, Clone)]
pub struct TrialSetup<'a> {
    pub train: &'a Dataset,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test: &'a Dataset,
    pub loss: LossChoice,
    pub optimizer: OptimizerConfig,
    pub sampler: SamplerConfig,
    pub hidden: Vec<usize>,
    pub head: HeadNorm,
    pub epochs: usize,
    pub seed: u64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub train_loss: Vec<f64>,
    pub val_auroc: Vec<f64>,
    pub test_auroc: Vec<f64>,
    /// epoch with the highest validation AUROC (earliest on ties)
    pub best_epoch: usize,
    pub val_at_best: f64,
    pub test_at_best: f64,
    pub ms_per_40_iters: f64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn mix(seed: u64, fold: usize, salt: u64) -> u64 {
    splitmix(seed ^ splitmix((fold as u64) ^ salt))
}

/// Eval-mode AUROC of the model's raw scores on the given rows.
pub fn eval_auroc(model: &Mlp, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    let x = ds.gather(indices);
    let scores = model.raw_scores(&x, indices.len())?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&i, &s) in indices.iter().zip(&scores) {
        if ds.label(i) == 1 {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    auroc_from_scores(&pos, &neg)
}

pub fn run_trial(setup: &TrialSetup) -> Result<TrialResult> {
    run_trial_model(setup).map(|(result, _)| result)
}

/// Like [`run_trial`], but also hands back the model with its weights rolled
/// back to the best validation epoch (batch-norm running statistics stay at
/// their end-of-training values).
pub fn run_trial_model(setup: &TrialSetup) -> Result<(TrialResult, Mlp)> {
    let train = setup.train;
    let mut dims = Vec::with_capacity(setup.hidden.len() + 2);
    dims.push(train.dim());
    dims.extend_from_slice(&setup.hidden);
    dims.push(1);
    let mut model = Mlp::init(&dims, setup.head, mix(setup.seed, setup.fold, 0x4D))?;
    let nw = model.n_params();

    let mut sampler_cfg = setup.sampler;
    sampler_cfg.seed = mix(setup.seed, setup.fold, 0xB7);
    let mut sampler = BatchSampler::new(train, &setup.train_idx, &sampler_cfg)?;

    let is_composite = matches!(setup.loss, LossChoice::Composite(_));
    let mut params = model.params_flat();
    if is_composite {
        // the two auxiliary variance centers ride along as extra coordinates
        params.extend_from_slice(&[0.0, 0.0]);
    }
    let mut state = OptimizerState::new(&params);
    // PESG keeps (a, b) outside the parameter vector
    let (mut pesg_a, mut pesg_b) = (0.0f64, 0.0f64);

    let opt = &setup.optimizer;
    let iters_per_epoch = setup.train_idx.len().div_ceil(sampler_cfg.batch_size).max(1);
    let all_test: Vec<usize> = (0..setup.test.len()).collect();

    let mut train_loss = Vec::with_capacity(setup.epochs);
    let mut val_auroc = Vec::with_capacity(setup.epochs);
    let mut test_auroc = Vec::with_capacity(setup.epochs);
    let mut train_time_ms = 0.0;
    let mut total_iters = 0u64;
    let mut best_params = params[..nw].to_vec();
    let mut best_val = f64::NEG_INFINITY;

    for epoch in 0..setup.epochs {
        if epoch > 0 && opt.lr_drop_epochs.contains(&epoch) && state.stage_len > 0 {
            end_stage(&mut state)?;
        }
        let lr = schedule_lr(opt, epoch);
        let mut epoch_loss = 0.0;
        let started = Instant::now();
        for _ in 0..iters_per_epoch {
            let (pos_idx, neg_idx) = sampler.next_batch();
            let n_pos = pos_idx.len();
            let batch = n_pos + neg_idx.len();
            let mut x = train.gather(&pos_idx);
            x.extend_from_slice(&train.gather(&neg_idx));
            let (z, cache) = model.forward(&x, batch, Mode::Train)?;
            let (zp, zn) = z.split_at(n_pos);

            let loss_val = match setup.loss {
                LossChoice::Pairwise(spec) => {
                    let loss_val = batch_pairwise_loss(&spec, zp, zn)?;
                    let (gp, gn) = batch_pairwise_score_grad(&spec, zp, zn)?;
                    let mut dl_dz = gp;
                    dl_dz.extend_from_slice(&gn);
                    let grad = model.backward(&cache, &dl_dz)?;
                    let grad = apply_regularizers(
                        &grad,
                        &params,
                        &state.w_bar_prev,
                        opt.weight_decay,
                        opt.cer_gamma,
                    )?;
                    let g = direction(&mut state, opt, &grad)?;
                    sgd_update(&mut params, &g, lr)?;
                    model.set_params(&params)?;
                    loss_val
                }
                LossChoice::Composite(spec) => {
                    let (a, b) = (params[nw], params[nw + 1]);
                    let comps = batch_components(zp, zn, a, b)?;
                    let d = update_d(&mut state, comps.a_mean, comps.b_mean, opt.composite_d_beta);
                    let loss_val = comps.h_plus
                        + comps.h_minus
                        + spec.surrogate_value(comps.a_mean - comps.b_mean);
                    let (gp, gn, ga, gb) = composite_grads(&spec, zp, zn, a, b, d)?;
                    let mut dl_dz = gp;
                    dl_dz.extend_from_slice(&gn);
                    let w_grad = model.backward(&cache, &dl_dz)?;
                    let mut grad = apply_regularizers(
                        &w_grad,
                        &params[..nw],
                        &state.w_bar_prev[..nw],
                        opt.weight_decay,
                        opt.cer_gamma,
                    )?;
                    grad.extend_from_slice(&[ga, gb]);
                    let g = direction(&mut state, opt, &grad)?;
                    sgd_update(&mut params, &g, lr)?;
                    model.set_params(&params[..nw])?;
                    loss_val
                }
                LossChoice::Pesg { margin } => {
                    let comps = batch_components(zp, zn, pesg_a, pesg_b)?;
                    let u = margin + comps.b_mean - comps.a_mean;
                    let loss_val = comps.h_plus + comps.h_minus + state.alpha * u
                        - 0.5 * state.alpha * state.alpha;
                    let model_ref = &model;
                    let cache_ref = &cache;
                    pesg_step(
                        &mut state,
                        opt,
                        zp,
                        zn,
                        |gp, gn| {
                            let mut dl_dz = gp.to_vec();
                            dl_dz.extend_from_slice(gn);
                            model_ref.backward(cache_ref, &dl_dz)
                        },
                        &mut params,
                        &mut pesg_a,
                        &mut pesg_b,
                        margin,
                        lr,
                    )?;
                    model.set_params(&params)?;
                    loss_val
                }
            };
            if !loss_val.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            epoch_loss += loss_val;
            accumulate_stage(&mut state, &params);
            total_iters += 1;
        }
        train_time_ms += started.elapsed().as_secs_f64() * 1e3;

        let mean_loss = epoch_loss / iters_per_epoch as f64;
        if !mean_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        train_loss.push(mean_loss);
        let val = eval_auroc(&model, train, &setup.val_idx)?;
        if val > best_val {
            best_val = val;
            best_params.copy_from_slice(&params[..nw]);
        }
        val_auroc.push(val);
        test_auroc.push(eval_auroc(&model, setup.test, &all_test)?);
    }
    model.set_params(&best_params)?;

    let mut best_epoch = 0;
    for (e, &v) in val_auroc.iter().enumerate() {
        if v > val_auroc[best_epoch] {
            best_epoch = e;
        }
    }
    let result = TrialResult {
        val_at_best: val_auroc[best_epoch],
        test_at_best: test_auroc[best_epoch],
        best_epoch,
        train_loss,
        val_auroc,
        test_auroc,
        ms_per_40_iters: train_time_ms / total_iters as f64 * 40.0,
    };
    Ok((result, model))
}

/// Train and test datasets resolved from a config's dataset source.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    match &config.dataset {
        DatasetSource::Synth { n, dim, pr, separation, seed, test_n, test_pr } => {
            let train = synth_gaussian(*n, *dim, *pr, *separation, *seed)?;
            let test = synth_gaussian(
                test_n.unwrap_or(n / 2).max(4),
                *dim,
                test_pr.unwrap_or(*pr),
                *separation,
                splitmix(*seed ^ 0x7E57),
            )?;
            Ok(PreparedData { train, test })
        }
        DatasetSource::Csv { path, label_column, test_fraction } => {
            let full = load_csv(path, label_column)?;
            let (rest, held) = stratified_holdout(&full, *test_fraction, 0xC5EED)?;
            Ok(PreparedData {
                train: full.subset(&rest, format!("{}-train", full.name))?,
                test: full.subset(&held, format!("{}-test", full.name))?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::kfold_split;
    use crate::losses::composite::{CompositeKind, CompositeLossSpec};
    use crate::losses::pairwise::{PairwiseKind, PairwiseLossSpec};
    use crate::optim::OptStyle;

    fn setup<'a>(train: &'a Dataset, test: &'a Dataset, loss: LossChoice) -> TrialSetup<'a> {
        let folds = kfold_split(train, 5, 3).unwrap();
        let (train_idx, val_idx) = folds[0].clone();
        TrialSetup {
            train,
            train_idx,
            val_idx,
            test,
            loss,
            optimizer: OptimizerConfig {
                style: OptStyle::Momentum,
                base_lr: 0.05,
                lr_drop_epochs: vec![6, 8],
                ..Default::default()
            },
            sampler: SamplerConfig::default(),
            hidden: vec![8],
            head: HeadNorm::None,
            epochs: 10,
            seed: 1,
            fold: 0,
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let train = synth_gaussian(300, 4, 0.2, 2.0, 5).unwrap();
        let test = synth_gaussian(200, 4, 0.2, 2.0, 6).unwrap();
        let loss = LossChoice::Composite(CompositeLossSpec {
            kind: CompositeKind::Csq,
            margin: 1.0,
            scale: 1.0,
        });
        let s = setup(&train, &test, loss);
        let mut a = run_trial(&s).unwrap();
        let mut b = run_trial(&s).unwrap();
        // everything except the wall-clock field must match bit for bit
        a.ms_per_40_iters = 0.0;
        b.ms_per_40_iters = 0.0;
        assert_eq!(a, b);
        assert!(a.val_auroc.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.train_loss.len(), 10);
    }

    #[test]
    fn huge_lr_diverges_cleanly() {
        let train = synth_gaussian(300, 4, 0.2, 2.0, 5).unwrap();
        let test = synth_gaussian(200, 4, 0.2, 2.0, 6).unwrap();
        let loss = LossChoice::Pairwise(PairwiseLossSpec {
            kind: PairwiseKind::Psq,
            margin: 1.0,
            scale: 1.0,
        });
        let mut s = setup(&train, &test, loss);
        s.optimizer.base_lr = 1e3;
        s.optimizer.style = OptStyle::Sgd;
        assert!(matches!(run_trial(&s), Err(Error::DivergedLoss { .. })));
    }

    #[test]
    fn separable_data_trains_all_families() {
        let train = synth_gaussian(400, 4, 0.25, 3.0, 9).unwrap();
        let test = synth_gaussian(200, 4, 0.25, 3.0, 10).unwrap();
        for loss in [
            LossChoice::Pairwise(PairwiseLossSpec {
                kind: PairwiseKind::Psh,
                margin: 1.0,
                scale: 1.0,
            }),
            LossChoice::Composite(CompositeLossSpec {
                kind: CompositeKind::Csh,
                margin: 1.0,
                scale: 1.0,
            }),
            LossChoice::Pesg { margin: 1.0 },
        ] {
            let s = setup(&train, &test, loss);
            let r = run_trial(&s).unwrap();
            assert!(
                *r.test_auroc.last().unwrap() > 0.9,
                "{:?}: {}",
                s.loss,
                r.test_auroc.last().unwrap()
            );
        }
    }

    #[test]
    fn stage_count_matches_schedule() {
        // ms_per_40_iters sanity plus best-epoch bounds on a tiny run
        let train = synth_gaussian(200, 3, 0.3, 2.0, 2).unwrap();
        let test = synth_gaussian(100, 3, 0.3, 2.0, 3).unwrap();
        let loss = LossChoice::Pairwise(PairwiseLossSpec {
            kind: PairwiseKind::Pl,
            margin: 1.0,
            scale: 1.0,
        });
        let s = setup(&train, &test, loss);
        let r = run_trial(&s).unwrap();
        assert!(r.best_epoch < s.epochs);
        assert!(r.ms_per_40_iters > 0.0);
    }
}

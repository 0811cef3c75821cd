//! Parameter-update engines: SGD/Momentum/Adam directions shared by the
//! pairwise and composite training loops, the moving-average gap estimate
//! for composite losses, primal-dual updates for the min-max objective,
//! weight decay, consecutive-stage regularization, and the staged
//! learning-rate schedule.
//!
//! Conventions follow the averaging form v <- (1-beta) v + beta g, so the
//! classical momentum 0.9 corresponds to beta = 0.1 here. There is no Adam
//! bias correction.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStyle {
    Sgd,
    Momentum,
    Adam,
}

impl OptStyle {
    pub fn label(self) -> &'static str {
        match self {
            OptStyle::Sgd => "sgd",
            OptStyle::Momentum => "momentum",
            OptStyle::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub style: OptStyle,
    pub base_lr: f64,
    /// momentum averaging weight on the fresh gradient
    pub momentum_beta: f64,
    /// second-moment averaging weight (Adam)
    pub adam_beta: f64,
    /// additive floor inside the Adam square root
    pub adam_floor: f64,
    /// moving-average weight for the composite gap estimate d
    pub composite_d_beta: f64,
    pub weight_decay: f64,
    pub cer_gamma: f64,
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            style: OptStyle::Momentum,
            base_lr: 0.01,
            momentum_beta: 0.1,
            adam_beta: 0.001,
            adam_floor: 1e-8,
            composite_d_beta: 0.9,
            weight_decay: 0.0,
            cer_gamma: 0.0,
            lr_drop_epochs: vec![30, 40],
            lr_drop_factor: 10.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_lr", self.base_lr),
            ("momentum_beta", self.momentum_beta),
            ("adam_beta", self.adam_beta),
            ("adam_floor", self.adam_floor),
            ("composite_d_beta", self.composite_d_beta),
            ("lr_drop_factor", self.lr_drop_factor),
        ];
        for (name, v) in positive {
            // also rejects NaN
            if v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::BadParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.momentum_beta > 1.0 || self.composite_d_beta > 1.0 || self.adam_beta >= 1.0 {
            return Err(Error::BadParams("averaging weights must lie in (0, 1]".into()));
        }
        if self.weight_decay < 0.0 || self.cer_gamma < 0.0 {
            return Err(Error::BadParams("regularizer weights must be >= 0".into()));
        }
        if self.lr_drop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadParams("lr_drop_epochs must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Mutable optimizer buffers, all sized to the parameter vector they drive.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    /// first-moment buffer
    pub v: Vec<f64>,
    /// second-moment buffer, elementwise >= 0
    pub u: Vec<f64>,
    /// moving-average estimate of the class-mean score gap
    pub d: f64,
    /// dual variable of the min-max objective
    pub alpha: f64,
    pub step_count: u64,
    pub stage_sum: Vec<f64>,
    pub stage_len: u64,
    /// averaged parameters of the previous fixed-lr stage; starts at the
    /// initial parameters so the stage regularizer is defined from step one
    pub w_bar_prev: Vec<f64>,
}

impl OptimizerState {
    pub fn new(init_params: &[f64]) -> Self {
        let n = init_params.len();
        Self {
            v: vec![0.0; n],
            u: vec![0.0; n],
            d: 0.0,
            alpha: 0.0,
            step_count: 0,
            stage_sum: vec![0.0; n],
            stage_len: 0,
            w_bar_prev: init_params.to_vec(),
        }
    }
}

/// Base learning rate divided by the drop factor once per drop epoch passed.
pub fn schedule_lr(config: &OptimizerConfig, epoch: usize) -> f64 {
    let drops = config.lr_drop_epochs.iter().filter(|&&e| e <= epoch).count();
    config.base_lr / config.lr_drop_factor.powi(drops as i32)
}

/// grad + lambda * w + 2 gamma (w - w_bar_prev), i.e. weight decay plus the
/// consecutive-stage pull toward the previous stage average.
pub fn apply_regularizers(
    grad: &[f64],
    w: &[f64],
    w_bar_prev: &[f64],
    lambda: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if grad.len() != w.len() || w_bar_prev.len() != w.len() {
        return Err(Error::ShapeMismatch { expected: grad.len(), got: w.len().max(w_bar_prev.len()) });
    }
    Ok(grad
        .iter()
        .zip(w)
        .zip(w_bar_prev)
        .map(|((&g, &wi), &wb)| g + lambda * wi + 2.0 * gamma * (wi - wb))
        .collect())
}

/// Turn a raw gradient into an update direction, mutating the moment buffers.
pub fn direction(state: &mut OptimizerState, config: &OptimizerConfig, grad: &[f64]) -> Result<Vec<f64>> {
    if grad.len() != state.v.len() {
        return Err(Error::ShapeMismatch { expected: state.v.len(), got: grad.len() });
    }
    state.step_count += 1;
    match config.style {
        OptStyle::Sgd => Ok(grad.to_vec()),
        OptStyle::Momentum => {
            let beta = config.momentum_beta;
            for (v, &g) in state.v.iter_mut().zip(grad) {
                *v = (1.0 - beta) * *v + beta * g;
            }
            Ok(state.v.clone())
        }
        OptStyle::Adam => {
            let beta = config.momentum_beta;
            let beta2 = config.adam_beta;
            for (v, &g) in state.v.iter_mut().zip(grad) {
                *v = (1.0 - beta) * *v + beta * g;
            }
            for (u, &g) in state.u.iter_mut().zip(grad) {
                *u = (1.0 - beta2) * *u + beta2 * g * g;
            }
            Ok(state
                .v
                .iter()
                .zip(&state.u)
                .map(|(&v, &u)| v / (u + config.adam_floor).sqrt())
                .collect())
        }
    }
}

/// params <- params - lr * g
pub fn sgd_update(params: &mut [f64], g: &[f64], lr: f64) -> Result<()> {
    if params.len() != g.len() {
        return Err(Error::ShapeMismatch { expected: params.len(), got: g.len() });
    }
    for (p, &d) in params.iter_mut().zip(g) {
        *p -= lr * d;
    }
    Ok(())
}

/// d <- (1 - beta0) d + beta0 (A - B); returns the new estimate.
pub fn update_d(state: &mut OptimizerState, a_mean: f64, b_mean: f64, beta0: f64) -> f64 {
    state.d = (1.0 - beta0) * state.d + beta0 * (a_mean - b_mean);
    state.d
}

/// Record one iterate into the running stage average.
pub fn accumulate_stage(state: &mut OptimizerState, w: &[f64]) {
    for (s, &wi) in state.stage_sum.iter_mut().zip(w) {
        *s += wi;
    }
    state.stage_len += 1;
}

/// Close the current stage: w_bar_prev becomes the uniform iterate average,
/// and the accumulator resets.
pub fn end_stage(state: &mut OptimizerState) -> Result<()> {
    if state.stage_len == 0 {
        return Err(Error::EmptyStage);
    }
    let len = state.stage_len as f64;
    for (wb, s) in state.w_bar_prev.iter_mut().zip(&mut state.stage_sum) {
        *wb = *s / len;
        *s = 0.0;
    }
    state.stage_len = 0;
    Ok(())
}

/// Score-level gradients of the min-max objective with the dual held fixed.
///
/// Returns (grad_pos, grad_neg, grad_a, grad_b).
pub fn pesg_score_grads(
    pos: &[f64],
    neg: &[f64],
    a: f64,
    b: f64,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass);
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let grad_pos: Vec<f64> = pos.iter().map(|&s| (2.0 * (s - a) - alpha) / np).collect();
    let grad_neg: Vec<f64> = neg.iter().map(|&s| (2.0 * (s - b) + alpha) / nn).collect();
    let grad_a = -2.0 * pos.iter().map(|&s| s - a).sum::<f64>() / np - alpha;
    let grad_b = -2.0 * neg.iter().map(|&s| s - b).sum::<f64>() / nn + alpha;
    Ok((grad_pos, grad_neg, grad_a, grad_b))
}

/// One primal-dual step: descend (w, a, b) with the dual fixed, then ascend
/// the dual toward c + b_mean - a_mean and project it onto alpha >= 0.
///
/// `backprop` maps the score-level gradients to a flat w-gradient; the
/// weight-decay and stage regularizers touch w only.
#[allow(clippy::too_many_arguments)]
pub fn pesg_step(
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    pos: &[f64],
    neg: &[f64],
    backprop: impl FnOnce(&[f64], &[f64]) -> Result<Vec<f64>>,
    w: &mut [f64],
    a: &mut f64,
    b: &mut f64,
    margin: f64,
    lr: f64,
) -> Result<()> {
    let (gp, gn, ga, gb) = pesg_score_grads(pos, neg, *a, *b, state.alpha)?;
    let w_grad = backprop(&gp, &gn)?;
    let w_grad =
        apply_regularizers(&w_grad, w, &state.w_bar_prev, config.weight_decay, config.cer_gamma)?;
    sgd_update(w, &w_grad, lr)?;
    *a -= lr * ga;
    *b -= lr * gb;
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let a_mean = pos.iter().sum::<f64>() / np;
    let b_mean = neg.iter().sum::<f64>() / nn;
    state.alpha += lr * ((margin + b_mean - a_mean) - state.alpha);
    state.alpha = state.alpha.max(0.0);
    state.step_count += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::composite::{batch_components, composite_grads, composite_objective, CompositeKind, CompositeLossSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lr_schedule() {
        let cfg = OptimizerConfig { base_lr: 0.01, lr_drop_epochs: vec![30, 40], ..Default::default() };
        assert_eq!(schedule_lr(&cfg, 10), 0.01);
        assert!((schedule_lr(&cfg, 35) - 0.001).abs() < 1e-15);
        assert!((schedule_lr(&cfg, 45) - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn regularizer_values() {
        let g = apply_regularizers(&[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0], 0.0, 0.02).unwrap();
        assert_eq!(g, vec![0.04, 0.04]);
        let g = apply_regularizers(&[0.5], &[2.0], &[2.0], 1e-4, 0.0).unwrap();
        assert!((g[0] - 0.5002).abs() < 1e-12);
        let g = apply_regularizers(&[0.3, -0.1], &[5.0, 5.0], &[1.0, 1.0], 0.0, 0.0).unwrap();
        assert_eq!(g, vec![0.3, -0.1]);
        assert!(apply_regularizers(&[0.0], &[1.0, 2.0], &[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn momentum_with_beta_one_is_sgd() {
        let cfg_m = OptimizerConfig { style: OptStyle::Momentum, momentum_beta: 1.0, ..Default::default() };
        let cfg_s = OptimizerConfig { style: OptStyle::Sgd, ..Default::default() };
        let mut st_m = OptimizerState::new(&[0.0; 3]);
        let mut st_s = OptimizerState::new(&[0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dm = direction(&mut st_m, &cfg_m, &g).unwrap();
            let ds = direction(&mut st_s, &cfg_s, &g).unwrap();
            assert_eq!(dm, ds);
        }
    }

    #[test]
    fn momentum_geometric_convergence() {
        let beta = 0.3;
        let cfg = OptimizerConfig { style: OptStyle::Momentum, momentum_beta: beta, ..Default::default() };
        let mut st = OptimizerState::new(&[0.0]);
        let grad = [2.0];
        for t in 1..=20u32 {
            let d = direction(&mut st, &cfg, &grad).unwrap();
            // closed form: v_t = g (1 - (1-beta)^t)
            let expect = 2.0 * (1.0 - (1.0 - beta).powi(t as i32));
            assert!((d[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_direction_bounds() {
        let cfg = OptimizerConfig { style: OptStyle::Adam, ..Default::default() };
        let mut st = OptimizerState::new(&[0.0; 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let g: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let d = direction(&mut st, &cfg, &g).unwrap();
            for (di, (&vi, &ui)) in d.iter().zip(st.v.iter().zip(&st.u)) {
                assert!(ui >= 0.0);
                assert!(di.abs() <= vi.abs() / cfg.adam_floor.sqrt() + 1e-12);
            }
        }
        // constant stream: |g| -> 1 (sign-SGD limit)
        let mut st = OptimizerState::new(&[0.0]);
        let mut last = 0.0;
        for _ in 0..10_000 {
            last = direction(&mut st, &cfg, &[-3.7]).unwrap()[0];
        }
        assert!((last.abs() - 1.0).abs() < 1e-3);
        assert!(last < 0.0);
    }

    #[test]
    fn sgd_update_examples() {
        let mut w = vec![1.0];
        sgd_update(&mut w, &[0.5], 0.1).unwrap();
        assert!((w[0] - 0.95).abs() < 1e-15);
        sgd_update(&mut w, &[0.0], 0.1).unwrap();
        assert!((w[0] - 0.95).abs() < 1e-15);
        assert!(sgd_update(&mut w, &[0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn update_d_behavior() {
        let mut st = OptimizerState::new(&[]);
        assert!((update_d(&mut st, 0.5, 0.0, 0.9) - 0.45).abs() < 1e-15);
        st.d = 0.123;
        assert_eq!(update_d(&mut st, 0.75, 0.25, 1.0), 0.5);
        // geometric convergence with exact ratio 1 - beta0
        let beta0 = 0.25;
        st.d = 0.0;
        let target = 2.0;
        let mut err_prev = target;
        for _ in 0..30 {
            update_d(&mut st, target, 0.0, beta0);
            let err = (st.d - target).abs();
            assert!((err / err_prev - (1.0 - beta0)).abs() < 1e-12);
            err_prev = err;
        }
    }

    #[test]
    fn stage_average() {
        let mut st = OptimizerState::new(&[9.0]);
        assert!(matches!(end_stage(&mut st), Err(Error::EmptyStage)));
        accumulate_stage(&mut st, &[0.0]);
        accumulate_stage(&mut st, &[1.0]);
        end_stage(&mut st).unwrap();
        assert_eq!(st.w_bar_prev, vec![0.5]);
        assert_eq!(st.stage_len, 0);
        accumulate_stage(&mut st, &[3.0]);
        end_stage(&mut st).unwrap();
        assert_eq!(st.w_bar_prev, vec![3.0]);
    }

    #[test]
    fn pesg_alpha_dynamics() {
        let cfg = OptimizerConfig::default();
        // equilibrium: c + b_mean - a_mean == alpha == 0
        let mut st = OptimizerState::new(&[1.0]);
        let mut w = vec![1.0];
        let (mut a, mut b) = (0.0, 0.0);
        let ident = |gp: &[f64], _gn: &[f64]| Ok(vec![gp[0]]);
        pesg_step(&mut st, &cfg, &[1.0], &[0.0], ident, &mut w, &mut a, &mut b, 1.0, 0.1).unwrap();
        assert_eq!(st.alpha, 0.0);
        // ascent toward u = 1 when the gap is closed
        let mut st = OptimizerState::new(&[1.0]);
        let ident = |gp: &[f64], _gn: &[f64]| Ok(vec![gp[0]]);
        pesg_step(&mut st, &cfg, &[0.5], &[0.5], ident, &mut w, &mut a, &mut b, 1.0, 0.1).unwrap();
        assert!((st.alpha - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pesg_alpha_stays_nonnegative() {
        let cfg = OptimizerConfig::default();
        let mut st = OptimizerState::new(&[0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut w = vec![0.0];
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..10_000 {
            let pos = [rng.gen_range(-3.0..3.0)];
            let neg = [rng.gen_range(-3.0..3.0)];
            let ident = |gp: &[f64], _gn: &[f64]| Ok(vec![gp[0]]);
            pesg_step(&mut st, &cfg, &pos, &neg, ident, &mut w, &mut a, &mut b, 1.0, 0.05)
                .unwrap();
            assert!(st.alpha >= 0.0);
            assert!(st.alpha.is_finite());
        }
    }

    /// With the dual at its closed-form optimum (c + b_mean - a_mean)_+ the
    /// primal score direction equals the CSH composite gradient at the mean
    /// gap.
    #[test]
    fn pesg_fixed_point_matches_csh() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let pos: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let neg: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = rng.gen_range(-0.5..0.5);
            let b = rng.gen_range(-0.5..0.5);
            let c = rng.gen_range(0.1..2.0);
            let comp = batch_components(&pos, &neg, a, b).unwrap();
            let alpha_star = (c + comp.b_mean - comp.a_mean).max(0.0);
            let (gp, gn, _, _) = pesg_score_grads(&pos, &neg, a, b, alpha_star).unwrap();
            let spec = CompositeLossSpec { kind: CompositeKind::Csh, margin: c, scale: 1.0 };
            let (cp, cn, _, _) =
                composite_grads(&spec, &pos, &neg, a, b, comp.a_mean - comp.b_mean).unwrap();
            for (x, y) in gp.iter().zip(&cp) {
                assert!((x - y).abs() < 1e-10);
            }
            for (x, y) in gn.iter().zip(&cn) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    /// Small-step descent sanity on a fixed batch with exact components.
    #[test]
    fn full_step_decreases_smooth_composite_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for kind in [CompositeKind::Csq, CompositeKind::Cl] {
            let spec = CompositeLossSpec { kind, margin: 1.0, scale: 1.0 };
            for _ in 0..20 {
                // scores are the parameters (identity model)
                let mut pos: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut neg: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut a = rng.gen_range(-0.5..0.5);
                let mut b = rng.gen_range(-0.5..0.5);
                let before = composite_objective(&spec, &pos, &neg, a, b).unwrap();
                let comp = batch_components(&pos, &neg, a, b).unwrap();
                let (gp, gn, ga, gb) =
                    composite_grads(&spec, &pos, &neg, a, b, comp.a_mean - comp.b_mean).unwrap();
                let lr = 1e-4;
                sgd_update(&mut pos, &gp, lr).unwrap();
                sgd_update(&mut neg, &gn, lr).unwrap();
                a -= lr * ga;
                b -= lr * gb;
                let after = composite_objective(&spec, &pos, &neg, a, b).unwrap();
                assert!(after <= before + 1e-12, "{kind:?}: {before} -> {after}");
            }
        }
    }
}

//! Six pairwise surrogate losses over score differences t = s_pos - s_neg.
//!
//! | kind | per-pair loss                                   | params |
//! |------|-------------------------------------------------|--------|
//! | PSQ  | (c - t)^2                                       | c      |
//! | PSH  | max(0, c - t)^2                                 | c      |
//! | PH   | max(0, c - t)                                   | c      |
//! | PL   | log(1 + exp(-s t))                              | s      |
//! | PSM  | 1 / (1 + exp(s t))                              | s      |
//! | PBH  | max(-s(c + t) + c, max(s(t - c), c - t))        | c, s   |
//!
//! The batch loss is the mean over all positive-negative pairs in the
//! mini-batch; PBH is the symmetric barrier hinge used for noisy labels.

use serde::{Deserialize, Serialize};

use super::{log1p_exp, sigmoid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PairwiseKind {
    Psq,
    Psh,
    Ph,
    Pl,
    Psm,
    Pbh,
}

impl PairwiseKind {
    pub const ALL: [PairwiseKind; 6] = [
        PairwiseKind::Psq,
        PairwiseKind::Psh,
        PairwiseKind::Ph,
        PairwiseKind::Pl,
        PairwiseKind::Psm,
        PairwiseKind::Pbh,
    ];

    pub fn uses_margin(self) -> bool {
        matches!(self, PairwiseKind::Psq | PairwiseKind::Psh | PairwiseKind::Ph | PairwiseKind::Pbh)
    }

    pub fn uses_scale(self) -> bool {
        matches!(self, PairwiseKind::Pl | PairwiseKind::Psm | PairwiseKind::Pbh)
    }

    pub fn label(self) -> &'static str {
        match self {
            PairwiseKind::Psq => "PSQ",
            PairwiseKind::Psh => "PSH",
            PairwiseKind::Ph => "PH",
            PairwiseKind::Pl => "PL",
            PairwiseKind::Psm => "PSM",
            PairwiseKind::Pbh => "PBH",
        }
    }
}

/// A pairwise loss kind plus its margin/scale hyper-parameters.
///
/// A parameter unused by the given kind is carried but ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseLossSpec {
    pub kind: PairwiseKind,
    #[serde(default = "default_one")]
    pub margin: f64,
    #[serde(default = "default_one")]
    pub scale: f64,
}

fn default_one() -> f64 {
    1.0
}

impl PairwiseLossSpec {
    pub fn new(kind: PairwiseKind, margin: f64, scale: f64) -> Result<Self> {
        if kind.uses_margin() && margin <= 0.0 {
            return Err(Error::BadParams(format!("margin must be > 0, got {margin}")));
        }
        if kind.uses_scale() && scale <= 0.0 {
            return Err(Error::BadParams(format!("scale must be > 0, got {scale}")));
        }
        Ok(Self { kind, margin, scale })
    }

    /// Per-pair loss at score difference `t`.
    pub fn loss(&self, t: f64) -> f64 {
        let c = self.margin;
        let s = self.scale;
        match self.kind {
            PairwiseKind::Psq => (c - t) * (c - t),
            PairwiseKind::Psh => {
                let h = (c - t).max(0.0);
                h * h
            }
            PairwiseKind::Ph => (c - t).max(0.0),
            PairwiseKind::Pl => log1p_exp(-s * t),
            PairwiseKind::Psm => sigmoid(-s * t),
            PairwiseKind::Pbh => (-s * (c + t) + c).max((s * (t - c)).max(c - t)),
        }
    }

    /// Derivative of the per-pair loss with respect to `t`.
    ///
    /// At hinge kinks the flat-side subgradient 0 is returned; at PBH branch
    /// ties the first branch in the formula order wins.
    pub fn grad(&self, t: f64) -> f64 {
        let c = self.margin;
        let s = self.scale;
        match self.kind {
            PairwiseKind::Psq => -2.0 * (c - t),
            PairwiseKind::Psh => -2.0 * (c - t).max(0.0),
            PairwiseKind::Ph => {
                if t < c {
                    -1.0
                } else {
                    0.0
                }
            }
            PairwiseKind::Pl => -s * sigmoid(-s * t),
            PairwiseKind::Psm => {
                let p = sigmoid(s * t);
                -s * p * (1.0 - p)
            }
            PairwiseKind::Pbh => {
                let b1 = -s * (c + t) + c;
                let b2 = s * (t - c);
                let b3 = c - t;
                let m = b1.max(b2.max(b3));
                if b1 >= m {
                    -s
                } else if b2 >= m {
                    s
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Mean of the per-pair loss over all |B+| * |B-| pairs.
pub fn batch_pairwise_loss(spec: &PairwiseLossSpec, pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass);
    }
    let mut total = 0.0;
    for &p in pos {
        for &n in neg {
            total += spec.loss(p - n);
        }
    }
    Ok(total / (pos.len() * neg.len()) as f64)
}

/// Exact gradient of [`batch_pairwise_loss`] with respect to the scores.
pub fn batch_pairwise_score_grad(
    spec: &PairwiseLossSpec,
    pos: &[f64],
    neg: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass);
    }
    let scale = 1.0 / (pos.len() * neg.len()) as f64;
    let mut grad_pos = vec![0.0; pos.len()];
    let mut grad_neg = vec![0.0; neg.len()];
    for (i, &p) in pos.iter().enumerate() {
        for (j, &n) in neg.iter().enumerate() {
            let g = spec.grad(p - n) * scale;
            grad_pos[i] += g;
            grad_neg[j] -= g;
        }
    }
    Ok((grad_pos, grad_neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auroc_from_scores;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: PairwiseKind, c: f64, s: f64) -> PairwiseLossSpec {
        PairwiseLossSpec { kind, margin: c, scale: s }
    }

    #[test]
    fn table_values() {
        assert!((spec(PairwiseKind::Psq, 1.0, 1.0).loss(0.3) - 0.49).abs() < 1e-12);
        assert!((spec(PairwiseKind::Pl, 1.0, 1.0).loss(0.0) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(spec(PairwiseKind::Pbh, 1.0, 1.0).loss(0.0), 1.0);
        assert_eq!(spec(PairwiseKind::Psh, 1.0, 1.0).loss(1.5), 0.0);
    }

    #[test]
    fn grad_values() {
        assert!((spec(PairwiseKind::Psq, 1.0, 1.0).grad(0.3) + 1.4).abs() < 1e-12);
        assert_eq!(spec(PairwiseKind::Ph, 1.0, 1.0).grad(2.0), 0.0);
        assert!((spec(PairwiseKind::Psm, 1.0, 1.0).grad(0.0) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn stable_for_large_arguments() {
        let pl = spec(PairwiseKind::Pl, 1.0, 10.0);
        let psm = spec(PairwiseKind::Psm, 1.0, 10.0);
        for &t in &[-70.0, 70.0] {
            assert!(pl.loss(t).is_finite());
            assert!(pl.grad(t).is_finite());
            assert!(psm.loss(t).is_finite());
            assert!(psm.grad(t).is_finite());
        }
        // log(1+e^700) == 700 up to rounding
        assert!((pl.loss(-70.0) - 700.0).abs() < 1e-9);
    }

    /// Central finite difference oracle for d loss / d t.
    fn fd_grad(spec: &PairwiseLossSpec, t: f64, h: f64) -> f64 {
        (spec.loss(t + h) - spec.loss(t - h)) / (2.0 * h)
    }

    fn near_kink(spec: &PairwiseLossSpec, t: f64) -> bool {
        let c = spec.margin;
        let s = spec.scale;
        match spec.kind {
            PairwiseKind::Psh | PairwiseKind::Ph => (t - c).abs() < 1e-3,
            PairwiseKind::Pbh => {
                let b1 = -s * (c + t) + c;
                let b2 = s * (t - c);
                let b3 = c - t;
                (b1 - b2).abs() < 1e-3 || (b1 - b3).abs() < 1e-3 || (b2 - b3).abs() < 1e-3
            }
            _ => false,
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            spec(PairwiseKind::Psq, 1.0, 1.0),
            spec(PairwiseKind::Psh, 0.5, 1.0),
            spec(PairwiseKind::Ph, 1.0, 1.0),
            spec(PairwiseKind::Pl, 1.0, 2.0),
            spec(PairwiseKind::Psm, 1.0, 3.0),
            spec(PairwiseKind::Pbh, 1.0, 2.0),
        ];
        for sp in &specs {
            let mut checked = 0;
            while checked < 200 {
                let t = rng.gen_range(-5.0..5.0);
                if near_kink(sp, t) {
                    continue;
                }
                let fd = fd_grad(sp, t, 1e-6);
                let g = sp.grad(t);
                let denom = fd.abs().max(1.0);
                assert!(
                    (g - fd).abs() / denom < 1e-6,
                    "{:?} at t={t}: {g} vs fd {fd}",
                    sp.kind
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn nonnegative_and_monotone_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in PairwiseKind::ALL {
            let sp = spec(kind, 1.0, 2.0);
            for _ in 0..500 {
                let t = rng.gen_range(-10.0..10.0);
                assert!(sp.loss(t) >= 0.0, "{kind:?} loss at {t}");
                match kind {
                    PairwiseKind::Ph | PairwiseKind::Pl | PairwiseKind::Psm => {
                        assert!(sp.grad(t) <= 0.0)
                    }
                    PairwiseKind::Psq | PairwiseKind::Psh => {
                        if t <= sp.margin {
                            assert!(sp.grad(t) <= 0.0)
                        }
                    }
                    PairwiseKind::Pbh => {}
                }
            }
        }
    }

    #[test]
    fn batch_loss_examples() {
        let sp = spec(PairwiseKind::Psq, 1.0, 1.0);
        let v = batch_pairwise_loss(&sp, &[0.8, 0.2], &[0.5]).unwrap();
        assert!((v - 1.09).abs() < 1e-12);
        // brute-forced over the 4 pairs: (0.25+0.25+2.25+0.25)/4
        let v = batch_pairwise_loss(&sp, &[1.0, 0.0], &[0.5, -0.5]).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
        // hinge inactive when every t >= c
        for kind in [PairwiseKind::Psh, PairwiseKind::Ph] {
            let sp = spec(kind, 1.0, 1.0);
            assert_eq!(batch_pairwise_loss(&sp, &[2.0, 3.0], &[0.0, 1.0]).unwrap(), 0.0);
        }
        assert!(matches!(
            batch_pairwise_loss(&sp, &[], &[1.0]),
            Err(Error::EmptyClass)
        ));
    }

    #[test]
    fn score_grad_example_and_symmetry() {
        let sp = spec(PairwiseKind::Psq, 1.0, 1.0);
        let (gp, gn) = batch_pairwise_score_grad(&sp, &[0.8, 0.2], &[0.5]).unwrap();
        assert!((gp[0] + 0.7).abs() < 1e-12);
        assert!((gp[1] + 1.3).abs() < 1e-12);
        assert!((gn[0] - 2.0).abs() < 1e-12);
        // opposite signs telescope
        let total: f64 = gp.iter().sum::<f64>() + gn.iter().sum::<f64>();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn score_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in PairwiseKind::ALL {
            let sp = spec(kind, 0.7, 1.5);
            let pos: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let neg: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (gp, gn) = batch_pairwise_score_grad(&sp, &pos, &neg).unwrap();
            let h = 1e-6;
            for i in 0..pos.len() {
                let mut up = pos.clone();
                let mut dn = pos.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (batch_pairwise_loss(&sp, &up, &neg).unwrap()
                    - batch_pairwise_loss(&sp, &dn, &neg).unwrap())
                    / (2.0 * h);
                assert!((gp[i] - fd).abs() / fd.abs().max(1.0) < 1e-6, "{kind:?}");
            }
            for j in 0..neg.len() {
                let mut up = neg.clone();
                let mut dn = neg.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (batch_pairwise_loss(&sp, &pos, &up).unwrap()
                    - batch_pairwise_loss(&sp, &pos, &dn).unwrap())
                    / (2.0 * h);
                assert!((gn[j] - fd).abs() / fd.abs().max(1.0) < 1e-6, "{kind:?}");
            }
        }
    }

    #[test]
    fn unit_hinge_bounds_ranking_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sp = spec(PairwiseKind::Ph, 1.0, 1.0);
        for _ in 0..50 {
            let pos: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let neg: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let auc = auroc_from_scores(&pos, &neg).unwrap();
            let hinge = batch_pairwise_loss(&sp, &pos, &neg).unwrap();
            assert!(1.0 - auc <= hinge + 1e-12);
        }
    }
}

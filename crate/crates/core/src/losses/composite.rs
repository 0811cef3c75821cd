//! Four composite losses: within-class variance terms around the auxiliary
//! centers (a, b) plus an outer surrogate of the class-mean score gap.
//!
//! With d = mean(pos scores) - mean(neg scores), the outer term is
//!
//! | kind | outer surrogate        | params |
//! |------|------------------------|--------|
//! | CSQ  | (c - d)^2 / 2          | c      |
//! | CSH  | max(0, c - d)^2 / 2    | c      |
//! | CH   | max(0, c - d)          | c      |
//! | CL   | log(1 + exp(-s d))     | s      |
//!
//! CSH is the min-max margin (AUC-M) objective in composite form.

use serde::{Deserialize, Serialize};

use super::{log1p_exp, sigmoid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CompositeKind {
    Csq,
    Csh,
    Ch,
    Cl,
}

impl CompositeKind {
    pub const ALL: [CompositeKind; 4] =
        [CompositeKind::Csq, CompositeKind::Csh, CompositeKind::Ch, CompositeKind::Cl];

    pub fn uses_margin(self) -> bool {
        !matches!(self, CompositeKind::Cl)
    }

    pub fn uses_scale(self) -> bool {
        matches!(self, CompositeKind::Cl)
    }

    pub fn label(self) -> &'static str {
        match self {
            CompositeKind::Csq => "CSQ",
            CompositeKind::Csh => "CSH",
            CompositeKind::Ch => "CH",
            CompositeKind::Cl => "CL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLossSpec {
    pub kind: CompositeKind,
    #[serde(default = "default_one")]
    pub margin: f64,
    #[serde(default = "default_one")]
    pub scale: f64,
}

fn default_one() -> f64 {
    1.0
}

impl CompositeLossSpec {
    pub fn new(kind: CompositeKind, margin: f64, scale: f64) -> Result<Self> {
        if kind.uses_margin() && margin <= 0.0 {
            return Err(Error::BadParams(format!("margin must be > 0, got {margin}")));
        }
        if kind.uses_scale() && scale <= 0.0 {
            return Err(Error::BadParams(format!("scale must be > 0, got {scale}")));
        }
        Ok(Self { kind, margin, scale })
    }

    /// Outer surrogate value at mean-gap `d`.
    pub fn surrogate_value(&self, d: f64) -> f64 {
        let c = self.margin;
        let s = self.scale;
        match self.kind {
            CompositeKind::Csq => 0.5 * (c - d) * (c - d),
            CompositeKind::Csh => {
                let h = (c - d).max(0.0);
                0.5 * h * h
            }
            CompositeKind::Ch => (c - d).max(0.0),
            CompositeKind::Cl => log1p_exp(-s * d),
        }
    }

    /// Derivative of the outer surrogate with respect to `d`.
    pub fn surrogate_grad(&self, d: f64) -> f64 {
        let c = self.margin;
        let s = self.scale;
        match self.kind {
            CompositeKind::Csq => -(c - d),
            CompositeKind::Csh => -(c - d).max(0.0),
            CompositeKind::Ch => {
                if d < c {
                    -1.0
                } else {
                    0.0
                }
            }
            CompositeKind::Cl => -s * sigmoid(-s * d),
        }
    }
}

/// Per-batch building blocks of the composite objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchComponents {
    /// mean_i (s_i - a)^2 over the positive batch
    pub h_plus: f64,
    /// mean_j (s_j - b)^2 over the negative batch
    pub h_minus: f64,
    /// mean positive score
    pub a_mean: f64,
    /// mean negative score
    pub b_mean: f64,
}

pub fn batch_components(pos: &[f64], neg: &[f64], a: f64, b: f64) -> Result<BatchComponents> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass);
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let h_plus = pos.iter().map(|&s| (s - a) * (s - a)).sum::<f64>() / np;
    let h_minus = neg.iter().map(|&s| (s - b) * (s - b)).sum::<f64>() / nn;
    let a_mean = pos.iter().sum::<f64>() / np;
    let b_mean = neg.iter().sum::<f64>() / nn;
    Ok(BatchComponents { h_plus, h_minus, a_mean, b_mean })
}

/// Full composite objective. The outer term always uses the batch means,
/// never the free centers (a, b).
pub fn composite_objective(
    spec: &CompositeLossSpec,
    pos: &[f64],
    neg: &[f64],
    a: f64,
    b: f64,
) -> Result<f64> {
    let comp = batch_components(pos, neg, a, b)?;
    Ok(comp.h_plus + comp.h_minus + spec.surrogate_value(comp.a_mean - comp.b_mean))
}

/// Gradients of the composite objective with respect to scores and (a, b).
///
/// `d` is supplied by the caller so an optimizer can inject its moving-average
/// estimate; passing `d = a_mean - b_mean` yields the exact gradient of
/// [`composite_objective`].
pub fn composite_grads(
    spec: &CompositeLossSpec,
    pos: &[f64],
    neg: &[f64],
    a: f64,
    b: f64,
    d: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass);
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let outer = spec.surrogate_grad(d);
    let grad_pos: Vec<f64> = pos.iter().map(|&s| (2.0 * (s - a) + outer) / np).collect();
    let grad_neg: Vec<f64> = neg.iter().map(|&s| (2.0 * (s - b) - outer) / nn).collect();
    let grad_a = -2.0 * pos.iter().map(|&s| s - a).sum::<f64>() / np;
    let grad_b = -2.0 * neg.iter().map(|&s| s - b).sum::<f64>() / nn;
    Ok((grad_pos, grad_neg, grad_a, grad_b))
}

//! Surrogate losses for AUROC maximization: the pairwise family and the
//! composite family.

pub mod composite;
pub mod pairwise;

/// Numerically stable sigmoid 1/(1+exp(-x)); no overflow for any finite x.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable log(1 + exp(x)).
pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

//! A small fully-connected scorer with rectifier hidden layers, a scalar
//! output head, and the four batch-level output normalizations: sigmoid,
//! l1/l2 score normalization, and batch standardization.
//!
//! All math is in double precision. Gradients are exact reverse-mode,
//! including the batch-coupled Jacobians of the l1/l2/batch-norm heads.

use std::fmt::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadNorm {
    None,
    Sigmoid,
    L1Score,
    L2Score,
    BatchNorm,
}

impl HeadNorm {
    pub const ALL: [HeadNorm; 5] = [
        HeadNorm::None,
        HeadNorm::Sigmoid,
        HeadNorm::L1Score,
        HeadNorm::L2Score,
        HeadNorm::BatchNorm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            HeadNorm::None => "none",
            HeadNorm::Sigmoid => "sigmoid",
            HeadNorm::L1Score => "l1_score",
            HeadNorm::L2Score => "l2_score",
            HeadNorm::BatchNorm => "batch_norm",
        }
    }

    /// Whether the head keeps |score| at or below 1, which decides the
    /// margin grid used during tuning.
    pub fn bounds_output(self) -> bool {
        !matches!(self, HeadNorm::None | HeadNorm::BatchNorm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum HeadAux {
    Plain,
    L1 { norm: f64 },
    L2 { norm: f64 },
    BatchNorm { var: f64 },
}

/// Intermediates captured by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    batch: usize,
    /// activations entering each layer; `acts[0]` is the input batch
    acts: Vec<Vec<f64>>,
    raw: Vec<f64>,
    z: Vec<f64>,
    aux: HeadAux,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    dims: Vec<usize>,
    /// per layer, out x in, row-major
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    pub head: HeadNorm,
    bn_running_mean: f64,
    bn_running_var: f64,
    bn_epsilon: f64,
    bn_momentum: f64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(dims: &[usize], head: HeadNorm, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::BadArchitecture("need at least input and output dims".into()));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::BadArchitecture(format!(
                "output dim must be 1, got {}",
                dims.last().unwrap()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::BadArchitecture("zero-width layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-lim..lim)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
            head,
            bn_running_mean: 0.0,
            bn_running_var: 1.0,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_params(&self) -> usize {
        (0..self.dims.len() - 1).map(|l| self.dims[l] * self.dims[l + 1] + self.dims[l + 1]).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch { expected: self.n_params(), got: flat.len() });
        }
        let mut off = 0;
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Raw (pre-head) scores without touching any state; used for evaluation,
    /// where AUROC is invariant to the monotone heads.
    pub fn raw_scores(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let acts = self.run_stack(x, batch)?;
        Ok(acts.last().unwrap().clone())
    }

    fn run_stack(&self, x: &[f64], batch: usize) -> Result<Vec<Vec<f64>>> {
        if batch == 0 || x.len() != batch * self.dims[0] {
            return Err(Error::ShapeMismatch { expected: batch * self.dims[0], got: x.len() });
        }
        let n_layers = self.weights.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let prev = &acts[l];
            let mut next = vec![0.0; batch * dout];
            for i in 0..batch {
                for o in 0..dout {
                    let row = &self.weights[l][o * din..(o + 1) * din];
                    let mut acc = self.biases[l][o];
                    for (w, a) in row.iter().zip(&prev[i * din..(i + 1) * din]) {
                        acc += w * a;
                    }
                    // rectifier on hidden layers, linear output
                    next[i * dout + o] = if l + 1 < n_layers { acc.max(0.0) } else { acc };
                }
            }
            acts.push(next);
        }
        Ok(acts)
    }

    /// Forward pass of a batch (row-major, `batch` x input_dim), applying the
    /// output head over the whole batch. Train mode updates the batch-norm
    /// running statistics.
    pub fn forward(&mut self, x: &[f64], batch: usize, mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        let acts = self.run_stack(x, batch)?;
        let raw = acts.last().unwrap().clone();
        let n = batch as f64;
        let (z, aux) = match self.head {
            HeadNorm::None => (raw.clone(), HeadAux::Plain),
            HeadNorm::Sigmoid => (
                raw.iter().map(|&r| crate::losses::sigmoid(r)).collect(),
                HeadAux::Plain,
            ),
            HeadNorm::L1Score => {
                let norm: f64 = raw.iter().map(|r| r.abs()).sum();
                if norm < DEGENERATE_NORM {
                    return Err(Error::DegenerateBatch);
                }
                (raw.iter().map(|&r| r / norm).collect(), HeadAux::L1 { norm })
            }
            HeadNorm::L2Score => {
                let norm = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
                if norm < DEGENERATE_NORM {
                    return Err(Error::DegenerateBatch);
                }
                (raw.iter().map(|&r| r / norm).collect(), HeadAux::L2 { norm })
            }
            HeadNorm::BatchNorm => match mode {
                Mode::Train => {
                    let mean = raw.iter().sum::<f64>() / n;
                    let var = raw.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + self.bn_epsilon).sqrt();
                    let m = self.bn_momentum;
                    self.bn_running_mean = (1.0 - m) * self.bn_running_mean + m * mean;
                    self.bn_running_var = (1.0 - m) * self.bn_running_var + m * var;
                    (
                        raw.iter().map(|&r| (r - mean) * inv).collect(),
                        HeadAux::BatchNorm { var },
                    )
                }
                Mode::Eval => {
                    let (mean, var) = (self.bn_running_mean, self.bn_running_var);
                    let inv = 1.0 / (var + self.bn_epsilon).sqrt();
                    (
                        raw.iter().map(|&r| (r - mean) * inv).collect(),
                        HeadAux::BatchNorm { var },
                    )
                }
            },
        };
        let cache = ForwardCache { mode, batch, acts, raw, z: z.clone(), aux };
        Ok((z, cache))
    }

    /// Pull `dl_dz` back through the head Jacobian and the layer stack.
    /// Returns the flat parameter gradient in [`Mlp::params_flat`] layout.
    pub fn backward(&self, cache: &ForwardCache, dl_dz: &[f64]) -> Result<Vec<f64>> {
        let n_layers = self.weights.len();
        if cache.acts.len() != n_layers + 1
            || cache.acts[0].len() != cache.batch * self.dims[0]
            || cache.raw.len() != cache.batch
        {
            return Err(Error::CacheMismatch);
        }
        if dl_dz.len() != cache.batch {
            return Err(Error::ShapeMismatch { expected: cache.batch, got: dl_dz.len() });
        }
        let n = cache.batch as f64;
        let dl_dr: Vec<f64> = match (&self.head, &cache.aux) {
            (HeadNorm::None, HeadAux::Plain) => dl_dz.to_vec(),
            (HeadNorm::Sigmoid, HeadAux::Plain) => {
                dl_dz.iter().zip(&cache.z).map(|(&g, &z)| g * z * (1.0 - z)).collect()
            }
            (HeadNorm::L1Score, HeadAux::L1 { norm }) => {
                let dot: f64 = dl_dz.iter().zip(&cache.raw).map(|(&g, &r)| g * r).sum();
                dl_dz
                    .iter()
                    .zip(&cache.raw)
                    .map(|(&g, &r)| g / norm - r.signum() * dot / (norm * norm))
                    .collect()
            }
            (HeadNorm::L2Score, HeadAux::L2 { norm }) => {
                // (I - u u^T) / ||r|| with u = z
                let dot: f64 = dl_dz.iter().zip(&cache.z).map(|(&g, &u)| g * u).sum();
                dl_dz.iter().zip(&cache.z).map(|(&g, &u)| (g - u * dot) / norm).collect()
            }
            (HeadNorm::BatchNorm, HeadAux::BatchNorm { var }) => {
                let inv = 1.0 / (var + self.bn_epsilon).sqrt();
                match cache.mode {
                    Mode::Train => {
                        let g_mean = dl_dz.iter().sum::<f64>() / n;
                        let gz_mean =
                            dl_dz.iter().zip(&cache.z).map(|(&g, &z)| g * z).sum::<f64>() / n;
                        dl_dz
                            .iter()
                            .zip(&cache.z)
                            .map(|(&g, &z)| inv * (g - g_mean - z * gz_mean))
                            .collect()
                    }
                    // running statistics are constants at eval time
                    Mode::Eval => dl_dz.iter().map(|&g| g * inv).collect(),
                }
            }
            _ => return Err(Error::CacheMismatch),
        };

        let mut grads = vec![0.0; self.n_params()];
        // per-layer flat offsets
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.dims[l] * self.dims[l + 1] + self.dims[l + 1];
        }

        let mut delta = dl_dr; // batch x dims[last]
        for l in (0..n_layers).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let a_in = &cache.acts[l];
            let base = offsets[l];
            for i in 0..cache.batch {
                for o in 0..dout {
                    let d = delta[i * dout + o];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = base + o * din;
                    for k in 0..din {
                        grads[wrow + k] += d * a_in[i * din + k];
                    }
                    grads[base + din * dout + o] += d;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; cache.batch * din];
                for i in 0..cache.batch {
                    for o in 0..dout {
                        let d = delta[i * dout + o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &self.weights[l][o * din..(o + 1) * din];
                        for k in 0..din {
                            prev[i * din + k] += d * row[k];
                        }
                    }
                }
                // rectifier mask of the layer below
                for (p, &a) in prev.iter_mut().zip(a_in.iter()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    /// Serialize the model as a versioned textual checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "aucbench-mlp v1").unwrap();
        write!(out, "dims").unwrap();
        for d in &self.dims {
            write!(out, " {d}").unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "head {}", self.head.label()).unwrap();
        writeln!(
            out,
            "bn {:?} {:?} {:?} {:?}",
            self.bn_running_mean, self.bn_running_var, self.bn_epsilon, self.bn_momentum
        )
        .unwrap();
        let flat = self.params_flat();
        writeln!(out, "params {}", flat.len()).unwrap();
        for v in flat {
            writeln!(out, "{v:?}").unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if lines.next() != Some("aucbench-mlp v1") {
            return Err(bad("unknown header"));
        }
        let dims_line = lines.next().ok_or_else(|| bad("missing dims"))?;
        let mut it = dims_line.split_whitespace();
        if it.next() != Some("dims") {
            return Err(bad("missing dims"));
        }
        let dims: Vec<usize> =
            it.map(|t| t.parse().map_err(|_| bad("bad dim"))).collect::<Result<_>>()?;
        let head_line = lines.next().ok_or_else(|| bad("missing head"))?;
        let head = match head_line.strip_prefix("head ") {
            Some("none") => HeadNorm::None,
            Some("sigmoid") => HeadNorm::Sigmoid,
            Some("l1_score") => HeadNorm::L1Score,
            Some("l2_score") => HeadNorm::L2Score,
            Some("batch_norm") => HeadNorm::BatchNorm,
            _ => return Err(bad("unknown head")),
        };
        let bn_line = lines.next().ok_or_else(|| bad("missing bn line"))?;
        let bn: Vec<f64> = bn_line
            .strip_prefix("bn ")
            .ok_or_else(|| bad("missing bn line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad bn value")))
            .collect::<Result<_>>()?;
        if bn.len() != 4 {
            return Err(bad("bn line needs 4 values"));
        }
        let count_line = lines.next().ok_or_else(|| bad("missing params count"))?;
        let count: usize = count_line
            .strip_prefix("params ")
            .ok_or_else(|| bad("missing params count"))?
            .parse()
            .map_err(|_| bad("bad params count"))?;
        let flat: Vec<f64> = lines
            .map(|l| l.trim().parse().map_err(|_| bad("bad parameter value")))
            .collect::<Result<_>>()?;
        if flat.len() != count {
            return Err(bad("parameter count mismatch"));
        }
        let mut model = Mlp::init(&dims, head, 0)?;
        model.bn_running_mean = bn[0];
        model.bn_running_var = bn[1];
        model.bn_epsilon = bn[2];
        model.bn_momentum = bn[3];
        model.set_params(&flat)?;
        Ok(model)
    }
}

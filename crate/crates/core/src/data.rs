//! Dataset containers, CSV ingestion, synthetic imbalanced data, stratified
//! k-fold splitting, and the positive-rate mini-batch sampler.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An in-memory feature matrix with +1/-1 labels. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// row-major, n x dim
    x: Vec<f64>,
    dim: usize,
    y: Vec<i8>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: Vec<f64>, dim: usize, y: Vec<i8>, name: impl Into<String>) -> Result<Self> {
        if dim == 0 || x.len() != y.len() * dim {
            return Err(Error::ShapeMismatch { expected: y.len() * dim, got: x.len() });
        }
        if y.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::BadParams("labels must be +1 or -1".into()));
        }
        let ds = Self { x, dim, y, name: name.into() };
        if ds.positive_indices().is_empty() || ds.negative_indices().is_empty() {
            return Err(Error::SingleClass);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self, i: usize) -> i8 {
        self.y[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.y[i] == 1).collect()
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.y[i] == -1).collect()
    }

    /// N+ / n
    pub fn positive_ratio(&self) -> f64 {
        self.positive_indices().len() as f64 / self.len() as f64
    }

    /// Copy the given rows into a new dataset.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset::new(x, self.dim, y, name)
    }

    /// Row-major feature block for a set of rows (batch assembly).
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }
}

/// Load a CSV with a header row. The named label column must contain one of
/// the encodings {+1, -1} or {1, 0}; every other column becomes a feature in
/// file order.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Config(format!("label column {label_column:?} not found")))?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::Config("csv has no feature columns".into()));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: row_idx,
                column: headers.get(col).unwrap_or("?").to_string(),
            })?;
            if col == label_idx {
                let label = if value == 1.0 {
                    1
                } else if value == 0.0 || value == -1.0 {
                    -1
                } else {
                    return Err(Error::Parse {
                        row: row_idx,
                        column: headers.get(col).unwrap_or("?").to_string(),
                    });
                };
                y.push(label);
            } else {
                x.push(value);
            }
        }
        if record.len() != headers.len() {
            return Err(Error::Parse { row: row_idx, column: "<row length>".into() });
        }
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(x, dim, y, name)
}

/// Uniformly drop positives (seeded, without replacement) until the positive
/// ratio lands within one sample of `target_pr`. Negatives are kept.
pub fn make_imbalanced(ds: &Dataset, target_pr: f64, seed: u64) -> Result<Dataset> {
    let current = ds.positive_ratio();
    if !(0.0..1.0).contains(&target_pr) || target_pr >= current {
        return Err(Error::TargetTooHigh { target: target_pr, current });
    }
    let pos = ds.positive_indices();
    let neg = ds.negative_indices();
    // p / (p + n_neg) ~= target
    let keep = ((target_pr * neg.len() as f64 / (1.0 - target_pr)).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, pos.len(), keep.min(pos.len()));
    let mut indices: Vec<usize> = chosen.iter().map(|i| pos[i]).collect();
    indices.extend_from_slice(&neg);
    indices.sort_unstable();
    ds.subset(&indices, format!("{}-pr{target_pr}", ds.name))
}

/// Two unit-variance Gaussian classes separated along the first axis:
/// positives at +separation, negatives at -separation.
pub fn synth_gaussian(n: usize, dim: usize, pr: f64, separation: f64, seed: u64) -> Result<Dataset> {
    if n < 4 || dim < 1 || !(0.0 < pr && pr < 1.0) || !separation.is_finite() {
        return Err(Error::BadParams(format!(
            "synth_gaussian(n={n}, dim={dim}, pr={pr}, separation={separation})"
        )));
    }
    let n_pos = ((n as f64 * pr).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (label, center) = if i < n_pos { (1, separation) } else { (-1, -separation) };
        for d in 0..dim {
            let noise: f64 = rng.sample(StandardNormal);
            x.push(if d == 0 { center + noise } else { noise });
        }
        y.push(label);
    }
    // shuffle rows so class blocks are not contiguous
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    for &i in &order {
        xs.extend_from_slice(&x[i * dim..(i + 1) * dim]);
        ys.push(y[i]);
    }
    Dataset::new(xs, dim, ys, format!("synth-n{n}-pr{pr}"))
}

/// Stratified k-fold split: per class, a seeded shuffle dealt round-robin, so
/// fold positive counts differ by at most one. Returns (train, val) index
/// lists per fold.
pub fn kfold_split(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::BadParams(format!("k must be >= 2, got {k}")));
    }
    let mut pos = ds.positive_indices();
    let mut neg = ds.negative_indices();
    if pos.len() < k || neg.len() < k {
        return Err(Error::TooFewSamples { k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &idx) in pos.iter().chain(neg.iter()).enumerate() {
        folds[i % k].push(idx);
    }
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let mut val = folds[f].clone();
        val.sort_unstable();
        let mut train: Vec<usize> =
            folds.iter().enumerate().filter(|&(i, _)| i != f).flat_map(|(_, v)| v.iter().copied()).collect();
        train.sort_unstable();
        out.push((train, val));
    }
    Ok(out)
}

/// Seeded stratified holdout; returns (rest, held_out) index lists.
pub fn stratified_holdout(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::BadParams(format!("holdout fraction {fraction} out of (0,1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest = Vec::new();
    let mut held = Vec::new();
    for mut class in [ds.positive_indices(), ds.negative_indices()] {
        class.shuffle(&mut rng);
        let take = ((class.len() as f64 * fraction).round() as usize).clamp(1, class.len() - 1);
        held.extend_from_slice(&class[..take]);
        rest.extend_from_slice(&class[take..]);
    }
    rest.sort_unstable();
    held.sort_unstable();
    Ok((rest, held))
}

/// Requested positive rate per mini-batch: either the dataset's own mix or an
/// enforced fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spr {
    Origin,
    Rate(f64),
}

impl Serialize for Spr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Spr::Origin => s.serialize_str("origin"),
            Spr::Rate(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Spr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Rate(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "origin" => Ok(Spr::Origin),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown spr {t:?}"))),
            Raw::Rate(r) if 0.0 < r && r < 1.0 => Ok(Spr::Rate(r)),
            Raw::Rate(r) => Err(serde::de::Error::custom(format!("spr {r} out of (0,1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub spr: Spr,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { batch_size: 64, spr: Spr::Origin, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::BadParams("batch_size must be >= 2".into()));
        }
        if let Spr::Rate(r) = self.spr {
            if !(0.0 < r && r < 1.0) {
                return Err(Error::BadParams(format!("spr {r} out of (0,1)")));
            }
        }
        Ok(())
    }
}

/// Draws mini-batches from a fixed index pool, fresh each iteration (with
/// replacement across iterations). Owns its generator state.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    pos_pool: Vec<usize>,
    neg_pool: Vec<usize>,
    batch_size: usize,
    spr: Spr,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    /// `pool` restricts sampling to a subset of the dataset (e.g. a CV
    /// training split).
    pub fn new(ds: &Dataset, pool: &[usize], cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let pos_pool: Vec<usize> = pool.iter().copied().filter(|&i| ds.label(i) == 1).collect();
        let neg_pool: Vec<usize> = pool.iter().copied().filter(|&i| ds.label(i) == -1).collect();
        if pos_pool.is_empty() || neg_pool.is_empty() {
            return Err(Error::EmptyClass);
        }
        Ok(Self {
            pos_pool,
            neg_pool,
            batch_size: cfg.batch_size,
            spr: cfg.spr,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    /// Positive quota for an enforced rate: round-to-nearest, clamped so both
    /// classes always appear.
    pub fn positive_quota(batch_size: usize, rate: f64) -> usize {
        ((rate * batch_size as f64).round() as usize).clamp(1, batch_size - 1)
    }

    fn draw(rng: &mut ChaCha8Rng, pool: &[usize], amount: usize) -> Vec<usize> {
        if pool.len() >= amount {
            rand::seq::index::sample(rng, pool.len(), amount).iter().map(|i| pool[i]).collect()
        } else {
            // pool smaller than the quota: draw with replacement
            (0..amount).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
        }
    }

    /// Sample the next mini-batch; returns (positive indices, negative
    /// indices), both non-empty.
    pub fn next_batch(&mut self) -> (Vec<usize>, Vec<usize>) {
        match self.spr {
            Spr::Rate(r) => {
                let n_pos = Self::positive_quota(self.batch_size, r);
                let pos = Self::draw(&mut self.rng, &self.pos_pool, n_pos);
                let neg = Self::draw(&mut self.rng, &self.neg_pool, self.batch_size - n_pos);
                (pos, neg)
            }
            Spr::Origin => {
                // unstratified draw; repair if a class is missing (one
                // resample, then a forced swap)
                for attempt in 0..2 {
                    let all: Vec<usize> = self
                        .pos_pool
                        .iter()
                        .chain(self.neg_pool.iter())
                        .copied()
                        .collect();
                    let mut batch = Self::draw(&mut self.rng, &all, self.batch_size);
                    let pos_set: std::collections::HashSet<usize> =
                        self.pos_pool.iter().copied().collect();
                    let has_pos = batch.iter().any(|i| pos_set.contains(i));
                    let has_neg = batch.iter().any(|i| !pos_set.contains(i));
                    if !(has_pos && has_neg) && attempt == 0 {
                        continue;
                    }
                    if !(has_pos && has_neg) {
                        let missing_pool =
                            if has_pos { &self.neg_pool } else { &self.pos_pool };
                        let victim = self.rng.gen_range(0..batch.len());
                        batch[victim] = missing_pool[self.rng.gen_range(0..missing_pool.len())];
                    }
                    let (pos, neg): (Vec<usize>, Vec<usize>) =
                        batch.into_iter().partition(|i| pos_set.contains(i));
                    return (pos, neg);
                }
                unreachable!("loop always returns on the second attempt")
            }
        }
    }
}

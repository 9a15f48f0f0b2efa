use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_bins, grow_tree, AdditiveModel, DesignMatrix, ShapeFunction};
use crate::{Error, Result};

pub const MIN_TRAIN_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_rounds: usize,
    pub early_stopping_patience: usize,
    pub max_bins: usize,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub outer_bags: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_rounds: 5000,
            early_stopping_patience: 50,
            max_bins: 256,
            max_leaves: 3,
            min_samples_leaf: 2,
            outer_bags: 8,
            validation_fraction: 0.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_bins < 2 || self.max_bins > u16::MAX as usize {
            return bad("max_bins must be in [2, 65535]");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be at least 2");
        }
        if self.outer_bags == 0 {
            return bad("outer_bags must be at least 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagReport {
    pub rounds: usize,
    pub best_round: usize,
    pub best_validation_rmse: Option<f64>,
    /// Weighted in-bag RMSE after every round.
    pub train_rmse: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub bags: Vec<BagReport>,
    pub warnings: Vec<String>,
}

pub fn fit(matrix: &DesignMatrix, target: &[f64], config: &TrainConfig) -> Result<AdditiveModel> {
    fit_with_report(matrix, target, config).map(|(m, _)| m)
}

struct Binned {
    /// Column-major bin indices.
    bins: Vec<Vec<u16>>,
    n_bins: Vec<usize>,
}

struct BagResult {
    shapes: Vec<Vec<f64>>,
    report: BagReport,
}

pub fn fit_with_report(
    matrix: &DesignMatrix,
    target: &[f64],
    config: &TrainConfig,
) -> Result<(AdditiveModel, FitReport)> {
    config.validate()?;
    let n = matrix.n_rows();
    if n != target.len() {
        return Err(Error::InvalidInput(format!(
            "{n} rows but {} target values",
            target.len()
        )));
    }
    if n < MIN_TRAIN_ROWS {
        return Err(Error::InsufficientSupport(format!(
            "training needs at least {MIN_TRAIN_ROWS} rows, got {n}"
        )));
    }
    if let Some(y) = target.iter().find(|y| !(y.is_finite() && **y > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "target values must be finite and positive, found {y}"
        )));
    }
    for (i, row) in matrix.rows.iter().enumerate() {
        if row.len() != matrix.n_cols() {
            return Err(Error::InvalidInput(format!("row {i} has {} columns", row.len())));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "row {i}: missing or non-finite value in `{}`",
                matrix.columns[j].name
            )));
        }
    }

    let schema = build_bins(matrix, config.max_bins);
    let binned = Binned {
        bins: schema
            .features
            .iter()
            .enumerate()
            .map(|(j, fb)| matrix.rows.iter().map(|r| fb.bin(r[j]) as u16).collect())
            .collect(),
        n_bins: schema.features.iter().map(|fb| fb.n_bins()).collect(),
    };

    let mean_y = target.iter().sum::<f64>() / n as f64;
    let mut report = FitReport::default();
    let constant = target.iter().all(|&y| y == target[0]);

    let mut shapes: Vec<Vec<f64>> = binned.n_bins.iter().map(|&k| vec![0.0; k]).collect();
    let mut intercept = if constant { target[0] } else { mean_y };
    if constant {
        let msg = "target has zero variance; every shape is zero".to_string();
        log::warn!("{msg}");
        report.warnings.push(msg);
    } else {
        let bags: Vec<BagResult> = (0..config.outer_bags)
            .into_par_iter()
            .map(|b| train_bag(&binned, target, mean_y, config, b as u64))
            .collect();
        let scale = 1.0 / config.outer_bags as f64;
        for bag in &bags {
            for (acc, s) in shapes.iter_mut().zip(&bag.shapes) {
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v * scale;
                }
            }
        }
        report.bags = bags.into_iter().map(|b| b.report).collect();

        // Centre each shape over the training rows.
        for (j, shape) in shapes.iter_mut().enumerate() {
            let mut counts = vec![0usize; shape.len()];
            for &b in &binned.bins[j] {
                counts[b as usize] += 1;
            }
            let mean: f64 = shape.iter().zip(&counts).map(|(v, &c)| v * c as f64).sum::<f64>() / n as f64;
            for v in shape.iter_mut() {
                *v -= mean;
            }
            intercept += mean;
        }
    }

    let terms = matrix
        .columns
        .iter()
        .zip(schema.features)
        .zip(shapes)
        .map(|((col, bins), values)| ShapeFunction {
            feature: col.name.clone(),
            kind: col.kind.clone(),
            bins,
            values,
        })
        .collect();
    Ok((AdditiveModel::from_parts(intercept, terms, config.clone(), n), report))
}

fn train_bag(data: &Binned, target: &[f64], base: f64, config: &TrainConfig, bag: u64) -> BagResult {
    let n = target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(bag);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = if config.validation_fraction > 0.0 {
        ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (val, fit_rows) = order.split_at(n_val);
    let mut val = val.to_vec();
    val.sort_unstable();

    let mut weight = vec![0u32; n];
    for _ in 0..fit_rows.len() {
        weight[fit_rows[rng.random_range(0..fit_rows.len())]] += 1;
    }
    let in_bag: Vec<(usize, f64)> = (0..n)
        .filter(|&i| weight[i] > 0)
        .map(|i| (i, weight[i] as f64))
        .collect();
    let total_w: f64 = in_bag.iter().map(|&(_, w)| w).sum();

    let mut residual: Vec<f64> = target.iter().map(|y| y - base).collect();
    let mut shapes: Vec<Vec<f64>> = data.n_bins.iter().map(|&k| vec![0.0; k]).collect();
    let val_rmse = |r: &[f64]| (val.iter().map(|&i| r[i] * r[i]).sum::<f64>() / val.len() as f64).sqrt();

    let mut best_shapes = shapes.clone();
    let mut best_val = if val.is_empty() { None } else { Some(val_rmse(&residual)) };
    let mut best_round = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let min_leaf = config.min_samples_leaf as f64;
    let mut sum_r = Vec::new();
    let mut sum_w = Vec::new();
    let mut delta = Vec::new();

    let mut rounds = 0;
    while rounds < config.max_rounds {
        rounds += 1;
        for (j, bins) in data.bins.iter().enumerate() {
            let k = data.n_bins[j];
            if k < 2 {
                continue;
            }
            sum_r.clear();
            sum_r.resize(k, 0.0);
            sum_w.clear();
            sum_w.resize(k, 0.0);
            for &(i, w) in &in_bag {
                let b = bins[i] as usize;
                sum_r[b] += w * residual[i];
                sum_w[b] += w;
            }
            let leaves = grow_tree(&sum_r, &sum_w, config.max_leaves, min_leaf);
            if leaves.len() < 2 {
                continue;
            }
            delta.clear();
            delta.resize(k, 0.0);
            for leaf in &leaves {
                let step = config.learning_rate * leaf.value;
                for d in &mut delta[leaf.start..leaf.end] {
                    *d = step;
                }
            }
            for (s, d) in shapes[j].iter_mut().zip(&delta) {
                *s += d;
            }
            for (r, &b) in residual.iter_mut().zip(bins) {
                *r -= delta[b as usize];
            }
        }
        let sse: f64 = in_bag.iter().map(|&(i, w)| w * residual[i] * residual[i]).sum();
        history.push((sse / total_w).sqrt());

        if let Some(best) = best_val {
            let current = val_rmse(&residual);
            if current < best {
                best_val = Some(current);
                best_shapes.clone_from(&shapes);
                best_round = rounds;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.early_stopping_patience {
                    break;
                }
            }
        }
    }
    if best_val.is_none() {
        best_shapes = shapes;
        best_round = rounds;
    }
    BagResult {
        shapes: best_shapes,
        report: BagReport {
            rounds,
            best_round,
            best_validation_rmse: best_val,
            train_rmse: history,
        },
    }
}

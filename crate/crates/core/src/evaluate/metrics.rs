use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::predict;
use crate::gam::AdditiveModel;
use crate::ingest::FarRecord;
use crate::stats::median;
use crate::{Error, Result};

pub const MIN_SPLIT_RECORDS: usize = 10;

/// Seeded shuffle of `0..n` split into (train, test) index lists, each
/// sorted ascending.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < MIN_SPLIT_RECORDS {
        return Err(Error::InsufficientSupport(format!(
            "train/test split needs at least {MIN_SPLIT_RECORDS} records, got {n}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} is not in (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// Percent.
    pub value: f64,
    pub n: usize,
    /// Points skipped because the actual value was zero.
    pub excluded: usize,
}

/// Mean absolute percentage error, in percent.
pub fn mape(actuals: &[f64], predictions: &[f64]) -> Result<Mape> {
    if actuals.len() != predictions.len() {
        return Err(Error::InvalidInput(format!(
            "{} actuals but {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0;
    let mut excluded = 0;
    for (&y, &p) in actuals.iter().zip(predictions) {
        if y == 0.0 {
            excluded += 1;
            continue;
        }
        sum += ((y - p) / y).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedRatio("MAPE over zero usable points".into()));
    }
    Ok(Mape {
        value: sum / n as f64 * 100.0,
        n,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LewisCategory {
    HighlyAccurate,
    Good,
    Reasonable,
    Inaccurate,
}

/// Forecast-accuracy band of a MAPE in percent; a boundary value belongs to
/// the better band.
pub fn classify_mape(value: f64) -> LewisCategory {
    if value <= 10.0 {
        LewisCategory::HighlyAccurate
    } else if value <= 20.0 {
        LewisCategory::Good
    } else if value <= 50.0 {
        LewisCategory::Reasonable
    } else {
        LewisCategory::Inaccurate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChinCategory {
    Substantial,
    Moderate,
    Weak,
    #[serde(rename = "none")]
    NoEffect,
}

pub fn classify_r2(value: f64) -> ChinCategory {
    if value >= 0.67 {
        ChinCategory::Substantial
    } else if value >= 0.33 {
        ChinCategory::Moderate
    } else if value >= 0.19 {
        ChinCategory::Weak
    } else {
        ChinCategory::NoEffect
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedR2 {
    pub r2: f64,
    pub adjusted: f64,
    pub category: ChinCategory,
}

/// `1 - (1 - R²)(n - 1)/(n - p - 1)` with `p` predictors.
pub fn adjusted_r2(actuals: &[f64], predictions: &[f64], p: usize) -> Result<AdjustedR2> {
    let n = actuals.len();
    if n != predictions.len() {
        return Err(Error::InvalidInput("actuals and predictions differ in length".into()));
    }
    if n <= p + 1 {
        return Err(Error::UndefinedRatio(format!(
            "adjusted R² needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    let mean = actuals.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = actuals.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedRatio("R² of a constant target".into()));
    }
    let ss_res: f64 = actuals.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let adjusted = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64;
    Ok(AdjustedR2 {
        r2,
        adjusted,
        category: classify_r2(adjusted),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub n_test: usize,
    pub n_vehicles: usize,
    /// Median over vehicles of each vehicle's test MAPE, percent.
    pub median_vehicle_mape: f64,
    pub lewis_category: LewisCategory,
    /// MAPE over all test points, percent.
    pub pooled_mape: f64,
    pub r2: f64,
    pub adjusted_r2: f64,
    pub chin_category: ChinCategory,
    /// Predictor count after one-hot expansion.
    pub n_predictors: usize,
    pub excluded_zero_target: usize,
}

/// H1 metrics of a model on held-out records.
pub fn evaluate_model(model: &AdditiveModel, test: &[&FarRecord]) -> Result<ModelMetrics> {
    let mut by_vehicle: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut ys = Vec::new();
    let mut ps = Vec::new();
    for r in test {
        let Some(y) = r.avg_fuel_consumption else { continue };
        let p = predict(model, r)?;
        let e = by_vehicle.entry(r.vehicle_id.as_str()).or_default();
        e.0.push(y);
        e.1.push(p);
        ys.push(y);
        ps.push(p);
    }
    let per_vehicle: Vec<f64> = by_vehicle
        .values()
        .filter_map(|(y, p)| mape(y, p).ok().map(|m| m.value))
        .collect();
    let median_vehicle_mape =
        median(&per_vehicle).ok_or_else(|| Error::InsufficientSupport("no test records with a target".into()))?;
    let pooled = mape(&ys, &ps)?;
    let r2 = adjusted_r2(&ys, &ps, model.terms.len())?;
    Ok(ModelMetrics {
        n_test: ys.len(),
        n_vehicles: by_vehicle.len(),
        median_vehicle_mape,
        lewis_category: classify_mape(median_vehicle_mape),
        pooled_mape: pooled.value,
        r2: r2.r2,
        adjusted_r2: r2.adjusted,
        chin_category: r2.category,
        n_predictors: model.terms.len(),
        excluded_zero_target: pooled.excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, te) = train_test_split(100, 0.9, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (90, 10));
        let (tr1, te1) = train_test_split(10, 0.9, 7).unwrap();
        assert_eq!((tr1.len(), te1.len()), (9, 1));
        assert_eq!(train_test_split(100, 0.9, 7).unwrap(), (tr.clone(), te));
        assert_ne!(train_test_split(100, 0.9, 8).unwrap().0, tr);
        assert!(train_test_split(9, 0.9, 7).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[5.0, 6.0], &[5.0, 6.0]).unwrap().value, 0.0);
        let m = mape(&[10.0, 20.0], &[11.0, 18.0]).unwrap();
        assert!((m.value - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[8.0], &[10.0]).unwrap().value, 25.0);
        let z = mape(&[0.0, 8.0], &[1.0, 10.0]).unwrap();
        assert_eq!((z.value, z.n, z.excluded), (25.0, 1, 1));
        assert!(mape(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn lewis_bands() {
        assert_eq!(classify_mape(8.0), LewisCategory::HighlyAccurate);
        assert_eq!(classify_mape(10.0), LewisCategory::HighlyAccurate);
        assert_eq!(classify_mape(15.0), LewisCategory::Good);
        assert_eq!(classify_mape(20.0), LewisCategory::Good);
        assert_eq!(classify_mape(50.0), LewisCategory::Reasonable);
        assert_eq!(classify_mape(55.0), LewisCategory::Inaccurate);
    }

    #[test]
    fn adjusted_r2_examples() {
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let perfect = adjusted_r2(&y, &y, 5).unwrap();
        assert_eq!((perfect.adjusted, perfect.category), (1.0, ChinCategory::Substantial));
        let mean = vec![49.5; 100];
        let flat = adjusted_r2(&y, &mean, 5).unwrap();
        assert!((flat.adjusted - (1.0 - 99.0 / 94.0)).abs() < 1e-12);
        assert_eq!(classify_r2(0.5), ChinCategory::Moderate);
        assert_eq!(classify_r2(0.2), ChinCategory::Weak);
        assert_eq!(classify_r2(0.1), ChinCategory::NoEffect);
        assert!(matches!(adjusted_r2(&y[..6], &y[..6], 5), Err(Error::UndefinedRatio(_))));
    }
}

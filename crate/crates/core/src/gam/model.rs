use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, FeatureBins, TrainConfig};
use crate::csvfmt::fmt_f64;
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Piecewise-constant contribution of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub feature: String,
    pub kind: ColumnKind,
    pub bins: FeatureBins,
    /// One value per bin.
    pub values: Vec<f64>,
}

impl ShapeFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.bins.bin(x)]
    }

    /// max - min of the shape values.
    pub fn range(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub format_version: u32,
    pub link: String,
    pub intercept: f64,
    pub terms: Vec<ShapeFunction>,
    pub config: TrainConfig,
    pub n_train: usize,
}

impl AdditiveModel {
    pub fn from_parts(intercept: f64, terms: Vec<ShapeFunction>, config: TrainConfig, n_train: usize) -> Self {
        AdditiveModel {
            format_version: MODEL_FORMAT_VERSION,
            link: "identity".into(),
            intercept,
            terms,
            config,
            n_train,
        }
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.feature.as_str())
    }

    pub fn term(&self, name: &str) -> Option<&ShapeFunction> {
        self.terms.iter().find(|t| t.feature == name)
    }

    /// Per-term contributions `f_i(x_i)`, in term order.
    pub fn relevance_row(&self, row: &[f64]) -> Vec<f64> {
        self.terms.iter().zip(row).map(|(t, &x)| t.eval(x)).collect()
    }

    /// Sums contributions onto the intercept in term order, so
    /// `predict_row(x)` is bit-identical to `sum_relevance(relevance_row(x))`.
    pub fn sum_relevance(&self, relevance: &[f64]) -> f64 {
        relevance.iter().fold(self.intercept, |acc, r| acc + r)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.sum_relevance(&self.relevance_row(row))
    }

    pub fn shape_curve(&self, name: &str) -> Result<Vec<Segment>> {
        let term = self
            .term(name)
            .ok_or_else(|| Error::NotFound(format!("feature `{name}` is not in the model")))?;
        Ok(term
            .values
            .iter()
            .enumerate()
            .map(|(b, &value)| {
                let (lo, hi) = term.bins.interval(b);
                Segment { lo, hi, value }
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: AdditiveModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        for t in &model.terms {
            if t.values.len() != t.bins.n_bins() {
                return Err(Error::Format(format!(
                    "term `{}` has {} values for {} bins",
                    t.feature,
                    t.values.len(),
                    t.bins.n_bins()
                )));
            }
        }
        Ok(model)
    }

    /// Long-format shape export: feature, bin_lo, bin_hi, value.
    pub fn write_shapes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "bin_lo", "bin_hi", "value"])?;
        for t in &self.terms {
            for seg in self.shape_curve(&t.feature)? {
                w.write_record([
                    t.feature.as_str(),
                    &fmt_f64(seg.lo),
                    &fmt_f64(seg.hi),
                    &fmt_f64(seg.value),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("shapes.csv", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> AdditiveModel {
        let terms = vec![
            ShapeFunction {
                feature: "a".into(),
                kind: ColumnKind::Numeric,
                bins: FeatureBins { cuts: vec![1.0] },
                values: vec![-0.5, 0.5],
            },
            ShapeFunction {
                feature: "b".into(),
                kind: ColumnKind::Numeric,
                bins: FeatureBins { cuts: vec![] },
                values: vec![0.0],
            },
        ];
        AdditiveModel::from_parts(8.0, terms, TrainConfig::default(), 10)
    }

    #[test]
    fn predict_matches_relevance_sum() {
        let m = toy();
        let row = [2.0, 0.0];
        assert_eq!(m.relevance_row(&row), vec![0.5, 0.0]);
        assert_eq!(m.predict_row(&row), 8.5);
        assert_eq!(m.predict_row(&[0.0, 0.0]), 7.5);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = toy();
        m.intercept = 0.1 + 0.2;
        m.terms[0].values = vec![1.0 / 3.0, -2.0 / 7.0];
        let back = AdditiveModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_feature_is_not_found() {
        assert!(matches!(toy().shape_curve("zzz"), Err(Error::NotFound(_))));
        let curve = toy().shape_curve("a").unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[1].lo, 1.0);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut m = toy();
        m.format_version = 99;
        let json = serde_json::to_string(&m).unwrap();
        assert!(matches!(AdditiveModel::from_json(&json), Err(Error::Format(_))));
    }
}

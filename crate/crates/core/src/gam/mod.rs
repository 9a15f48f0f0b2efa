//! Additive regression model trained by cyclic boosting of single-feature
//! shape functions.
//!
//! The model is `y ≈ β0 + Σ f_i(x_i)` with identity link and no pairwise
//! terms. Each `f_i` is piecewise constant over a histogram bin schema built
//! from training quantiles. Training cycles over features; every visit fits a
//! small regression tree on that feature's bins against the current
//! residuals and adds its learning-rate-scaled leaves to the shape. Bags of
//! bootstrap samples are trained independently, averaged, and each shape is
//! finally centred over the training data with the removed mass folded into
//! the intercept.

mod binning;
mod model;
mod onehot;
mod train;
mod tree;

pub use binning::{build_bins, BinSchema, FeatureBins};
pub use model::{AdditiveModel, Segment, ShapeFunction, MODEL_FORMAT_VERSION};
pub use onehot::{one_hot, OneHotEncoder};
pub use train::{fit, fit_with_report, BagReport, FitReport, TrainConfig};
pub use tree::{grow_tree, Leaf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Indicator of `source == level`.
    OneHot { source: String, level: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn numeric(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ColumnKind::OneHot { .. })
    }
}

/// Row-major feature matrix with named columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(columns: Vec<Column>) -> Self {
        DesignMatrix {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }
}

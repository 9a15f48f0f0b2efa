//! Per-vehicle-day fuel-saving explanations: the drop in a feature's
//! contribution when it moves from its observed value to a reference value,
//! filtered by business rules.

mod reference;
mod rules;

pub use reference::{InlierMedians, ReferenceKind, ReferencePolicy};
pub use rules::{
    apply_business_rules, AboveMedianFuelRule, AuditEntry, BusinessRule, CategoricalRule, DirectionRule,
    MinImpactRule, RuleContext, RuleRegistry, SavingCapRule, DEFAULT_MAX_SAVING_SHARE,
    DEFAULT_MIN_RELATIVE_IMPACT, DEFAULT_RULE_ORDER,
};

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::LimitSet;
use crate::design::model_row;
use crate::gam::{AdditiveModel, ColumnKind};
use crate::ingest::{FarRecord, RouteType};
use crate::{Error, Result};

pub const EXPLANATION_COLUMNS: [&str; 14] = [
    "vehicle_id",
    "date_tx",
    "route_type",
    "vehicle_group",
    "intercept",
    "feature",
    "feature_relevance",
    "feature_value",
    "target_value",
    "avg_fuel_consumption",
    "limit_group",
    "y_pred",
    "y_diff",
    "y_fuel_new",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub vehicle_id: String,
    pub date_tx: NaiveDate,
    pub route_type: RouteType,
    pub vehicle_group: Option<u32>,
    pub intercept: f64,
    pub feature: String,
    /// Contribution `f_i` at the observed value.
    pub feature_relevance: f64,
    pub feature_value: f64,
    /// Reference value the saving is priced against.
    pub target_value: f64,
    pub avg_fuel_consumption: f64,
    pub limit_group: Option<f64>,
    pub y_pred: f64,
    pub y_diff: f64,
    pub y_fuel_new: f64,
}

impl ExplanationRow {
    pub fn day_key(&self) -> (String, NaiveDate) {
        (self.vehicle_id.clone(), self.date_tx)
    }
}

/// `f_i(current) - f_i(x_ref)` for one model term.
pub fn fuel_saving(model: &AdditiveModel, record: &FarRecord, feature: &str, x_ref: f64) -> Result<f64> {
    let idx = model
        .terms
        .iter()
        .position(|t| t.feature == feature)
        .ok_or_else(|| Error::NotFound(format!("feature `{feature}` is not in the model")))?;
    let row = model_row(model, record)?;
    let term = &model.terms[idx];
    Ok(term.eval(row[idx]) - term.eval(x_ref))
}

/// Sets `y_fuel_new = avg_fuel_consumption - Σ y_diff` over each day's rows.
pub fn recompute_fuel_new(rows: &mut [ExplanationRow]) {
    let mut totals: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();
    for r in rows.iter() {
        *totals.entry(r.day_key()).or_default() += r.y_diff;
    }
    for r in rows.iter_mut() {
        r.y_fuel_new = r.avg_fuel_consumption - totals[&r.day_key()];
    }
}

fn explain_record(
    model: &AdditiveModel,
    r: &FarRecord,
    policy: &ReferencePolicy,
    limits: &LimitSet,
) -> Result<Vec<ExplanationRow>> {
    let Some(avg) = r.avg_fuel_consumption else {
        return Ok(Vec::new());
    };
    let x = model_row(model, r)?;
    let relevance = model.relevance_row(&x);
    let y_pred = model.sum_relevance(&relevance);
    let limit_group = limits.for_record(r).map(|l| l.lim_sup);
    let mut rows = Vec::new();
    for ((term, &value), &rel) in model.terms.iter().zip(&x).zip(&relevance) {
        // Indicators are priced against their absent level.
        let x_ref = match term.kind {
            ColumnKind::Numeric => policy.reference_value(&term.feature, r.vehicle_group, r.route_type),
            ColumnKind::OneHot { .. } => 0.0,
        };
        let y_diff = rel - term.eval(x_ref);
        if y_diff > 0.0 {
            rows.push(ExplanationRow {
                vehicle_id: r.vehicle_id.clone(),
                date_tx: r.date,
                route_type: r.route_type,
                vehicle_group: r.vehicle_group,
                intercept: model.intercept,
                feature: term.feature.clone(),
                feature_relevance: rel,
                feature_value: value,
                target_value: x_ref,
                avg_fuel_consumption: avg,
                limit_group,
                y_pred,
                y_diff,
                y_fuel_new: 0.0,
            });
        }
    }
    let total: f64 = rows.iter().map(|row| row.y_diff).sum();
    for row in rows.iter_mut() {
        row.y_fuel_new = avg - total;
    }
    Ok(rows)
}

/// One row per (vehicle, day, model term) with a positive saving.
pub fn generate_daily_explanations(
    model: &AdditiveModel,
    records: &[FarRecord],
    policy: &ReferencePolicy,
    limits: &LimitSet,
) -> Result<Vec<ExplanationRow>> {
    let per_record: Vec<Vec<ExplanationRow>> = records
        .par_iter()
        .map(|r| explain_record(model, r, policy, limits))
        .collect::<Result<_>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

pub fn write_explanations_csv<W: Write>(out: W, rows: &[ExplanationRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(EXPLANATION_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("explanations.csv", e))?;
    Ok(())
}

pub fn read_explanations_csv<R: Read>(input: R) -> Result<Vec<ExplanationRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let expected: Vec<String> = EXPLANATION_COLUMNS.iter().map(|s| s.to_string()).collect();
    crate::ingest::check_header("explanations.csv", &expected, reader.headers()?)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_audit_jsonl<W: Write>(mut out: W, audit: &[AuditEntry]) -> Result<()> {
    for a in audit {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n").map_err(|e| Error::io("audit.jsonl", e))?;
    }
    Ok(())
}

pub fn read_audit_jsonl<R: BufRead>(input: R) -> Result<Vec<AuditEntry>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("audit.jsonl", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

//! Post-hoc filters on explanation rows. Each rule is a named strategy; a
//! chain is assembled from the registry by id, in configured order.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{recompute_fuel_new, ExplanationRow, InlierMedians};
use crate::ingest::{FeatureRegistry, ImpactType};
use crate::{Error, Result};

pub const DEFAULT_RULE_ORDER: [&str; 5] = ["BR1", "BR3", "BR4", "BR2", "BR5"];
pub const DEFAULT_MIN_RELATIVE_IMPACT: f64 = 0.01;
pub const DEFAULT_MAX_SAVING_SHARE: f64 = 0.8;

/// One dropped row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub rule_id: String,
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub feature: String,
    pub values: BTreeMap<String, f64>,
}

pub struct RuleContext<'a> {
    pub registry: &'a FeatureRegistry,
    pub medians: &'a InlierMedians,
    /// Indicator columns of categorical attributes.
    pub categorical: &'a BTreeSet<String>,
    pub min_relative_impact: f64,
    pub max_saving_share: f64,
}

pub trait BusinessRule: Send + Sync {
    fn id(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn apply(&self, rows: Vec<ExplanationRow>, ctx: &RuleContext, audit: &mut Vec<AuditEntry>) -> Vec<ExplanationRow>;
}

fn entry(rule: &dyn BusinessRule, row: &ExplanationRow, values: &[(&str, f64)]) -> AuditEntry {
    AuditEntry {
        rule_id: rule.id().to_string(),
        vehicle_id: row.vehicle_id.clone(),
        date: row.date_tx,
        feature: row.feature.clone(),
        values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

fn retain_rows<F>(
    rule: &dyn BusinessRule,
    rows: Vec<ExplanationRow>,
    audit: &mut Vec<AuditEntry>,
    mut keep: F,
) -> Vec<ExplanationRow>
where
    F: FnMut(&ExplanationRow) -> std::result::Result<(), Vec<(&'static str, f64)>>,
{
    rows.into_iter()
        .filter(|row| match keep(row) {
            Ok(()) => true,
            Err(values) => {
                audit.push(entry(rule, row, &values));
                false
            }
        })
        .collect()
}

/// Drops indicator columns and features the registry marks as not
/// actionable.
pub struct CategoricalRule;

impl BusinessRule for CategoricalRule {
    fn id(&self) -> &'static str {
        "BR1"
    }
    fn description(&self) -> &'static str {
        "drop categorical and non-actionable features"
    }
    fn apply(&self, rows: Vec<ExplanationRow>, ctx: &RuleContext, audit: &mut Vec<AuditEntry>) -> Vec<ExplanationRow> {
        retain_rows(self, rows, audit, |row| {
            let actionable = !ctx.categorical.contains(&row.feature)
                && ctx.registry.get(&row.feature).is_some_and(|s| s.actionable);
            if actionable {
                Ok(())
            } else {
                Err(vec![("y_diff", row.y_diff)])
            }
        })
    }
}

/// Drops rows whose saving is below a share of the day's average fuel.
pub struct MinImpactRule;

impl BusinessRule for MinImpactRule {
    fn id(&self) -> &'static str {
        "BR2"
    }
    fn description(&self) -> &'static str {
        "drop rows with relative impact below the threshold"
    }
    fn apply(&self, rows: Vec<ExplanationRow>, ctx: &RuleContext, audit: &mut Vec<AuditEntry>) -> Vec<ExplanationRow> {
        retain_rows(self, rows, audit, |row| {
            let rel = row.y_diff / row.avg_fuel_consumption;
            if rel >= ctx.min_relative_impact {
                Ok(())
            } else {
                Err(vec![("relative_impact", rel), ("threshold", ctx.min_relative_impact)])
            }
        })
    }
}

/// Keeps only days whose fuel is strictly above the inlier median of the
/// same group and route.
pub struct AboveMedianFuelRule;

impl BusinessRule for AboveMedianFuelRule {
    fn id(&self) -> &'static str {
        "BR3"
    }
    fn description(&self) -> &'static str {
        "keep days with fuel above the inlier median"
    }
    fn apply(&self, rows: Vec<ExplanationRow>, ctx: &RuleContext, audit: &mut Vec<AuditEntry>) -> Vec<ExplanationRow> {
        retain_rows(self, rows, audit, |row| {
            match ctx.medians.fuel_median(row.vehicle_group, row.route_type) {
                Some(m) if row.avg_fuel_consumption > m => Ok(()),
                Some(m) => Err(vec![("avg_fuel_consumption", row.avg_fuel_consumption), ("median_inlier", m)]),
                None => Err(vec![("avg_fuel_consumption", row.avg_fuel_consumption)]),
            }
        })
    }
}

/// The feature must sit on the costly side of the inlier median: above it
/// for Positive features, below it for Negative ones.
pub struct DirectionRule;

impl BusinessRule for DirectionRule {
    fn id(&self) -> &'static str {
        "BR4"
    }
    fn description(&self) -> &'static str {
        "require the feature value on the costly side of the inlier median"
    }
    fn apply(&self, rows: Vec<ExplanationRow>, ctx: &RuleContext, audit: &mut Vec<AuditEntry>) -> Vec<ExplanationRow> {
        retain_rows(self, rows, audit, |row| {
            let Some(spec) = ctx.registry.get(&row.feature) else {
                return Err(vec![("feature_value", row.feature_value)]);
            };
            let m = ctx.medians.feature_median(&row.feature, row.vehicle_group, row.route_type);
            let ok = match spec.impact_type {
                ImpactType::Positive => row.feature_value > m,
                ImpactType::Negative => row.feature_value < m,
            };
            if ok {
                Ok(())
            } else {
                Err(vec![("feature_value", row.feature_value), ("median_inlier", m)])
            }
        })
    }
}

/// Drops a whole vehicle-day when its total saving exceeds a share of the
/// observed fuel.
pub struct SavingCapRule;

impl BusinessRule for SavingCapRule {
    fn id(&self) -> &'static str {
        "BR5"
    }
    fn description(&self) -> &'static str {
        "drop vehicle-days whose total saving exceeds the cap"
    }
    fn apply(&self, rows: Vec<ExplanationRow>, ctx: &RuleContext, audit: &mut Vec<AuditEntry>) -> Vec<ExplanationRow> {
        let mut totals: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();
        for row in &rows {
            *totals.entry(row.day_key()).or_default() += row.y_diff;
        }
        retain_rows(self, rows, audit, |row| {
            let total = totals[&row.day_key()];
            let cap = ctx.max_saving_share * row.avg_fuel_consumption;
            if total <= cap {
                Ok(())
            } else {
                Err(vec![("total_y_diff", total), ("cap", cap)])
            }
        })
    }
}

pub struct RuleRegistry {
    rules: Vec<Box<dyn BusinessRule>>,
}

impl RuleRegistry {
    pub fn empty() -> Self {
        RuleRegistry { rules: Vec::new() }
    }

    pub fn with_builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(CategoricalRule);
        reg.register(MinImpactRule);
        reg.register(AboveMedianFuelRule);
        reg.register(DirectionRule);
        reg.register(SavingCapRule);
        reg
    }

    /// Adds a rule, replacing any rule with the same id.
    pub fn register<R: BusinessRule + 'static>(&mut self, rule: R) {
        self.rules.retain(|r| r.id() != rule.id());
        self.rules.push(Box::new(rule));
    }

    pub fn get(&self, id: &str) -> Option<&dyn BusinessRule> {
        self.rules.iter().find(|r| r.id() == id).map(|r| r.as_ref())
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.id()).collect()
    }

    pub fn chain<S: AsRef<str>>(&self, order: &[S]) -> Result<Vec<&dyn BusinessRule>> {
        order
            .iter()
            .map(|id| {
                self.get(id.as_ref()).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown business rule {:?} (known: {})",
                        id.as_ref(),
                        self.ids().join(", ")
                    ))
                })
            })
            .collect()
    }
}

/// Runs the chain in order and refreshes `y_fuel_new` from what survives.
pub fn apply_business_rules(
    rows: Vec<ExplanationRow>,
    chain: &[&dyn BusinessRule],
    ctx: &RuleContext,
) -> (Vec<ExplanationRow>, Vec<AuditEntry>) {
    let mut audit = Vec::new();
    let mut rows = rows;
    for rule in chain {
        rows = rule.apply(rows, ctx, &mut audit);
    }
    recompute_fuel_new(&mut rows);
    (rows, audit)
}

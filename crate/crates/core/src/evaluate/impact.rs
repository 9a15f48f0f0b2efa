use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::explain::ExplanationRow;
use crate::ingest::{FarRecord, FeatureRegistry};

/// kg of CO2 per liter of diesel.
pub const CO2_KG_PER_LITER: f64 = 2.67633;
pub const DRIVING_BEHAVIOUR: &str = "Driving Behaviour";

pub fn co2_kg(liters: f64, factor: f64) -> f64 {
    liters * factor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyImpact {
    pub fleet: String,
    /// `YYYY-MM`.
    pub month: String,
    pub total_fuel_l: f64,
    pub extra_fuel_all_l: f64,
    pub extra_fuel_driving_l: f64,
    pub co2_all_kg: f64,
    pub co2_driving_kg: f64,
}

fn month_of(date: chrono::NaiveDate) -> String {
    date.format("%Y-%m").to_string()
}

/// Liters per month: observed fuel and the extra fuel explained, as
/// Σ y_diff · trip_kms / 100 over vehicle-days.
pub fn monthly_impact(
    rows: &[ExplanationRow],
    records: &[FarRecord],
    registry: &FeatureRegistry,
    co2_factor: f64,
    fleet: &str,
) -> Vec<MonthlyImpact> {
    let kms: BTreeMap<(String, chrono::NaiveDate), f64> = records
        .iter()
        .filter_map(|r| r.trip_kms.map(|k| (r.key(), k)))
        .collect();
    let mut months: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    for r in records {
        months.entry(month_of(r.date)).or_default().0 += r.trip_fuel_used.unwrap_or(0.0);
    }
    for row in rows {
        let Some(&k) = kms.get(&row.day_key()) else { continue };
        let liters = row.y_diff * k / 100.0;
        let e = months.entry(month_of(row.date_tx)).or_default();
        e.1 += liters;
        if registry.get(&row.feature).is_some_and(|s| s.category == DRIVING_BEHAVIOUR) {
            e.2 += liters;
        }
    }
    months
        .into_iter()
        .map(|(month, (total, all, driving))| MonthlyImpact {
            fleet: fleet.to_string(),
            month,
            total_fuel_l: total,
            extra_fuel_all_l: all,
            extra_fuel_driving_l: driving,
            co2_all_kg: co2_kg(all, co2_factor),
            co2_driving_kg: co2_kg(driving, co2_factor),
        })
        .collect()
}

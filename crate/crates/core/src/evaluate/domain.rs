//! Domain-knowledge checks on the explanations: impact per fuel-factor
//! subcategory against literature ranges, explained extra fuel against the
//! anomaly threshold, and post-recommendation fuel against catalog values.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::wilcoxon::{signed_rank_test, SignedRankTest};
use crate::anomaly::LimitSet;
use crate::explain::{ExplanationRow, InlierMedians};
use crate::ingest::{AnomalyLabel, FarRecord, FeatureRegistry, RouteType, VehicleIdentity};
use crate::stats::median;
use crate::{Error, Result};

/// Subcategories reported without a verdict.
pub const NO_VERDICT_SUBCATEGORIES: [&str; 2] = ["Other", "Rain"];

type DayKey = (String, NaiveDate);

fn day_totals(rows: &[ExplanationRow]) -> BTreeMap<DayKey, (f64, f64)> {
    let mut out: BTreeMap<DayKey, (f64, f64)> = BTreeMap::new();
    for r in rows {
        let e = out.entry(r.day_key()).or_insert((0.0, r.avg_fuel_consumption));
        e.0 += r.y_diff;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SotaLimit {
    pub category: String,
    pub subcategory: String,
    pub min_pct: f64,
    pub max_pct: f64,
}

pub fn read_sota_limits<R: Read>(input: R) -> Result<Vec<SotaLimit>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let limits: Vec<SotaLimit> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    for l in &limits {
        if l.min_pct > l.max_pct {
            return Err(Error::Format(format!(
                "SOTA limits for {}/{}: min_pct {} > max_pct {}",
                l.category, l.subcategory, l.min_pct, l.max_pct
            )));
        }
    }
    Ok(limits)
}

pub fn load_sota_limits(path: &Path) -> Result<Vec<SotaLimit>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sota_limits(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Within,
    BelowMin,
    AboveMax,
}

pub fn verdict(pct: f64, min_pct: f64, max_pct: f64) -> Verdict {
    if pct < min_pct {
        Verdict::BelowMin
    } else if pct > max_pct {
        Verdict::AboveMax
    } else {
        Verdict::Within
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryImpact {
    pub fleet: String,
    pub category: String,
    pub subcategory: String,
    pub n_days: usize,
    pub median_impact_pct: f64,
    pub min_pct: Option<f64>,
    pub max_pct: Option<f64>,
    pub verdict: Option<Verdict>,
}

/// Relative impact of each subcategory on each vehicle-day: Σ y_diff of the
/// subcategory's rows over that day's average fuel.
pub fn day_subcategory_impacts(
    rows: &[ExplanationRow],
    registry: &FeatureRegistry,
) -> BTreeMap<DayKey, BTreeMap<(String, String), f64>> {
    let mut out: BTreeMap<DayKey, BTreeMap<(String, String), f64>> = BTreeMap::new();
    for r in rows {
        let Some(spec) = registry.get(&r.feature) else { continue };
        *out.entry(r.day_key())
            .or_default()
            .entry((spec.category.clone(), spec.subcategory.clone()))
            .or_default() += r.y_diff / r.avg_fuel_consumption;
    }
    out
}

/// Median relative impact per subcategory, over the vehicle-days on which
/// the subcategory has at least one row, with a verdict against the
/// configured literature range.
pub fn aggregate_category_impact(
    rows: &[ExplanationRow],
    registry: &FeatureRegistry,
    limits: &[SotaLimit],
    fleet: &str,
) -> Vec<CategoryImpact> {
    let mut per_sub: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for impacts in day_subcategory_impacts(rows, registry).into_values() {
        for (key, v) in impacts {
            per_sub.entry(key).or_default().push(v);
        }
    }
    per_sub
        .into_iter()
        .map(|((category, subcategory), values)| {
            let pct = median(&values).unwrap_or(0.0) * 100.0;
            let lim = limits
                .iter()
                .find(|l| l.category == category && l.subcategory == subcategory);
            let judged = !NO_VERDICT_SUBCATEGORIES.contains(&subcategory.as_str());
            CategoryImpact {
                fleet: fleet.to_string(),
                n_days: values.len(),
                median_impact_pct: pct,
                min_pct: lim.map(|l| l.min_pct),
                max_pct: lim.map(|l| l.max_pct),
                verdict: lim.filter(|_| judged).map(|l| verdict(pct, l.min_pct, l.max_pct)),
                category,
                subcategory,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierDay {
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub avg_fuel_consumption: f64,
    pub lim_sup: f64,
    pub explained: f64,
    pub anomalous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierComparison {
    pub fleet: String,
    pub n_outlier_days: usize,
    /// Outlier days with at least one surviving explanation row.
    pub n_explained_days: usize,
    pub median_explained: Option<f64>,
    pub median_anomalous: Option<f64>,
    pub test: Option<SignedRankTest>,
    pub days: Vec<OutlierDay>,
}

/// Relative explained extra fuel vs relative excess over `lim_sup` on every
/// outlier vehicle-day. A day with no surviving rows counts as explained 0.
pub fn outlier_vs_explained(
    rows: &[ExplanationRow],
    limits: &LimitSet,
    records: &[FarRecord],
    fleet: &str,
) -> OutlierComparison {
    let totals = day_totals(rows);
    let mut days = Vec::new();
    for r in records {
        if r.anomaly_label != AnomalyLabel::Outlier {
            continue;
        }
        let (Some(avg), Some(l)) = (r.avg_fuel_consumption, limits.for_record(r)) else {
            continue;
        };
        let explained = totals.get(&r.key()).map(|t| t.0).unwrap_or(0.0) / avg;
        days.push(OutlierDay {
            vehicle_id: r.vehicle_id.clone(),
            date: r.date,
            avg_fuel_consumption: avg,
            lim_sup: l.lim_sup,
            explained,
            anomalous: (avg - l.lim_sup) / avg,
        });
    }
    let explained: Vec<f64> = days.iter().map(|d| d.explained).collect();
    let anomalous: Vec<f64> = days.iter().map(|d| d.anomalous).collect();
    OutlierComparison {
        fleet: fleet.to_string(),
        n_outlier_days: days.len(),
        n_explained_days: days.iter().filter(|d| totals.contains_key(&(d.vehicle_id.clone(), d.date))).count(),
        median_explained: median(&explained),
        median_anomalous: median(&anomalous),
        test: (!days.is_empty()).then(|| signed_rank_test(&explained, &anomalous)),
        days,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub make: String,
    pub model: String,
    pub year: String,
    pub fuel_type: String,
    pub route_type: RouteType,
    pub l_per_100km: f64,
}

type CatalogKey = (String, String, String, String, RouteType);

/// Catalog fuel per (make, model, year, fuel_type, route); duplicates are
/// reduced to their median.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub entries: BTreeMap<CatalogKey, f64>,
}

impl Catalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self> {
        let mut grouped: BTreeMap<CatalogKey, Vec<f64>> = BTreeMap::new();
        for e in entries {
            if !(e.l_per_100km > 0.0) {
                return Err(Error::Format(format!(
                    "catalog fuel for {} {} {} must be positive, got {}",
                    e.make, e.model, e.year, e.l_per_100km
                )));
            }
            grouped
                .entry((e.make, e.model, e.year, e.fuel_type, e.route_type))
                .or_default()
                .push(e.l_per_100km);
        }
        Ok(Catalog {
            entries: grouped
                .into_iter()
                .map(|(k, v)| (k, median(&v).expect("non-empty")))
                .collect(),
        })
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        Self::new(reader.deserialize().collect::<std::result::Result<_, _>>()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(f)
    }

    pub fn lookup(&self, v: &VehicleIdentity, route: RouteType) -> Option<f64> {
        self.entries
            .get(&(v.make.clone(), v.model.clone(), v.year.clone(), v.fuel_type.clone(), route))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogReport {
    pub fleet: String,
    pub n_days: usize,
    /// Explained days whose vehicle has no catalog entry for the route.
    pub n_unmatched: usize,
    pub mape1: Option<f64>,
    pub mape2: Option<f64>,
    pub mape3: Option<f64>,
    pub pct_mape1_below_0_5: Option<f64>,
    pub pct_mape1_below_0_2: Option<f64>,
    pub pct_mape1_below_0_1: Option<f64>,
    pub pct_mape2_below_0_5: Option<f64>,
    pub pct_mape2_below_0_2: Option<f64>,
    pub pct_mape2_below_0_1: Option<f64>,
    pub pct_below_catalog: Option<f64>,
}

fn pct_below(values: &[f64], threshold: f64) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().filter(|v| **v < threshold).count() as f64 / values.len() as f64 * 100.0)
}

/// Compares each explained day's `y_fuel_new` with its catalog value
/// (MAPE 1) and with the inlier median fuel of its group and route
/// (MAPE 2; MAPE 3 restricts to outlier days). MAPEs are fractions.
pub fn catalog_mape(
    rows: &[ExplanationRow],
    records: &[FarRecord],
    vehicles: &[VehicleIdentity],
    catalog: &Catalog,
    medians: &InlierMedians,
    offset: f64,
    fleet: &str,
) -> CatalogReport {
    let by_id: BTreeMap<&str, &VehicleIdentity> = vehicles.iter().map(|v| (v.vehicle_id.as_str(), v)).collect();
    let outliers: BTreeSet<DayKey> = records
        .iter()
        .filter(|r| r.anomaly_label == AnomalyLabel::Outlier)
        .map(FarRecord::key)
        .collect();
    let mut seen = BTreeSet::new();
    let (mut m1, mut m2, mut m3) = (Vec::new(), Vec::new(), Vec::new());
    let mut below = 0usize;
    let mut n_unmatched = 0;
    for r in rows {
        let key = r.day_key();
        if !seen.insert(key.clone()) {
            continue;
        }
        let cat = by_id.get(r.vehicle_id.as_str()).and_then(|v| catalog.lookup(v, r.route_type));
        match cat {
            Some(c) => {
                m1.push((r.y_fuel_new - c).abs() / c);
                if r.y_fuel_new < c - offset {
                    below += 1;
                }
            }
            None => n_unmatched += 1,
        }
        if let Some(m) = medians.fuel_median(r.vehicle_group, r.route_type) {
            let e = (r.y_fuel_new - m).abs() / m;
            m2.push(e);
            if outliers.contains(&key) {
                m3.push(e);
            }
        }
    }
    CatalogReport {
        fleet: fleet.to_string(),
        n_days: seen.len(),
        n_unmatched,
        mape1: median(&m1),
        mape2: median(&m2),
        mape3: median(&m3),
        pct_mape1_below_0_5: pct_below(&m1, 0.5),
        pct_mape1_below_0_2: pct_below(&m1, 0.2),
        pct_mape1_below_0_1: pct_below(&m1, 0.1),
        pct_mape2_below_0_5: pct_below(&m2, 0.5),
        pct_mape2_below_0_2: pct_below(&m2, 0.2),
        pct_mape2_below_0_1: pct_below(&m2, 0.1),
        pct_below_catalog: (!m1.is_empty()).then(|| below as f64 / m1.len() as f64 * 100.0),
    }
}

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::far::{FarRecord, RouteType};

/// Default minimum daily distance, km.
pub const MIN_TRIP_KMS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    MissingDistance,
    LowDistance,
    MissingFuel,
    /// Average fuel below the boxplot lower whisker.
    LowFuel,
    /// Average fuel above the boxplot upper whisker of the noise pass.
    Noise,
}

/// Per-(vehicle_group, route_type) fuel bounds, L/100 km.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FuelLimits {
    pub lower: BTreeMap<(u32, RouteType), f64>,
    pub upper_noise: BTreeMap<(u32, RouteType), f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedRecord {
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub counts: BTreeMap<RemovalReason, usize>,
    pub removed: Vec<RemovedRecord>,
}

impl RemovalReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, reason: RemovalReason) -> usize {
        self.counts.get(&reason).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: RemovalReport) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.removed.extend(other.removed);
    }
}

fn removal_reason(r: &FarRecord, limits: &FuelLimits, min_trip_kms: f64) -> Option<RemovalReason> {
    let Some(kms) = r.trip_kms else {
        return Some(RemovalReason::MissingDistance);
    };
    if !(kms >= min_trip_kms) {
        return Some(RemovalReason::LowDistance);
    }
    let Some(avg) = r.avg_fuel_consumption.filter(|_| r.trip_fuel_used.is_some()) else {
        return Some(RemovalReason::MissingFuel);
    };
    let key = r.vehicle_group.map(|g| (g, r.route_type));
    if let Some(lo) = key.and_then(|k| limits.lower.get(&k)) {
        if avg < *lo {
            return Some(RemovalReason::LowFuel);
        }
    }
    if let Some(hi) = key.and_then(|k| limits.upper_noise.get(&k)) {
        if avg > *hi {
            return Some(RemovalReason::Noise);
        }
    }
    None
}

/// Drops records with missing or short distance, missing fuel, or average
/// fuel outside the given bounds. Records whose group has no bound for
/// their route are kept.
pub fn quality_filter(
    records: Vec<FarRecord>,
    limits: &FuelLimits,
    min_trip_kms: f64,
) -> (Vec<FarRecord>, RemovalReport) {
    let mut report = RemovalReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        match removal_reason(&r, limits, min_trip_kms) {
            None => kept.push(r),
            Some(reason) => {
                *report.counts.entry(reason).or_default() += 1;
                report.removed.push(RemovedRecord {
                    vehicle_id: r.vehicle_id,
                    date: r.date,
                    reason,
                });
            }
        }
    }
    (kept, report)
}

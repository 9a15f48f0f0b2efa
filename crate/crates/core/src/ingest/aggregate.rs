use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};

use super::far::{AnomalyLabel, FarRecord, RouteType};
use super::feed::RawReading;
use super::registry::{FeatureRegistry, PER_TIME_CITY, TRIP_FUEL_USED, TRIP_KMS};

/// Reduces one vehicle-day of readings for a channel to a single value.
pub trait Aggregator: Send + Sync {
    fn name(&self) -> &'static str;

    /// `samples` arrive sorted by (timestamp, value) and are never empty.
    fn aggregate(&self, samples: &[(DateTime<Utc>, f64)]) -> f64;
}

struct Sum;
struct Mean;
struct Max;
struct Count;
struct Last;

impl Aggregator for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn aggregate(&self, samples: &[(DateTime<Utc>, f64)]) -> f64 {
        samples.iter().map(|s| s.1).sum()
    }
}

impl Aggregator for Mean {
    fn name(&self) -> &'static str {
        "mean"
    }
    fn aggregate(&self, samples: &[(DateTime<Utc>, f64)]) -> f64 {
        Sum.aggregate(samples) / samples.len() as f64
    }
}

impl Aggregator for Max {
    fn name(&self) -> &'static str {
        "max"
    }
    fn aggregate(&self, samples: &[(DateTime<Utc>, f64)]) -> f64 {
        samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Aggregator for Count {
    fn name(&self) -> &'static str {
        "count"
    }
    fn aggregate(&self, samples: &[(DateTime<Utc>, f64)]) -> f64 {
        samples.len() as f64
    }
}

impl Aggregator for Last {
    fn name(&self) -> &'static str {
        "last"
    }
    fn aggregate(&self, samples: &[(DateTime<Utc>, f64)]) -> f64 {
        samples[samples.len() - 1].1
    }
}

/// Aggregators selectable by name from the feature registry.
pub struct AggregatorRegistry {
    entries: Vec<Box<dyn Aggregator>>,
}

impl AggregatorRegistry {
    pub fn empty() -> Self {
        AggregatorRegistry {
            entries: Vec::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Sum);
        reg.register(Mean);
        reg.register(Max);
        reg.register(Count);
        reg.register(Last);
        reg
    }

    /// A later registration under an existing name replaces the earlier one.
    pub fn register<A: Aggregator + 'static>(&mut self, aggregator: A) {
        self.entries.retain(|a| a.name() != aggregator.name());
        self.entries.push(Box::new(aggregator));
    }

    pub fn get(&self, name: &str) -> Option<&dyn Aggregator> {
        self.entries
            .iter()
            .find(|a| a.name() == name)
            .map(|a| a.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|a| a.name()).collect()
    }
}

impl Default for AggregatorRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DailyAggregation {
    pub records: Vec<FarRecord>,
    /// Channels that matched no feature and were not ignorable, with reading counts.
    pub unknown_channels: BTreeMap<String, usize>,
}

/// Builds one FAR row per (vehicle, UTC calendar day) with at least one reading.
///
/// Output is sorted by (vehicle_id, date) and does not depend on input order.
pub fn aggregate_daily(
    readings: &[RawReading],
    registry: &FeatureRegistry,
    aggregators: &AggregatorRegistry,
    ignore_channels: &BTreeSet<String>,
) -> DailyAggregation {
    type Key = (String, NaiveDate);
    let mut days: BTreeMap<Key, BTreeMap<&str, Vec<(DateTime<Utc>, f64)>>> = BTreeMap::new();
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();

    for r in readings {
        let key = (r.vehicle_id.clone(), r.time_tx.date_naive());
        let day = days.entry(key).or_default();
        match registry.by_channel(&r.variable_id) {
            Some(spec) => day
                .entry(spec.name.as_str())
                .or_default()
                .push((r.time_tx, r.variable_value)),
            None => {
                if !ignore_channels.contains(&r.variable_id) {
                    *unknown.entry(r.variable_id.clone()).or_default() += 1;
                }
            }
        }
    }
    for (channel, n) in &unknown {
        log::warn!("skipping unknown channel {channel:?} ({n} readings)");
    }

    let mut records = Vec::with_capacity(days.len());
    for ((vehicle_id, date), mut channels) in days {
        let mut features = BTreeMap::new();
        let mut trip_kms = None;
        let mut trip_fuel_used = None;
        let mut per_time_city = None;
        for spec in registry.specs() {
            let Some(samples) = channels.get_mut(spec.name.as_str()) else {
                continue;
            };
            samples.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let agg = aggregators
                .get(&spec.aggregator)
                .unwrap_or_else(|| panic!("aggregator {:?} not registered", spec.aggregator));
            let value = agg.aggregate(samples);
            match spec.name.as_str() {
                TRIP_KMS => trip_kms = Some(value),
                TRIP_FUEL_USED => trip_fuel_used = Some(value),
                PER_TIME_CITY => per_time_city = Some(value),
                name => {
                    features.insert(name.to_string(), value);
                }
            }
        }
        let mut record = FarRecord {
            vehicle_id,
            date,
            features,
            trip_kms,
            trip_fuel_used,
            per_time_city,
            avg_fuel_consumption: None,
            route_type: RouteType::Combined,
            vehicle_group: None,
            vehicle_class: None,
            anomaly_label: AnomalyLabel::Unassigned,
        };
        record.refresh_avg_fuel();
        records.push(record);
    }

    DailyAggregation {
        records,
        unknown_channels: unknown,
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{AnomalyLabel, FarRecord, FeatureRegistry, RouteType};
use crate::stats::median;

/// Medians over inlier vehicle-days, per (group, route) with a fleet-wide
/// fallback.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InlierMedians {
    pub fuel: BTreeMap<(u32, RouteType), f64>,
    pub fleet_fuel: Option<f64>,
    pub feature: BTreeMap<(u32, RouteType, String), f64>,
    pub fleet_feature: BTreeMap<String, f64>,
}

impl InlierMedians {
    pub fn from_records(records: &[FarRecord], features: &[String]) -> Self {
        let inliers: Vec<&FarRecord> = records
            .iter()
            .filter(|r| r.anomaly_label == AnomalyLabel::Inlier)
            .collect();
        let mut fuel: BTreeMap<(u32, RouteType), Vec<f64>> = BTreeMap::new();
        let mut fleet_fuel = Vec::new();
        let mut feature: BTreeMap<(u32, RouteType, String), Vec<f64>> = BTreeMap::new();
        let mut fleet_feature: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &inliers {
            if let Some(avg) = r.avg_fuel_consumption {
                fleet_fuel.push(avg);
                if let Some(g) = r.vehicle_group {
                    fuel.entry((g, r.route_type)).or_default().push(avg);
                }
            }
            for name in features {
                let Some(v) = r.value(name) else { continue };
                fleet_feature.entry(name.clone()).or_default().push(v);
                if let Some(g) = r.vehicle_group {
                    feature.entry((g, r.route_type, name.clone())).or_default().push(v);
                }
            }
        }
        fn medians<K: Ord>(m: BTreeMap<K, Vec<f64>>) -> BTreeMap<K, f64> {
            m.into_iter()
                .filter_map(|(k, v)| median(&v).map(|x| (k, x)))
                .collect()
        }
        InlierMedians {
            fuel: medians(fuel),
            fleet_fuel: median(&fleet_fuel),
            feature: medians(feature),
            fleet_feature: medians(fleet_feature),
        }
    }

    pub fn fuel_median(&self, group: Option<u32>, route: RouteType) -> Option<f64> {
        group
            .and_then(|g| self.fuel.get(&(g, route)).copied())
            .or(self.fleet_fuel)
    }

    /// Group-and-route median, then fleet median, then zero.
    pub fn feature_median(&self, name: &str, group: Option<u32>, route: RouteType) -> f64 {
        group
            .and_then(|g| self.feature.get(&(g, route, name.to_string())).copied())
            .or_else(|| self.fleet_feature.get(name).copied())
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Zero,
    MedianInlier,
}

/// Where each feature's counterfactual value comes from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferencePolicy {
    pub zero: BTreeSet<String>,
    pub medians: InlierMedians,
}

impl ReferencePolicy {
    pub fn new(registry: &FeatureRegistry, medians: InlierMedians) -> Self {
        ReferencePolicy {
            zero: registry
                .specs()
                .iter()
                .filter(|s| s.reference_zero)
                .map(|s| s.name.clone())
                .collect(),
            medians,
        }
    }

    pub fn kind(&self, feature: &str) -> ReferenceKind {
        if self.zero.contains(feature) {
            ReferenceKind::Zero
        } else {
            ReferenceKind::MedianInlier
        }
    }

    pub fn reference_value(&self, feature: &str, group: Option<u32>, route: RouteType) -> f64 {
        match self.kind(feature) {
            ReferenceKind::Zero => 0.0,
            ReferenceKind::MedianInlier => self.medians.feature_median(feature, group, route),
        }
    }
}

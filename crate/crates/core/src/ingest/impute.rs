use std::collections::BTreeMap;

use super::far::FarRecord;
use crate::stats::median;

/// Fills each missing feature with the median of its vehicle group, then
/// the fleet median, then zero. Observed values are never touched.
pub fn impute_missing(mut records: Vec<FarRecord>, features: &[String]) -> Vec<FarRecord> {
    for name in features {
        let mut by_group: BTreeMap<Option<u32>, Vec<f64>> = BTreeMap::new();
        let mut fleet = Vec::new();
        for r in &records {
            if let Some(&v) = r.features.get(name) {
                by_group.entry(r.vehicle_group).or_default().push(v);
                fleet.push(v);
            }
        }
        let group_median: BTreeMap<Option<u32>, f64> = by_group
            .iter()
            .filter_map(|(g, vals)| median(vals).map(|m| (*g, m)))
            .collect();
        let fleet_median = median(&fleet).unwrap_or(0.0);
        for r in records.iter_mut() {
            if !r.features.contains_key(name) {
                let fill = group_median
                    .get(&r.vehicle_group)
                    .copied()
                    .unwrap_or(fleet_median);
                r.features.insert(name.clone(), fill);
            }
        }
    }
    records
}

//! Boxplot-whisker fuel limits per (vehicle group, route type), the
//! two-pass noise cleaning built on them, and outlier labelling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{
    quality_filter, AnomalyLabel, FarRecord, FuelLimits, RemovalReport, RouteType,
};
use crate::stats::{quartiles, sorted_copy};

/// Whisker multiplier on the interquartile range.
pub const WHISKER: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyLimits {
    pub vehicle_group: u32,
    pub route_type: RouteType,
    pub q1: f64,
    pub q3: f64,
    pub lim_inf: f64,
    pub lim_sup: f64,
    /// Number of records the quartiles were computed from.
    pub n_support: usize,
    /// Limits come from the fleet-wide sample of the route type because the
    /// group itself had too few records.
    pub borrowed_flag: bool,
}

/// Quartiles and whiskers of an unsorted sample.
pub fn whiskers(values: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let sorted = sorted_copy(values);
    let (q1, q3) = quartiles(&sorted)?;
    let iqr = q3 - q1;
    Ok((q1, q3, q1 - WHISKER * iqr, q3 + WHISKER * iqr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    /// Fewer than four records; fleet-wide limits of the route used instead.
    Borrowed,
    /// Fewer than four records and no fleet-wide fallback either.
    InsufficientSupport,
    /// Every record of the group was removed by the first pass.
    EmptyAfterCleaning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFlag {
    pub vehicle_group: u32,
    pub route_type: RouteType,
    pub n_records: usize,
    pub status: GroupStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LimitSet {
    pub limits: BTreeMap<(u32, RouteType), AnomalyLimits>,
    pub flags: Vec<GroupFlag>,
}

impl LimitSet {
    pub fn get(&self, group: u32, route: RouteType) -> Option<&AnomalyLimits> {
        self.limits.get(&(group, route))
    }

    pub fn for_record(&self, r: &FarRecord) -> Option<&AnomalyLimits> {
        r.vehicle_group.and_then(|g| self.get(g, r.route_type))
    }

    pub fn to_fuel_limits(&self) -> FuelLimits {
        FuelLimits {
            lower: self.limits.iter().map(|(k, l)| (*k, l.lim_inf)).collect(),
            upper_noise: self.limits.iter().map(|(k, l)| (*k, l.lim_sup)).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for l in self.limits.values() {
            writer.serialize(l)?;
        }
        writer
            .flush()
            .map_err(|e| crate::Error::io("<limits>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut limits = BTreeMap::new();
        for row in reader.deserialize::<AnomalyLimits>() {
            let l = row?;
            limits.insert((l.vehicle_group, l.route_type), l);
        }
        Ok(LimitSet {
            limits,
            flags: Vec::new(),
        })
    }
}

/// Limits per (vehicle_group, route_type) over `avg_fuel_consumption`.
///
/// Groups with fewer than four records inherit the fleet-wide limits of
/// their route type and are flagged; without a fleet fallback they get no
/// limits at all.
pub fn compute_limits(records: &[FarRecord]) -> LimitSet {
    let mut by_group: BTreeMap<(u32, RouteType), Vec<f64>> = BTreeMap::new();
    let mut by_route: BTreeMap<RouteType, Vec<f64>> = BTreeMap::new();
    for r in records {
        let (Some(g), Some(avg)) = (r.vehicle_group, r.avg_fuel_consumption) else {
            continue;
        };
        by_group.entry((g, r.route_type)).or_default().push(avg);
        by_route.entry(r.route_type).or_default().push(avg);
    }
    let fleet: BTreeMap<RouteType, (f64, f64, f64, f64, usize)> = by_route
        .iter()
        .filter_map(|(route, vals)| whiskers(vals).ok().map(|w| (*route, (w.0, w.1, w.2, w.3, vals.len()))))
        .collect();

    let mut set = LimitSet::default();
    for ((group, route), vals) in &by_group {
        let (q1, q3, lim_inf, lim_sup, n_support, borrowed_flag) = match whiskers(vals) {
            Ok((q1, q3, lo, hi)) => (q1, q3, lo, hi, vals.len(), false),
            Err(_) => {
                let status = match fleet.get(route) {
                    Some(_) => GroupStatus::Borrowed,
                    None => GroupStatus::InsufficientSupport,
                };
                set.flags.push(GroupFlag {
                    vehicle_group: *group,
                    route_type: *route,
                    n_records: vals.len(),
                    status,
                });
                match fleet.get(route) {
                    Some(&(q1, q3, lo, hi, n)) => (q1, q3, lo, hi, n, true),
                    None => continue,
                }
            }
        };
        set.limits.insert(
            (*group, *route),
            AnomalyLimits {
                vehicle_group: *group,
                route_type: *route,
                q1,
                q3,
                lim_inf,
                lim_sup,
                n_support,
                borrowed_flag,
            },
        );
    }
    set
}

/// Result of the two-pass cleaning.
#[derive(Debug, Clone, Default)]
pub struct CleanOutcome {
    pub records: Vec<FarRecord>,
    pub phase1: LimitSet,
    /// Limits recomputed on the survivors; `lim_sup` is the published
    /// outlier threshold.
    pub limits: LimitSet,
    pub report: RemovalReport,
}

/// First pass drops records outside the whiskers (too-low fuel and
/// high-side noise); the second pass recomputes limits on what is left.
pub fn two_phase_clean(records: Vec<FarRecord>) -> CleanOutcome {
    let phase1 = compute_limits(&records);
    let before: BTreeSet<(u32, RouteType)> = records
        .iter()
        .filter_map(|r| r.vehicle_group.map(|g| (g, r.route_type)))
        .collect();
    let (kept, report) = quality_filter(records, &phase1.to_fuel_limits(), f64::NEG_INFINITY);
    let mut limits = compute_limits(&kept);
    let after: BTreeMap<(u32, RouteType), usize> =
        kept.iter()
            .filter_map(|r| r.vehicle_group.map(|g| (g, r.route_type)))
            .fold(BTreeMap::new(), |mut m, k| {
                *m.entry(k).or_default() += 1;
                m
            });
    for (group, route) in before {
        if !after.contains_key(&(group, route)) {
            limits.flags.push(GroupFlag {
                vehicle_group: group,
                route_type: route,
                n_records: 0,
                status: GroupStatus::EmptyAfterCleaning,
            });
        }
    }
    CleanOutcome {
        records: kept,
        phase1,
        limits,
        report,
    }
}

/// Outlier iff average fuel is strictly above `lim_sup`; records without
/// limits stay unassigned.
pub fn flag_outliers(mut records: Vec<FarRecord>, limits: &LimitSet) -> Vec<FarRecord> {
    for r in records.iter_mut() {
        r.anomaly_label = match (limits.for_record(r), r.avg_fuel_consumption) {
            (Some(l), Some(avg)) if avg > l.lim_sup => AnomalyLabel::Outlier,
            (Some(_), Some(_)) => AnomalyLabel::Inlier,
            _ => AnomalyLabel::Unassigned,
        };
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RemovalReason;
    use chrono::NaiveDate;

    pub(crate) fn rec(id: usize, group: u32, route: RouteType, avg: f64) -> FarRecord {
        FarRecord {
            vehicle_id: format!("v{id}"),
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            features: Default::default(),
            trip_kms: Some(100.0),
            trip_fuel_used: Some(avg),
            per_time_city: Some(0.5),
            avg_fuel_consumption: Some(avg),
            route_type: route,
            vehicle_group: Some(group),
            vehicle_class: None,
            anomaly_label: AnomalyLabel::Unassigned,
        }
    }

    fn group(values: &[f64]) -> Vec<FarRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| rec(i, 0, RouteType::Highway, v))
            .collect()
    }

    #[test]
    fn limits_from_whiskers() {
        let set = compute_limits(&group(&[2.0, 4.0, 6.0, 8.0, 100.0]));
        let l = set.get(0, RouteType::Highway).unwrap();
        assert_eq!((l.q1, l.q3), (4.0, 8.0));
        assert_eq!(l.lim_sup, 14.0);
        assert_eq!(l.lim_inf, -2.0);
        assert_eq!(l.n_support, 5);
        assert!(!l.borrowed_flag);

        let set = compute_limits(&group(&[9.0; 4]));
        let l = set.get(0, RouteType::Highway).unwrap();
        assert_eq!((l.lim_inf, l.lim_sup), (9.0, 9.0));
    }

    #[test]
    fn small_group_without_fallback_is_skipped() {
        let set = compute_limits(&group(&[1.0, 2.0, 3.0]));
        assert!(set.limits.is_empty());
        assert_eq!(set.flags[0].status, GroupStatus::InsufficientSupport);
    }

    #[test]
    fn small_group_borrows_fleet_route_limits() {
        let mut records = group(&[2.0, 4.0, 6.0, 8.0]);
        records.push(rec(9, 1, RouteType::Highway, 5.0));
        let set = compute_limits(&records);
        let own = set.get(0, RouteType::Highway).unwrap();
        let borrowed = set.get(1, RouteType::Highway).unwrap();
        assert!(borrowed.borrowed_flag);
        assert_eq!(borrowed.n_support, 5);
        // fleet sample {2,4,5,6,8}: q1 = 4, q3 = 6
        assert_eq!((borrowed.q1, borrowed.q3), (4.0, 6.0));
        assert_ne!(own.q1, borrowed.q1);
        assert_eq!(set.flags[0].status, GroupStatus::Borrowed);
    }

    #[test]
    fn two_phase_example() {
        let out = two_phase_clean(group(&[2.0, 4.0, 6.0, 8.0, 100.0]));
        assert_eq!(out.report.count(RemovalReason::Noise), 1);
        assert_eq!(out.report.count(RemovalReason::LowFuel), 0);
        assert_eq!(out.records.len(), 4);
        let l = out.limits.get(0, RouteType::Highway).unwrap();
        // {2,4,6,8}: q1 = 3.5, q3 = 6.5
        assert_eq!((l.q1, l.q3), (3.5, 6.5));
        assert_eq!(l.lim_sup, 11.0);
        assert_eq!(out.phase1.get(0, RouteType::Highway).unwrap().lim_sup, 14.0);
    }

    #[test]
    fn all_inlier_group_is_a_fixed_point() {
        let out = two_phase_clean(group(&[5.0, 6.0, 7.0, 8.0, 9.0]));
        assert_eq!(out.records.len(), 5);
        assert_eq!(
            out.phase1.get(0, RouteType::Highway),
            out.limits.get(0, RouteType::Highway)
        );
    }

    #[test]
    fn outlier_comparison_is_strict() {
        let mut limits = LimitSet::default();
        limits.limits.insert(
            (0, RouteType::Highway),
            AnomalyLimits {
                vehicle_group: 0,
                route_type: RouteType::Highway,
                q1: 8.0,
                q3: 9.0,
                lim_inf: 6.5,
                lim_sup: 9.35,
                n_support: 10,
                borrowed_flag: false,
            },
        );
        let labelled = flag_outliers(
            vec![
                rec(1, 0, RouteType::Highway, 9.96),
                rec(2, 0, RouteType::Highway, 9.35),
                rec(3, 7, RouteType::Highway, 50.0),
            ],
            &limits,
        );
        assert_eq!(labelled[0].anomaly_label, AnomalyLabel::Outlier);
        assert_eq!(labelled[1].anomaly_label, AnomalyLabel::Inlier);
        assert_eq!(labelled[2].anomaly_label, AnomalyLabel::Unassigned);
    }

    #[test]
    fn limits_csv_round_trip() {
        let set = compute_limits(&group(&[2.0, 4.0, 6.0, 8.0, 100.0]));
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = LimitSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.limits, set.limits);
        let header = String::from_utf8(buf).unwrap();
        assert!(header.starts_with(
            "vehicle_group,route_type,q1,q3,lim_inf,lim_sup,n_support,borrowed_flag\n"
        ));
    }
}

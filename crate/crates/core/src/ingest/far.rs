use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::registry::{FeatureRegistry, PER_TIME_CITY, TRIP_FUEL_USED, TRIP_KMS};
use crate::csvfmt::{fmt_opt, parse_opt};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteType {
    City,
    Combined,
    Highway,
}

impl RouteType {
    pub const ALL: [RouteType; 3] = [RouteType::City, RouteType::Combined, RouteType::Highway];

    pub fn as_str(self) -> &'static str {
        match self {
            RouteType::City => "city",
            RouteType::Combined => "combined",
            RouteType::Highway => "highway",
        }
    }
}

impl std::fmt::Display for RouteType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RouteType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "city" => Ok(RouteType::City),
            "combined" => Ok(RouteType::Combined),
            "highway" | "hwy" => Ok(RouteType::Highway),
            other => Err(Error::Format(format!("unknown route_type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyLabel {
    Inlier,
    Outlier,
    Noise,
    Unassigned,
}

impl AnomalyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyLabel::Inlier => "inlier",
            AnomalyLabel::Outlier => "outlier",
            AnomalyLabel::Noise => "noise",
            AnomalyLabel::Unassigned => "unassigned",
        }
    }
}

impl std::str::FromStr for AnomalyLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inlier" => Ok(AnomalyLabel::Inlier),
            "outlier" => Ok(AnomalyLabel::Outlier),
            "noise" => Ok(AnomalyLabel::Noise),
            "unassigned" | "" => Ok(AnomalyLabel::Unassigned),
            other => Err(Error::Format(format!("unknown anomaly_label {other:?}"))),
        }
    }
}

/// Average consumption in L/100 km.
pub fn compute_avg_fuel(trip_fuel_used: f64, trip_kms: f64) -> Result<f64> {
    if !(trip_kms > 0.0) {
        return Err(Error::UndefinedRatio(format!(
            "trip_kms must be positive, got {trip_kms}"
        )));
    }
    Ok(trip_fuel_used / trip_kms * 100.0)
}

/// One vehicle-day of the Fleet Analytics Record.
#[derive(Debug, Clone, PartialEq)]
pub struct FarRecord {
    pub vehicle_id: String,
    pub date: NaiveDate,
    /// Non-structural features; a missing value is an absent key.
    pub features: BTreeMap<String, f64>,
    pub trip_kms: Option<f64>,
    pub trip_fuel_used: Option<f64>,
    pub per_time_city: Option<f64>,
    pub avg_fuel_consumption: Option<f64>,
    pub route_type: RouteType,
    pub vehicle_group: Option<u32>,
    pub vehicle_class: Option<u8>,
    pub anomaly_label: AnomalyLabel,
}

impl FarRecord {
    pub fn refresh_avg_fuel(&mut self) {
        self.avg_fuel_consumption = match (self.trip_fuel_used, self.trip_kms) {
            (Some(fuel), Some(kms)) => compute_avg_fuel(fuel, kms).ok(),
            _ => None,
        };
    }

    /// Numeric value of a feature, structural fields included.
    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            TRIP_KMS => self.trip_kms,
            TRIP_FUEL_USED => self.trip_fuel_used,
            PER_TIME_CITY => self.per_time_city,
            _ => self.features.get(name).copied(),
        }
    }

    /// Level of one of the categorical record attributes.
    pub fn categorical(&self, name: &str) -> Option<String> {
        match name {
            "vehicle_group" => self.vehicle_group.map(|g| g.to_string()),
            "vehicle_class" => self.vehicle_class.map(|c| c.to_string()),
            "route_type" => Some(self.route_type.to_string()),
            _ => None,
        }
    }

    pub fn key(&self) -> (String, NaiveDate) {
        (self.vehicle_id.clone(), self.date)
    }
}

const FIXED_COLUMNS: [&str; 10] = [
    "vehicle_id",
    "date",
    "route_type",
    "vehicle_group",
    "vehicle_class",
    "anomaly_label",
    TRIP_KMS,
    TRIP_FUEL_USED,
    PER_TIME_CITY,
    "avg_fuel_consumption",
];

fn far_header(registry: &FeatureRegistry) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(registry.plain_features().map(|s| s.name.clone()))
        .collect()
}

pub fn write_far_csv<W: Write>(out: W, records: &[FarRecord], registry: &FeatureRegistry) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let header = far_header(registry);
    writer.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.vehicle_id.clone(),
            r.date.to_string(),
            r.route_type.to_string(),
            r.vehicle_group.map(|g| g.to_string()).unwrap_or_default(),
            r.vehicle_class.map(|c| c.to_string()).unwrap_or_default(),
            r.anomaly_label.as_str().to_string(),
            fmt_opt(r.trip_kms),
            fmt_opt(r.trip_fuel_used),
            fmt_opt(r.per_time_city),
            fmt_opt(r.avg_fuel_consumption),
        ];
        for spec in registry.plain_features() {
            row.push(fmt_opt(r.features.get(&spec.name).copied()));
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<far>", e))?;
    Ok(())
}

pub fn check_header(file: &str, expected: &[String], got: &csv::StringRecord) -> Result<()> {
    let got: Vec<String> = got.iter().map(str::to_string).collect();
    if got == expected {
        return Ok(());
    }
    Err(Error::SchemaMismatch {
        file: file.to_string(),
        missing: expected.iter().filter(|c| !got.contains(c)).cloned().collect(),
        unexpected: got.iter().filter(|c| !expected.contains(c)).cloned().collect(),
    })
}

pub fn read_far_csv<R: Read>(input: R, registry: &FeatureRegistry) -> Result<Vec<FarRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let expected = far_header(registry);
    check_header("FAR", &expected, reader.headers()?)?;
    let names: Vec<String> = registry.plain_features().map(|s| s.name.clone()).collect();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("bad date {:?}: {e}", &row[1])))?;
        let vehicle_group = match &row[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Format(format!("bad vehicle_group {s:?}")))?),
        };
        let vehicle_class = match &row[4] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Format(format!("bad vehicle_class {s:?}")))?),
        };
        let mut features = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if let Some(v) = parse_opt(&row[FIXED_COLUMNS.len() + i])? {
                features.insert(name.clone(), v);
            }
        }
        out.push(FarRecord {
            vehicle_id: row[0].to_string(),
            date,
            route_type: row[2].parse()?,
            vehicle_group,
            vehicle_class,
            anomaly_label: row[5].parse()?,
            trip_kms: parse_opt(&row[6])?,
            trip_fuel_used: parse_opt(&row[7])?,
            per_time_city: parse_opt(&row[8])?,
            avg_fuel_consumption: parse_opt(&row[9])?,
            features,
        });
    }
    Ok(out)
}

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VinEntry {
    pub vin_prefix: String,
    pub make: String,
    pub model: String,
    pub year: String,
    pub fuel_type: String,
}

/// VIN prefix lookup table; the longest matching prefix wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VinMap {
    entries: Vec<VinEntry>,
}

impl VinMap {
    pub fn new(mut entries: Vec<VinEntry>) -> Self {
        entries.sort_by(|a, b| {
            b.vin_prefix
                .len()
                .cmp(&a.vin_prefix.len())
                .then_with(|| a.vin_prefix.cmp(&b.vin_prefix))
        });
        VinMap { entries }
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let entries = reader.deserialize().collect::<std::result::Result<Vec<VinEntry>, _>>()?;
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| a.vin_prefix.cmp(&b.vin_prefix));
        for e in &sorted {
            writer.serialize(e)?;
        }
        writer.flush().map_err(|e| Error::io("<vin map>", e))?;
        Ok(())
    }

    pub fn lookup(&self, vin: &str) -> Option<&VinEntry> {
        self.entries.iter().find(|e| vin.starts_with(&e.vin_prefix))
    }

    /// Resolves every vehicle and assigns dense group ids over the sorted
    /// unique (make, model, year, fuel_type) tuples. The vehicle id doubles as
    /// its VIN.
    pub fn identify<'a>(&self, vehicle_ids: impl IntoIterator<Item = &'a str>) -> Vec<VehicleIdentity> {
        let ids: BTreeSet<&str> = vehicle_ids.into_iter().collect();
        let resolved: Vec<(String, [String; 4])> = ids
            .iter()
            .map(|id| {
                let tuple = match self.lookup(id) {
                    Some(e) => [e.make.clone(), e.model.clone(), e.year.clone(), e.fuel_type.clone()],
                    None => {
                        log::warn!("vehicle {id:?} matches no VIN prefix");
                        [UNKNOWN.into(), UNKNOWN.into(), UNKNOWN.into(), UNKNOWN.into()]
                    }
                };
                (id.to_string(), tuple)
            })
            .collect();
        let groups: BTreeMap<&[String; 4], u32> = resolved
            .iter()
            .map(|(_, t)| t)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i as u32))
            .collect();
        resolved
            .iter()
            .map(|(id, [make, model, year, fuel])| VehicleIdentity {
                vehicle_id: id.clone(),
                vin: id.clone(),
                make: make.clone(),
                model: model.clone(),
                year: year.clone(),
                fuel_type: fuel.clone(),
                vehicle_group: groups[&[make.clone(), model.clone(), year.clone(), fuel.clone()]],
                vehicle_class: None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleIdentity {
    pub vehicle_id: String,
    pub vin: String,
    pub make: String,
    pub model: String,
    pub year: String,
    pub fuel_type: String,
    pub vehicle_group: u32,
    pub vehicle_class: Option<u8>,
}

pub fn write_vehicles_csv<W: Write>(out: W, vehicles: &[VehicleIdentity]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for v in vehicles {
        writer.serialize(v)?;
    }
    writer.flush().map_err(|e| Error::io("<vehicles>", e))?;
    Ok(())
}

pub fn read_vehicles_csv<R: Read>(input: R) -> Result<Vec<VehicleIdentity>> {
    let mut reader = csv::Reader::from_reader(input);
    Ok(reader.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// One row of the fuel-band classification table, L/100 km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBand {
    pub code: String,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleClassTable {
    pub bands: Vec<ClassBand>,
}

impl Default for VehicleClassTable {
    /// Weight-class fuel bands, classes 0 (cars) to 10 (heavy straight trucks).
    fn default() -> Self {
        let rows = [
            ("1c", 7.12, 9.41, 8.27, 0),
            ("1t", 9.40, 11.76, 10.58, 1),
            ("2a", 11.20, 11.76, 11.48, 2),
            ("2b", 15.68, 23.52, 19.60, 3),
            ("3", 18.09, 29.40, 23.74, 4),
            ("4", 19.60, 33.60, 26.60, 5),
            ("5", 19.60, 39.20, 29.40, 6),
            ("6", 19.60, 47.04, 33.32, 7),
            ("7", 29.40, 58.80, 44.10, 8),
            ("8b", 31.36, 58.80, 45.08, 9),
            ("8a", 39.20, 94.09, 66.64, 10),
        ];
        VehicleClassTable {
            bands: rows
                .into_iter()
                .map(|(code, min, max, median, class)| ClassBand {
                    code: code.into(),
                    min,
                    max,
                    median,
                    class,
                })
                .collect(),
        }
    }
}

/// Class whose [min, max] band holds the value, lowest class on overlap.
///
/// Below every band gives the lowest class, above every band the highest;
/// values in a gap between bands go to the nearest band.
pub fn assign_vehicle_class(value: f64, table: &VehicleClassTable) -> u8 {
    let mut bands: Vec<&ClassBand> = table.bands.iter().collect();
    bands.sort_by_key(|b| b.class);
    let Some(first) = bands.first() else {
        return 0;
    };
    if let Some(b) = bands.iter().find(|b| b.min <= value && value <= b.max) {
        return b.class;
    }
    let lowest_min = bands.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let highest_max = bands.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    if value < lowest_min {
        return first.class;
    }
    if value > highest_max {
        return bands[bands.len() - 1].class;
    }
    let distance = |b: &ClassBand| if value < b.min { b.min - value } else { value - b.max };
    let mut best = first;
    for b in &bands[1..] {
        if distance(b) < distance(best) {
            best = b;
        }
    }
    best.class
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_examples() {
        let table = VehicleClassTable::default();
        assert_eq!(assign_vehicle_class(8.27, &table), 0);
        assert_eq!(assign_vehicle_class(19.60, &table), 3);
        assert_eq!(assign_vehicle_class(100.0, &table), 10);
        assert_eq!(assign_vehicle_class(1.0, &table), 0);
        // 9.40..9.41 overlaps classes 0 and 1
        assert_eq!(assign_vehicle_class(9.405, &table), 0);
        // gap between 11.76 and 15.68: classes 1 and 2 both end at 11.76
        assert_eq!(assign_vehicle_class(13.0, &table), 1);
        assert_eq!(assign_vehicle_class(15.0, &table), 3);
    }

    #[test]
    fn longest_prefix_and_dense_groups() {
        let map = VinMap::new(vec![
            VinEntry {
                vin_prefix: "WVW".into(),
                make: "VW".into(),
                model: "Golf".into(),
                year: "2018".into(),
                fuel_type: "diesel".into(),
            },
            VinEntry {
                vin_prefix: "WVWZZZ".into(),
                make: "VW".into(),
                model: "Caddy".into(),
                year: "2019".into(),
                fuel_type: "diesel".into(),
            },
        ]);
        assert_eq!(map.lookup("WVWZZZ123").unwrap().model, "Caddy");
        assert_eq!(map.lookup("WVWA1").unwrap().model, "Golf");
        let ids = map.identify(["WVWA1", "WVWZZZ1", "X1", "WVWA2"]);
        let groups: Vec<(String, u32)> = ids.iter().map(|v| (v.vehicle_id.clone(), v.vehicle_group)).collect();
        // sorted tuples: (VW,Caddy..) < (VW,Golf..) < (unknown..)
        assert_eq!(
            groups,
            vec![
                ("WVWA1".into(), 1),
                ("WVWA2".into(), 1),
                ("WVWZZZ1".into(), 0),
                ("X1".into(), 2)
            ]
        );
    }
}

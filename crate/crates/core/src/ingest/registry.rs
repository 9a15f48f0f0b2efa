use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::AggregatorRegistry;
use crate::error::{Error, Result};

/// Daily distance, km. Structural field and also a model input.
pub const TRIP_KMS: &str = "trip_kms";
/// Daily fuel, liters. Structural only; it defines the target.
pub const TRIP_FUEL_USED: &str = "trip_fuel_used";
/// Share of driving time spent in city, [0, 1]. Structural only.
pub const PER_TIME_CITY: &str = "per_time_city";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImpactType {
    /// Raising the value normally raises fuel use.
    Positive,
    /// Raising the value normally lowers fuel use.
    Negative,
}

impl std::str::FromStr for ImpactType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "positive" => Ok(ImpactType::Positive),
            "negative" => Ok(ImpactType::Negative),
            other => Err(Error::Format(format!("unknown impact_type {other:?}"))),
        }
    }
}

impl std::fmt::Display for ImpactType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImpactType::Positive => "Positive",
            ImpactType::Negative => "Negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub description: String,
    pub unit: String,
    /// Name of a registered daily aggregator.
    pub aggregator: String,
    pub impact_type: ImpactType,
    pub reference_zero: bool,
    pub category: String,
    pub subcategory: String,
    pub actionable: bool,
    /// Feed `variable_id` that carries this feature.
    pub channel: String,
}

impl FeatureSpec {
    pub fn is_structural(&self) -> bool {
        matches!(self.name.as_str(), TRIP_KMS | TRIP_FUEL_USED | PER_TIME_CITY)
    }

    /// Whether the feature enters the additive model as a numeric input.
    pub fn is_model_input(&self) -> bool {
        !matches!(self.name.as_str(), TRIP_FUEL_USED | PER_TIME_CITY)
    }
}

/// Category → subcategory table that feature metadata must draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub categories: BTreeMap<String, BTreeSet<String>>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        let table: [(&str, &[&str]); 6] = [
            (
                "Auxiliary Systems",
                &["Air Conditioning", "Steering Assist Systems", "Other Vehicle Auxiliaries"],
            ),
            ("Driving Behaviour", &["Aggressive Driving", "Eco-Driving"]),
            ("Operational Mass", &["Vehicle Extra Mass"]),
            (
                "Road Conditions",
                &["Altitude", "Driving Uphill", "Road Roughness", "Traffic Condition", "Trip Type"],
            ),
            ("Vehicle Conditions", &["Lubrication", "Tyres", "Other"]),
            ("Weather Conditions", &["Rain", "Ambient Temperature"]),
        ];
        Taxonomy {
            categories: table
                .iter()
                .map(|(c, subs)| (c.to_string(), subs.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }
}

impl Taxonomy {
    /// Empty category and subcategory is allowed and marks an unexplained column.
    pub fn validate(&self, category: &str, subcategory: &str) -> Result<()> {
        if category.is_empty() && subcategory.is_empty() {
            return Ok(());
        }
        match self.categories.get(category) {
            Some(subs) if subs.contains(subcategory) => Ok(()),
            Some(_) => Err(Error::Format(format!(
                "subcategory {subcategory:?} is not part of category {category:?}"
            ))),
            None => Err(Error::Format(format!("unknown category {category:?}"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryRow {
    name: String,
    #[serde(default)]
    description: String,
    unit: String,
    aggregator: String,
    impact_type: String,
    reference_zero: String,
    category: String,
    subcategory: String,
    actionable: String,
    #[serde(default)]
    channel: String,
}

fn parse_flag(field: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "yes" | "true" | "1" | "y" => Ok(true),
        "no" | "false" | "0" | "n" | "" => Ok(false),
        other => Err(Error::Format(format!("{field}: expected yes/no, found {other:?}"))),
    }
}

/// Ordered set of feature specifications, unique by name.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRegistry {
    specs: Vec<FeatureSpec>,
    by_name: HashMap<String, usize>,
    by_channel: HashMap<String, usize>,
}

impl FeatureRegistry {
    pub fn new(specs: Vec<FeatureSpec>, taxonomy: &Taxonomy) -> Result<Self> {
        let aggregators = AggregatorRegistry::with_builtin();
        let mut by_name = HashMap::new();
        let mut by_channel = HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            if spec.name.is_empty() {
                return Err(Error::Format("feature with empty name".into()));
            }
            if by_name.insert(spec.name.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate feature {:?}", spec.name)));
            }
            if by_channel.insert(spec.channel.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate channel {:?}", spec.channel)));
            }
            if aggregators.get(&spec.aggregator).is_none() {
                return Err(Error::Format(format!(
                    "feature {:?}: unknown aggregator {:?} (known: {:?})",
                    spec.name,
                    spec.aggregator,
                    aggregators.names()
                )));
            }
            taxonomy.validate(&spec.category, &spec.subcategory)?;
        }
        for required in [TRIP_KMS, TRIP_FUEL_USED] {
            if !by_name.contains_key(required) {
                return Err(Error::Format(format!("registry lacks required feature {required:?}")));
            }
        }
        Ok(FeatureRegistry {
            specs,
            by_name,
            by_channel,
        })
    }

    pub fn from_csv<R: Read>(input: R, taxonomy: &Taxonomy) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut specs = Vec::new();
        for row in reader.deserialize::<RegistryRow>() {
            let row = row?;
            let channel = if row.channel.is_empty() {
                row.name.clone()
            } else {
                row.channel
            };
            specs.push(FeatureSpec {
                impact_type: row.impact_type.parse()?,
                reference_zero: parse_flag("reference_zero", &row.reference_zero)?,
                actionable: parse_flag("actionable", &row.actionable)?,
                name: row.name,
                description: row.description,
                unit: row.unit,
                aggregator: row.aggregator.to_ascii_lowercase(),
                category: row.category,
                subcategory: row.subcategory,
                channel,
            });
        }
        Self::new(specs, taxonomy)
    }

    pub fn load(path: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file, taxonomy)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for s in &self.specs {
            writer.serialize(RegistryRow {
                name: s.name.clone(),
                description: s.description.clone(),
                unit: s.unit.clone(),
                aggregator: s.aggregator.clone(),
                impact_type: s.impact_type.to_string(),
                reference_zero: if s.reference_zero { "Yes" } else { "No" }.into(),
                category: s.category.clone(),
                subcategory: s.subcategory.clone(),
                actionable: if s.actionable { "Yes" } else { "No" }.into(),
                channel: s.channel.clone(),
            })?;
        }
        writer.flush().map_err(|e| Error::io("<registry>", e))?;
        Ok(())
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.by_name.get(name).map(|&i| &self.specs[i])
    }

    pub fn by_channel(&self, channel: &str) -> Option<&FeatureSpec> {
        self.by_channel.get(channel).map(|&i| &self.specs[i])
    }

    /// Non-structural features, i.e. the columns stored in `FarRecord::features`.
    pub fn plain_features(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.specs.iter().filter(|s| !s.is_structural())
    }

    /// Numeric model inputs in registry order.
    pub fn model_features(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.specs.iter().filter(|s| s.is_model_input())
    }

    /// Keeps only the structural features plus the named ones.
    pub fn restricted_to(&self, names: &[&str], taxonomy: &Taxonomy) -> Result<Self> {
        let specs = self
            .specs
            .iter()
            .filter(|s| s.is_structural() || names.contains(&s.name.as_str()))
            .cloned()
            .collect();
        Self::new(specs, taxonomy)
    }

    /// Registry shipped with the toolkit: the named features seen in fleet
    /// explanation tables plus one placeholder per remaining subcategory.
    pub fn builtin() -> Self {
        use ImpactType::{Negative, Positive};
        #[rustfmt::skip]
        let rows: &[(&str, &str, &str, &str, ImpactType, bool, &str, &str, bool, &str)] = &[
            (TRIP_KMS, "Distance driven in the day", "km", "sum", Negative, false, "Road Conditions", "Trip Type", true, "TripDistance"),
            (TRIP_FUEL_USED, "Fuel used in the day", "L", "sum", Positive, false, "", "", false, "TripFuel"),
            (PER_TIME_CITY, "Share of driving time in city", "fraction", "mean", Positive, false, "", "", false, "PerTimeCity"),
            ("mean_forward_acc", "Mean forward acceleration", "m/s2", "mean", Positive, false, "Driving Behaviour", "Aggressive Driving", true, "mean_forward_acc"),
            ("count_jackrabbit", "Jackrabbit start events", "count", "sum", Positive, true, "Driving Behaviour", "Aggressive Driving", true, "count_jackrabbit"),
            ("mean_speed_hwy", "Mean speed on highway", "km/h", "mean", Positive, false, "Driving Behaviour", "Aggressive Driving", true, "mean_speed_hwy"),
            ("mean_exterior_temp", "Mean exterior temperature", "K", "mean", Negative, false, "Weather Conditions", "Ambient Temperature", true, "mean_exterior_temp"),
            ("count_harsh_turns", "Harsh turn events", "count", "sum", Positive, true, "Driving Behaviour", "Aggressive Driving", true, "count_harsh_turns"),
            ("count_neutral", "Driving in neutral events", "count", "sum", Positive, true, "Driving Behaviour", "Eco-Driving", true, "count_neutral"),
            ("rpm_red", "Engine speed in red band events", "count", "sum", Positive, true, "Driving Behaviour", "Eco-Driving", true, "rpm_red"),
            ("rpm_yellow", "Engine speed in yellow band events", "count", "sum", Positive, true, "Driving Behaviour", "Eco-Driving", true, "rpm_yellow"),
            ("rpm_orange", "Engine speed in orange band events", "count", "sum", Positive, true, "Driving Behaviour", "Eco-Driving", true, "rpm_orange"),
            ("rpm_high", "High engine speed events", "count", "sum", Positive, true, "Driving Behaviour", "Eco-Driving", true, "rpm_high"),
            ("count_speed_limit_90", "Events above 90 km/h", "count", "sum", Positive, false, "Driving Behaviour", "Aggressive Driving", true, "count_speed_limit_90"),
            ("mean_side_to_side_acc", "Mean lateral acceleration", "m/s2", "mean", Positive, false, "Driving Behaviour", "Aggressive Driving", true, "mean_side_to_side_acc"),
            ("time_ac_on", "Time with air conditioning on", "s", "sum", Positive, true, "Auxiliary Systems", "Air Conditioning", true, "time_ac_on"),
            ("time_epas_on", "Time with power steering assist", "s", "sum", Positive, true, "Auxiliary Systems", "Steering Assist Systems", true, "time_epas_on"),
            ("time_lights_on", "Time with lights on", "s", "sum", Positive, true, "Auxiliary Systems", "Other Vehicle Auxiliaries", true, "time_lights_on"),
            ("time_wipers_on", "Time with wipers on", "s", "sum", Positive, true, "Weather Conditions", "Rain", true, "time_wipers_on"),
            ("time_cruise_control", "Time using cruise control", "s", "sum", Negative, false, "Driving Behaviour", "Eco-Driving", true, "time_cruise_control"),
            ("oil_life_pct", "Remaining oil life", "%", "last", Negative, false, "Vehicle Conditions", "Lubrication", true, "oil_life_pct"),
            ("mean_tyre_pressure", "Mean tyre pressure", "psi", "mean", Negative, false, "Vehicle Conditions", "Tyres", true, "mean_tyre_pressure"),
            ("count_def_low", "Low diesel exhaust fluid level events", "count", "sum", Positive, true, "Vehicle Conditions", "Other", true, "count_def_low"),
            ("mean_extra_mass", "Estimated extra mass", "kg", "mean", Positive, false, "Operational Mass", "Vehicle Extra Mass", true, "mean_extra_mass"),
            ("max_altitude", "Maximum altitude", "m", "max", Negative, false, "Road Conditions", "Altitude", true, "max_altitude"),
            ("time_uphill", "Time driving uphill", "s", "sum", Positive, false, "Road Conditions", "Driving Uphill", true, "time_uphill"),
            ("count_bumps", "Road bump events", "count", "sum", Positive, false, "Road Conditions", "Road Roughness", true, "count_bumps"),
            ("time_idle", "Time idling", "s", "sum", Positive, false, "Road Conditions", "Traffic Condition", true, "time_idle"),
        ];
        let specs = rows
            .iter()
            .map(|r| FeatureSpec {
                name: r.0.into(),
                description: r.1.into(),
                unit: r.2.into(),
                aggregator: r.3.into(),
                impact_type: r.4,
                reference_zero: r.5,
                category: r.6.into(),
                subcategory: r.7.into(),
                actionable: r.8,
                channel: r.9.into(),
            })
            .collect();
        Self::new(specs, &Taxonomy::default()).expect("builtin registry is valid")
    }
}

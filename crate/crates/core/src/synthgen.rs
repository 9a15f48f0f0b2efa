//! Seeded synthetic fleet with a planted additive fuel model. Emits a raw
//! feed in the ingest format together with ground-truth tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvfmt::{fmt_f64, write_table};
use crate::evaluate::CatalogEntry;
use crate::ingest::{
    FeatureRegistry, RouteType, Taxonomy, VinEntry, VinMap, PER_TIME_CITY, TRIP_FUEL_USED, TRIP_KMS,
};
use crate::stats::{median, quantile_sorted};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dist {
    Uniform { lo: f64, hi: f64 },
    /// Uniform integer in `[lo, hi]`.
    Count { lo: u32, hi: u32 },
}

impl Dist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Dist::Uniform { lo, hi } => rng.random_range(lo..hi),
            Dist::Count { lo, hi } => f64::from(rng.random_range(lo..=hi)),
        }
    }

    fn is_count(&self) -> bool {
        matches!(self, Dist::Count { .. })
    }
}

/// Piecewise-constant function; value `k` covers `[cuts[k-1], cuts[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepShape {
    pub cuts: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepShape {
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.cuts.partition_point(|&c| c <= x)]
    }

    pub fn range(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    pub name: String,
    pub dist: Dist,
    pub shape: StepShape,
    /// Distribution used on hot days, when the feature carries extra fuel.
    #[serde(default)]
    pub hot: Option<Dist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub vin_prefix: String,
    pub make: String,
    pub model: String,
    pub year: String,
    pub fuel_type: String,
    /// L/100 km.
    pub base_fuel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteMix {
    pub city: f64,
    pub combined: f64,
    pub highway: f64,
}

impl RouteMix {
    fn get(&self, r: RouteType) -> f64 {
        match r {
            RouteType::City => self.city,
            RouteType::Combined => self.combined,
            RouteType::Highway => self.highway,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub groups: Vec<GroupPlan>,
    /// Route probabilities.
    pub route_mix: RouteMix,
    /// L/100 km added per route type.
    pub route_offsets: RouteMix,
    pub features: Vec<FeaturePlan>,
    pub hot_day_rate: f64,
    /// Noise standard deviation as a fraction of the noiseless target range.
    pub noise_sigma_frac: f64,
    pub outlier_rate: f64,
    /// Planted outliers land at `q3 + m·IQR` with `m` uniform in
    /// `[magnitude, 2·magnitude]`, per group and route.
    pub outlier_magnitude: f64,
    /// Probability that a feature is absent from the feed on a given day.
    pub missing_rate: f64,
}

fn step(name: &str, dist: Dist, cuts: &[f64], values: &[f64], hot: Option<Dist>) -> FeaturePlan {
    FeaturePlan {
        name: name.into(),
        dist,
        shape: StepShape {
            cuts: cuts.to_vec(),
            values: values.to_vec(),
        },
        hot,
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        use Dist::{Count, Uniform};
        let group = |prefix: &str, make: &str, model: &str, year: &str, fuel: &str, base: f64| GroupPlan {
            vin_prefix: prefix.into(),
            make: make.into(),
            model: model.into(),
            year: year.into(),
            fuel_type: fuel.into(),
            base_fuel: base,
        };
        SynthSpec {
            seed: 42,
            n_vehicles: 50,
            n_days: 100,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            groups: vec![
                group("VF1AAA", "Renault", "Kangoo", "2018", "diesel", 6.0),
                group("WVWBBB", "Volkswagen", "Caddy", "2019", "diesel", 7.0),
                group("ZFACCC", "Fiat", "Doblo", "2017", "petrol", 8.0),
            ],
            route_mix: RouteMix {
                city: 0.3,
                combined: 0.4,
                highway: 0.3,
            },
            route_offsets: RouteMix {
                city: 1.5,
                combined: 0.5,
                highway: 0.0,
            },
            features: vec![
                step("mean_forward_acc", Uniform { lo: 0.5, hi: 2.5 }, &[1.5], &[0.0, 0.6], Some(Uniform { lo: 2.0, hi: 2.5 })),
                step("count_jackrabbit", Count { lo: 0, hi: 10 }, &[3.5, 7.5], &[0.0, 0.4, 0.9], Some(Count { lo: 8, hi: 10 })),
                step("mean_speed_hwy", Uniform { lo: 60.0, hi: 130.0 }, &[90.0, 110.0], &[0.0, 0.7, 1.5], Some(Uniform { lo: 110.0, hi: 130.0 })),
                step("mean_exterior_temp", Uniform { lo: 268.0, hi: 308.0 }, &[283.0], &[0.5, 0.0], None),
                step("count_harsh_turns", Count { lo: 0, hi: 8 }, &[4.5], &[0.0, 0.3], None),
                step("count_neutral", Count { lo: 0, hi: 20 }, &[10.5], &[0.0, 0.25], None),
                step("rpm_red", Count { lo: 0, hi: 10 }, &[5.5], &[0.0, 0.5], Some(Count { lo: 6, hi: 10 })),
                step("rpm_yellow", Count { lo: 0, hi: 30 }, &[15.5], &[0.0, 0.3], None),
                step("rpm_orange", Count { lo: 0, hi: 20 }, &[10.5], &[0.0, 0.35], None),
                step("rpm_high", Count { lo: 0, hi: 15 }, &[7.5], &[0.0, 0.6], Some(Count { lo: 8, hi: 15 })),
                step("count_speed_limit_90", Count { lo: 0, hi: 12 }, &[6.5], &[0.0, 0.4], None),
                step("mean_side_to_side_acc", Uniform { lo: 0.1, hi: 1.0 }, &[0.55], &[0.0, 0.3], None),
            ],
            hot_day_rate: 0.05,
            noise_sigma_frac: 0.02,
            outlier_rate: 0.0,
            outlier_magnitude: 3.0,
            missing_rate: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth spec: {m}")));
        for (name, rate) in [
            ("hot_day_rate", self.hot_day_rate),
            ("outlier_rate", self.outlier_rate),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} is not in [0, 1]"));
            }
        }
        if self.groups.is_empty() {
            return bad("at least one vehicle group is required".into());
        }
        if let Some(g) = self.groups.iter().find(|g| !(g.base_fuel > 0.0)) {
            return bad(format!("base_fuel of {} {} must be positive", g.make, g.model));
        }
        let mix = [self.route_mix.city, self.route_mix.combined, self.route_mix.highway];
        if mix.iter().any(|p| *p < 0.0) || mix.iter().sum::<f64>() <= 0.0 {
            return bad("route_mix needs non-negative probabilities with a positive sum".into());
        }
        if self.noise_sigma_frac < 0.0 || self.outlier_magnitude < 0.0 {
            return bad("noise_sigma_frac and outlier_magnitude must be non-negative".into());
        }
        for f in &self.features {
            if f.shape.values.len() != f.shape.cuts.len() + 1 || f.shape.cuts.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("shape of {} needs strictly increasing cuts and one more value", f.name));
            }
            if [TRIP_KMS, TRIP_FUEL_USED, PER_TIME_CITY].contains(&f.name.as_str()) {
                return bad(format!("{} is generated from the route model", f.name));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Ground truth of one vehicle-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDay {
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub group: usize,
    pub route_type: RouteType,
    pub trip_kms: f64,
    pub per_time_city: f64,
    /// Intercept part: group base fuel plus route offset.
    pub base: f64,
    /// Planted additive fuel: `base + Σ shape(x)`.
    pub planted_fuel: f64,
    pub noise: f64,
    pub is_outlier: bool,
    pub is_hot: bool,
    /// Final average fuel, L/100 km.
    pub avg_fuel: f64,
    pub trip_fuel_used: f64,
    /// Feature values in spec order.
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub missing: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSaving {
    pub vehicle_id: String,
    pub date: NaiveDate,
    pub feature: String,
    pub value: f64,
    pub reference: f64,
    pub saving: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFleet {
    pub spec: SynthSpec,
    pub days: Vec<TruthDay>,
}

/// Values of `per_time_city` and `trip_kms` that classify as `route` under
/// the default thresholds.
fn sample_route_geometry(route: RouteType, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match route {
        RouteType::Highway => (rng.random_range(0.0..0.45), rng.random_range(40.0..400.0)),
        RouteType::City => (rng.random_range(0.7..1.0), rng.random_range(8.0..28.0)),
        RouteType::Combined => (rng.random_range(0.52..0.62), rng.random_range(8.0..400.0)),
    }
}

fn vehicle_id(spec: &SynthSpec, v: usize) -> String {
    let g = &spec.groups[v % spec.groups.len()];
    format!("{}{:06}", g.vin_prefix, v)
}

struct DayDraw {
    day: TruthDay,
    outlier_u: f64,
}

fn generate_vehicle(spec: &SynthSpec, v: usize) -> Vec<DayDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(v as u64);
    let group = v % spec.groups.len();
    let id = vehicle_id(spec, v);
    let mix_total = spec.route_mix.city + spec.route_mix.combined + spec.route_mix.highway;
    (0..spec.n_days)
        .map(|d| {
            let u: f64 = rng.random_range(0.0..mix_total);
            let mut acc = 0.0;
            let mut route = RouteType::Highway;
            for r in RouteType::ALL {
                acc += spec.route_mix.get(r);
                if u < acc {
                    route = r;
                    break;
                }
            }
            let (ptc, kms) = sample_route_geometry(route, &mut rng);
            let is_hot = rng.random::<f64>() < spec.hot_day_rate;
            let mut values = Vec::with_capacity(spec.features.len());
            let mut missing = Vec::with_capacity(spec.features.len());
            for f in &spec.features {
                let dist = if is_hot { f.hot.unwrap_or(f.dist) } else { f.dist };
                values.push(dist.sample(&mut rng));
                missing.push(rng.random::<f64>() < spec.missing_rate);
            }
            let outlier_u: f64 = rng.random();
            let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
            let is_outlier = rng.random::<f64>() < spec.outlier_rate;
            let base = spec.groups[group].base_fuel + spec.route_offsets.get(route);
            let planted = spec
                .features
                .iter()
                .zip(&values)
                .fold(base, |acc, (f, &x)| acc + f.shape.eval(x));
            DayDraw {
                day: TruthDay {
                    vehicle_id: id.clone(),
                    date: spec.start_date + Duration::days(d as i64),
                    group,
                    route_type: route,
                    trip_kms: kms,
                    per_time_city: ptc,
                    base,
                    planted_fuel: planted,
                    // Scaled once the target range is known.
                    noise: z,
                    is_outlier,
                    is_hot,
                    avg_fuel: planted,
                    trip_fuel_used: 0.0,
                    values,
                    missing,
                },
                outlier_u,
            }
        })
        .collect()
}

/// Generates the fleet. Vehicles draw from independent streams of the seed,
/// so the result does not depend on the worker count.
pub fn generate(spec: &SynthSpec) -> Result<SynthFleet> {
    spec.validate()?;
    let draws: Vec<DayDraw> = (0..spec.n_vehicles)
        .into_par_iter()
        .map(|v| generate_vehicle(spec, v))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let (lo, hi) = draws.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d.day.planted_fuel), hi.max(d.day.planted_fuel))
    });
    let sigma = if draws.is_empty() { 0.0 } else { spec.noise_sigma_frac * (hi - lo) };

    let mut days: Vec<TruthDay> = Vec::with_capacity(draws.len());
    let mut outlier_u = Vec::with_capacity(draws.len());
    for d in draws {
        let mut day = d.day;
        day.noise *= sigma;
        day.avg_fuel = day.planted_fuel + day.noise;
        days.push(day);
        outlier_u.push(d.outlier_u);
    }

    // Outliers sit above the clean spread of their group and route.
    let mut clean: BTreeMap<(usize, RouteType), Vec<f64>> = BTreeMap::new();
    for d in &days {
        clean.entry((d.group, d.route_type)).or_default().push(d.avg_fuel);
    }
    let spread: BTreeMap<(usize, RouteType), (f64, f64)> = clean
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let q1 = quantile_sorted(&v, 0.25).unwrap_or(0.0);
            let q3 = quantile_sorted(&v, 0.75).unwrap_or(0.0);
            (k, (q3, q3 - q1))
        })
        .collect();
    for (d, u) in days.iter_mut().zip(outlier_u) {
        if d.is_outlier {
            let (q3, iqr) = spread[&(d.group, d.route_type)];
            let m = spec.outlier_magnitude * (1.0 + u);
            d.avg_fuel = d.avg_fuel.max(q3 + m * iqr);
        }
        d.avg_fuel = d.avg_fuel.max(0.5);
        d.trip_fuel_used = d.avg_fuel * d.trip_kms / 100.0;
    }
    Ok(SynthFleet {
        spec: spec.clone(),
        days,
    })
}

fn split_count(n: f64) -> Vec<f64> {
    let n = n as u64;
    if n < 3 {
        return vec![n as f64];
    }
    let a = n / 3;
    vec![a as f64, a as f64, (n - 2 * a) as f64]
}

impl SynthFleet {
    pub fn registry(&self) -> Result<FeatureRegistry> {
        let names: Vec<&str> = self.spec.features.iter().map(|f| f.name.as_str()).collect();
        let builtin = FeatureRegistry::builtin();
        if let Some(missing) = names.iter().find(|n| builtin.get(n).is_none()) {
            return Err(Error::Config(format!(
                "synth feature `{missing}` is not in the builtin registry"
            )));
        }
        builtin.restricted_to(&names, &Taxonomy::default())
    }

    pub fn vin_map(&self) -> VinMap {
        VinMap::new(
            self.spec
                .groups
                .iter()
                .map(|g| VinEntry {
                    vin_prefix: g.vin_prefix.clone(),
                    make: g.make.clone(),
                    model: g.model.clone(),
                    year: g.year.clone(),
                    fuel_type: g.fuel_type.clone(),
                })
                .collect(),
        )
    }

    /// Catalog fuel: base plus route offset plus the cheapest value of
    /// every planted shape.
    pub fn catalog(&self) -> Vec<CatalogEntry> {
        let best: f64 = self
            .spec
            .features
            .iter()
            .map(|f| f.shape.values.iter().copied().fold(f64::INFINITY, f64::min))
            .sum();
        self.spec
            .groups
            .iter()
            .flat_map(|g| {
                RouteType::ALL.into_iter().map(move |r| CatalogEntry {
                    make: g.make.clone(),
                    model: g.model.clone(),
                    year: g.year.clone(),
                    fuel_type: g.fuel_type.clone(),
                    route_type: r,
                    l_per_100km: g.base_fuel + self.spec.route_offsets.get(r) + best,
                })
            })
            .collect()
    }

    pub fn write_feed<W: Write>(&self, out: W) -> Result<()> {
        let registry = self.registry()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(crate::ingest::FEED_COLUMNS)?;
        let channel = |name: &str| registry.get(name).map(|s| s.channel.clone()).unwrap_or_else(|| name.into());
        let (kms_ch, fuel_ch, ptc_ch) = (channel(TRIP_KMS), channel(TRIP_FUEL_USED), channel(PER_TIME_CITY));
        let start = NaiveTime::from_hms_opt(8, 0, 0).unwrap();
        for d in &self.days {
            let mut minute = 0i64;
            let mut emit = |w: &mut csv::Writer<W>, ch: &str, value: f64| -> Result<()> {
                let ts = d.date.and_time(start) + Duration::minutes(minute);
                minute += 1;
                w.write_record([
                    ts.format("%Y-%m-%d %H:%M:%S+00:00").to_string().as_str(),
                    &d.vehicle_id,
                    ch,
                    &fmt_f64(value),
                ])?;
                Ok(())
            };
            emit(&mut w, &kms_ch, d.trip_kms)?;
            emit(&mut w, &fuel_ch, d.trip_fuel_used)?;
            emit(&mut w, &ptc_ch, d.per_time_city)?;
            for ((f, &x), &miss) in self.spec.features.iter().zip(&d.values).zip(&d.missing) {
                if miss {
                    continue;
                }
                let spec = registry.get(&f.name).expect("checked in registry()");
                if f.dist.is_count() && spec.aggregator == "sum" {
                    for part in split_count(x) {
                        emit(&mut w, &spec.channel, part)?;
                    }
                } else {
                    emit(&mut w, &spec.channel, x)?;
                }
            }
            // A channel the registry does not know about.
            emit(&mut w, "EngineSpeed", 1500.0)?;
        }
        w.flush().map_err(|e| Error::io("feed.csv", e))?;
        Ok(())
    }

    pub fn write_truth_days<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "vehicle_id", "date", "group", "route_type", "trip_kms", "per_time_city", "base", "planted_fuel",
            "noise", "is_outlier", "is_hot", "avg_fuel", "trip_fuel_used",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        header.extend(self.spec.features.iter().map(|f| f.name.clone()));
        w.write_record(&header)?;
        for d in &self.days {
            let mut rec = vec![
                d.vehicle_id.clone(),
                d.date.to_string(),
                d.group.to_string(),
                d.route_type.to_string(),
                fmt_f64(d.trip_kms),
                fmt_f64(d.per_time_city),
                fmt_f64(d.base),
                fmt_f64(d.planted_fuel),
                fmt_f64(d.noise),
                d.is_outlier.to_string(),
                d.is_hot.to_string(),
                fmt_f64(d.avg_fuel),
                fmt_f64(d.trip_fuel_used),
            ];
            rec.extend(d.values.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("truth_days.csv", e))?;
        Ok(())
    }

    pub fn write_truth_shapes<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "bin_lo", "bin_hi", "value"])?;
        for f in &self.spec.features {
            for (k, v) in f.shape.values.iter().enumerate() {
                let lo = if k == 0 { f64::NEG_INFINITY } else { f.shape.cuts[k - 1] };
                let hi = f.shape.cuts.get(k).copied().unwrap_or(f64::INFINITY);
                w.write_record([f.name.as_str(), &fmt_f64(lo), &fmt_f64(hi), &fmt_f64(*v)])?;
            }
        }
        w.flush().map_err(|e| Error::io("truth_shapes.csv", e))?;
        Ok(())
    }

    /// Planted saving of every feature on every day, against zero for
    /// reference-zero features and otherwise the median over non-outlier
    /// days of the same group and route.
    pub fn truth_savings(&self) -> Result<Vec<TruthSaving>> {
        let registry = self.registry()?;
        let mut pools: BTreeMap<(usize, RouteType, usize), Vec<f64>> = BTreeMap::new();
        for d in self.days.iter().filter(|d| !d.is_outlier) {
            for (i, &x) in d.values.iter().enumerate() {
                pools.entry((d.group, d.route_type, i)).or_default().push(x);
            }
        }
        let medians: BTreeMap<_, f64> = pools
            .into_iter()
            .filter_map(|(k, v)| median(&v).map(|m| (k, m)))
            .collect();
        let mut out = Vec::new();
        for d in &self.days {
            for (i, (f, &x)) in self.spec.features.iter().zip(&d.values).enumerate() {
                let rz = registry.get(&f.name).is_some_and(|s| s.reference_zero);
                let reference = if rz {
                    0.0
                } else {
                    medians.get(&(d.group, d.route_type, i)).copied().unwrap_or(0.0)
                };
                out.push(TruthSaving {
                    vehicle_id: d.vehicle_id.clone(),
                    date: d.date,
                    feature: f.name.clone(),
                    value: x,
                    reference,
                    saving: f.shape.eval(x) - f.shape.eval(reference),
                });
            }
        }
        Ok(out)
    }

    /// Writes feed.csv, registry.csv, vin_map.csv, catalog.csv,
    /// sota_limits.csv, spec.json and the truth tables into `dir`; returns
    /// the written paths.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut file = |name: &str, f: &dyn Fn(&mut std::io::BufWriter<std::fs::File>) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            let fh = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut bw = std::io::BufWriter::new(fh);
            f(&mut bw)?;
            bw.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        file("feed.csv", &|w| self.write_feed(w))?;
        file("registry.csv", &|w| self.registry()?.write_csv(w))?;
        file("vin_map.csv", &|w| self.vin_map().write_csv(w))?;
        file("catalog.csv", &|w| write_table(w, &self.catalog()))?;
        file("sota_limits.csv", &|w| write_table(w, &placeholder_sota_limits()))?;
        file("spec.json", &|w| {
            serde_json::to_writer_pretty(&mut *w, &self.spec)?;
            w.write_all(b"\n").map_err(|e| Error::io("spec.json", e))
        })?;
        file("truth_days.csv", &|w| self.write_truth_days(w))?;
        file("truth_shapes.csv", &|w| self.write_truth_shapes(w))?;
        file("truth_savings.csv", &|w| write_table(w, &self.truth_savings()?))?;
        Ok(written)
    }
}

/// One editable row per taxonomy subcategory with an uninformative range.
pub fn placeholder_sota_limits() -> Vec<crate::evaluate::SotaLimit> {
    Taxonomy::default()
        .categories
        .iter()
        .flat_map(|(c, subs)| {
            subs.iter().map(move |s| crate::evaluate::SotaLimit {
                category: c.clone(),
                subcategory: s.clone(),
                min_pct: 0.0,
                max_pct: 100.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            n_vehicles: 6,
            n_days: 20,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_fuel_equals_planted_sum() {
        let spec = SynthSpec {
            noise_sigma_frac: 0.0,
            outlier_rate: 0.0,
            ..small(1)
        };
        let fleet = generate(&spec).unwrap();
        for d in &fleet.days {
            let sum = spec
                .features
                .iter()
                .zip(&d.values)
                .fold(d.base, |acc, (f, &x)| acc + f.shape.eval(x));
            assert_eq!(d.avg_fuel, sum);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let write = |seed| {
            let mut buf = Vec::new();
            generate(&small(seed)).unwrap().write_feed(&mut buf).unwrap();
            buf
        };
        assert_eq!(write(3), write(3));
        assert_ne!(write(3), write(4));
    }

    #[test]
    fn outlier_count_is_binomial() {
        let spec = SynthSpec {
            n_vehicles: 100,
            n_days: 100,
            outlier_rate: 0.05,
            ..SynthSpec::default()
        };
        let n = generate(&spec).unwrap().days.iter().filter(|d| d.is_outlier).count();
        // 500 expected, sd ≈ 21.8; allow 4 sd
        assert!((413..=587).contains(&n), "{n}");
    }

    #[test]
    fn routes_match_the_classifier() {
        use crate::ingest::{classify_route, RouteThresholds};
        let fleet = generate(&small(5)).unwrap();
        let th = RouteThresholds::default();
        for d in &fleet.days {
            assert_eq!(classify_route(d.per_time_city, d.trip_kms, &th), d.route_type);
        }
    }

    #[test]
    fn spec_json_round_trip_and_validation() {
        let spec = SynthSpec::default();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(SynthSpec::from_json(&json).unwrap(), spec);
        let bad = SynthSpec {
            outlier_rate: 1.5,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn count_split_is_exact() {
        assert_eq!(split_count(10.0), vec![3.0, 3.0, 4.0]);
        assert_eq!(split_count(2.0), vec![2.0]);
        assert_eq!(split_count(0.0), vec![0.0]);
    }
}

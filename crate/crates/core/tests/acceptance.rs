//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always show up.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use fleetfuel::anomaly::LimitSet;
use fleetfuel::design::{build_design, feature_relevance, predict};
use fleetfuel::evaluate::{co2_kg, CO2_KG_PER_LITER};
use fleetfuel::explain::{generate_daily_explanations, InlierMedians, ReferencePolicy};
use fleetfuel::gam::{fit, AdditiveModel, ColumnKind, FeatureBins, ShapeFunction, TrainConfig};
use fleetfuel::ingest::{
    classify_route, read_far_csv, AnomalyLabel, FarRecord, FeatureRegistry, RouteThresholds, RouteType, Taxonomy,
};
use fleetfuel::pipeline::{run, Overrides, PipelineConfig, Stage, TrainSummary};
use fleetfuel::synthgen::{generate, Dist, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config_for(dir: &Path, spec: Option<&Path>) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.output_dir = dir.to_path_buf();
    cfg.paths.synth_spec = spec.map(Path::to_path_buf);
    cfg.fleet = "synthetic".into();
    cfg
}

fn write_spec(dir: &Path, spec: &SynthSpec) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path
}

fn read_records(dir: &Path, name: &str) -> Vec<FarRecord> {
    let registry = FeatureRegistry::load(&dir.join("synth/registry.csv"), &Taxonomy::default()).unwrap();
    read_far_csv(std::fs::File::open(dir.join(name)).unwrap(), &registry).unwrap()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

// 1. y_fuel_new and y_pred of the published id1 rows.
fn id1_anchor() -> Outcome {
    // (feature, relevance, value, reference, y_diff)
    let rows = [
        ("mean_forward_acc", 0.2087, 2.41, 0.48, 0.22),
        ("count_jackrabbit", 0.0568, 9.0, 0.0, 0.06),
        ("mean_speed_hwy", 1.0465, 99.5, 75.73, 1.18),
        ("mean_exterior_temp", 0.2581, 282.65, 287.9, 0.07),
        ("count_harsh_turns", 0.0947, 11.0, 0.0, 0.12),
    ];
    let intercept = 7.25;
    let y_pred_published = 10.39;
    let mut terms = Vec::new();
    let mut medians = InlierMedians::default();
    let mut features = BTreeMap::new();
    for (name, rel, value, reference, y_diff) in rows {
        let cut = (value + reference) / 2.0;
        let values = if value > reference {
            vec![rel - y_diff, rel]
        } else {
            vec![rel, rel - y_diff]
        };
        terms.push(ShapeFunction {
            feature: name.into(),
            kind: ColumnKind::Numeric,
            bins: FeatureBins { cuts: vec![cut] },
            values,
        });
        medians.feature.insert((0, RouteType::Highway, name.into()), reference);
        features.insert(name.to_string(), value);
    }
    // Every other feature of the day, sitting at its reference.
    let shown: f64 = rows.iter().map(|r| r.1).sum();
    let rest = y_pred_published - intercept - shown;
    terms.push(ShapeFunction {
        feature: "trip_kms".into(),
        kind: ColumnKind::Numeric,
        bins: FeatureBins { cuts: vec![] },
        values: vec![rest],
    });
    medians.feature.insert((0, RouteType::Highway, "trip_kms".into()), 100.0);
    let model = AdditiveModel::from_parts(intercept, terms, TrainConfig::default(), 0);
    let record = FarRecord {
        vehicle_id: "id1".into(),
        date: NaiveDate::from_ymd_opt(2020, 4, 17).unwrap(),
        features,
        trip_kms: Some(100.0),
        trip_fuel_used: Some(9.96),
        per_time_city: Some(0.2),
        avg_fuel_consumption: Some(9.96),
        route_type: RouteType::Highway,
        vehicle_group: Some(0),
        vehicle_class: None,
        anomaly_label: AnomalyLabel::Outlier,
    };
    let policy = ReferencePolicy::new(&FeatureRegistry::builtin(), medians);
    let out = generate_daily_explanations(&model, &[record], &policy, &LimitSet::default()).unwrap();
    let diffs_ok = out.len() == 5 && out.iter().zip(&rows).all(|(o, r)| (o.y_diff - r.4).abs() < 1e-9);
    let fuel_new = out[0].y_fuel_new;
    let y_pred = out[0].y_pred;
    let pass = diffs_ok && (fuel_new - 8.31).abs() <= 0.005 && (y_pred - 10.39).abs() <= 0.005;
    outcome(pass, format!("rows={} y_fuel_new={fuel_new:.4} y_pred={y_pred:.4}", out.len()))
}

// 2. liters to kg of CO2.
fn co2_anchor() -> Outcome {
    let kg = co2_kg(14631.0, CO2_KG_PER_LITER);
    outcome((kg - 39157.0).abs() <= 1.0, format!("14631 L -> {kg:.2} kg"))
}

// 3. Held-out accuracy on the default synthetic fleet.
fn synthetic_recovery(dir: &Path, seconds: f64) -> Outcome {
    let summary: TrainSummary =
        serde_json::from_reader(std::fs::File::open(dir.join("metrics.json")).unwrap()).unwrap();
    let m = &summary.metrics;
    let n_days = summary.n_train + summary.n_test;
    let pass = m.median_vehicle_mape < 10.0 && m.adjusted_r2 > 0.67 && seconds < 120.0;
    outcome(
        pass,
        format!(
            "vehicle-days={n_days} median MAPE={:.3}% adjusted R2={:.4} synth+ingest+clean+train={seconds:.1}s",
            m.median_vehicle_mape, m.adjusted_r2
        ),
    )
}

fn truth_records(spec: &SynthSpec) -> (Vec<FarRecord>, fleetfuel::synthgen::SynthFleet) {
    let fleet = generate(spec).unwrap();
    let records = fleet
        .days
        .iter()
        .map(|d| FarRecord {
            vehicle_id: d.vehicle_id.clone(),
            date: d.date,
            features: spec.features.iter().map(|f| f.name.clone()).zip(d.values.iter().copied()).collect(),
            trip_kms: Some(d.trip_kms),
            trip_fuel_used: Some(d.trip_fuel_used),
            per_time_city: Some(d.per_time_city),
            avg_fuel_consumption: Some(d.avg_fuel),
            route_type: d.route_type,
            vehicle_group: Some(d.group as u32),
            vehicle_class: None,
            anomaly_label: AnomalyLabel::Unassigned,
        })
        .collect();
    (records, fleet)
}

// A point well inside step `k` of the feature's support.
fn inside_step(cuts: &[f64], k: usize, dist: Dist) -> f64 {
    let (lo, hi) = match dist {
        Dist::Uniform { lo, hi } => (lo, hi),
        Dist::Count { lo, hi } => (f64::from(lo), f64::from(hi)),
    };
    let a = if k == 0 { lo } else { cuts[k - 1].max(lo) };
    let b = if k == cuts.len() { hi } else { cuts[k].min(hi) };
    let mid = (a + b) / 2.0;
    match dist {
        Dist::Count { .. } => mid.round(),
        Dist::Uniform { .. } => mid,
    }
}

// 4. Noiseless step heights.
fn shape_recovery() -> Outcome {
    let spec = SynthSpec {
        seed: 11,
        noise_sigma_frac: 0.0,
        outlier_rate: 0.0,
        ..SynthSpec::default()
    };
    let (records, _) = truth_records(&spec);
    let numeric: Vec<String> = spec.features.iter().map(|f| f.name.clone()).collect();
    let categorical = vec!["vehicle_group".to_string(), "route_type".to_string()];
    let matrix = build_design(&records, &numeric, &categorical).unwrap();
    let target: Vec<f64> = records.iter().map(|r| r.avg_fuel_consumption.unwrap()).collect();
    let model = fit(&matrix, &target, &TrainConfig::default()).unwrap();
    let mut worst = 0.0f64;
    let mut worst_feature = String::new();
    for f in &spec.features {
        let term = model.term(&f.name).unwrap();
        let range = f.shape.range();
        let x0 = inside_step(&f.shape.cuts, 0, f.dist);
        for k in 1..f.shape.values.len() {
            let xk = inside_step(&f.shape.cuts, k, f.dist);
            let learned = term.eval(xk) - term.eval(x0);
            let planted = f.shape.values[k] - f.shape.values[0];
            let err = (learned - planted).abs() / range;
            if err > worst {
                worst = err;
                worst_feature = f.name.clone();
            }
        }
    }
    outcome(
        worst <= 0.05,
        format!("worst step error {:.2}% of planted range ({worst_feature})", worst * 100.0),
    )
}

// 5. predict = intercept + Σ relevance on random records.
fn decomposition(dir: &Path) -> Outcome {
    let text = std::fs::read_to_string(dir.join("model.json")).unwrap();
    let model = AdditiveModel::from_json(&text).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let routes = [RouteType::City, RouteType::Combined, RouteType::Highway];
    let mut mismatches = 0;
    for i in 0..10_000 {
        let mut features = BTreeMap::new();
        let mut trip_kms = None;
        for t in &model.terms {
            if let ColumnKind::Numeric = t.kind {
                let cuts = &t.bins.cuts;
                let lo = cuts.first().copied().unwrap_or(0.0);
                let hi = cuts.last().copied().unwrap_or(1.0);
                let span = if hi > lo { hi - lo } else { 1.0 };
                let x = rng.random_range(lo - 0.2 * span..hi + 0.2 * span);
                if t.feature == "trip_kms" {
                    trip_kms = Some(x);
                } else {
                    features.insert(t.feature.clone(), x);
                }
            }
        }
        let r = FarRecord {
            vehicle_id: format!("r{i}"),
            date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            features,
            trip_kms,
            trip_fuel_used: None,
            per_time_city: None,
            avg_fuel_consumption: None,
            route_type: routes[rng.random_range(0..3)],
            vehicle_group: Some(rng.random_range(0..4)),
            vehicle_class: Some(rng.random_range(0..3)),
            anomaly_label: AnomalyLabel::Unassigned,
        };
        let p = predict(&model, &r).unwrap();
        let sum = feature_relevance(&model, &r)
            .unwrap()
            .iter()
            .fold(model.intercept, |acc, (_, v)| acc + v);
        if p != sum {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("10000 records, {mismatches} mismatches"))
}

// 6. Independent check of the filtered explanation CSV.
fn business_rules(dir: &Path) -> Outcome {
    let mut impact: BTreeMap<String, String> = BTreeMap::new();
    let mut reg = csv::Reader::from_path(dir.join("synth/registry.csv")).unwrap();
    let h = reg.headers().unwrap().clone();
    let col = |h: &csv::StringRecord, name: &str| h.iter().position(|c| c == name).unwrap();
    for row in reg.records() {
        let row = row.unwrap();
        impact.insert(row[col(&h, "name")].to_string(), row[col(&h, "impact_type")].to_string());
    }

    // Inlier medians by (group, route, column), with fleet fallback.
    let mut far = csv::Reader::from_path(dir.join("far_clean.csv")).unwrap();
    let fh = far.headers().unwrap().clone();
    let mut by_group: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut fleet: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in far.records() {
        let row = row.unwrap();
        if &row[col(&fh, "anomaly_label")] != "inlier" {
            continue;
        }
        let g = row[col(&fh, "vehicle_group")].to_string();
        let r = row[col(&fh, "route_type")].to_string();
        for (i, name) in fh.iter().enumerate() {
            let Ok(v) = row[i].parse::<f64>() else { continue };
            by_group.entry((g.clone(), r.clone(), name.to_string())).or_default().push(v);
            fleet.entry(name.to_string()).or_default().push(v);
        }
    }
    let mut med = |g: &str, r: &str, name: &str| -> f64 {
        if let Some(v) = by_group.get_mut(&(g.to_string(), r.to_string(), name.to_string())) {
            if let Some(m) = median(v) {
                return m;
            }
        }
        fleet.get_mut(name).and_then(|v| median(v)).unwrap_or(0.0)
    };

    let mut ex = csv::Reader::from_path(dir.join("explanations.csv")).unwrap();
    let eh = ex.headers().unwrap().clone();
    let mut day_total: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    let (mut n, mut br1, mut br2, mut br3, mut br4) = (0, 0, 0, 0, 0);
    for row in ex.records() {
        let row = row.unwrap();
        n += 1;
        let get = |name: &str| row[col(&eh, name)].to_string();
        let num = |name: &str| row[col(&eh, name)].parse::<f64>().unwrap();
        let feature = get("feature");
        let (g, r) = (get("vehicle_group"), get("route_type"));
        let avg = num("avg_fuel_consumption");
        let y_diff = num("y_diff");
        let e = day_total.entry((get("vehicle_id"), get("date_tx"))).or_insert((0.0, avg));
        e.0 += y_diff;
        if feature.contains('=') || !impact.contains_key(&feature) {
            br1 += 1;
            continue;
        }
        if y_diff / avg < 0.01 {
            br2 += 1;
        }
        if avg <= med(&g, &r, "avg_fuel_consumption") {
            br3 += 1;
        }
        let m = med(&g, &r, &feature);
        let value = num("feature_value");
        let ok = match impact[&feature].as_str() {
            "Positive" => value > m,
            _ => value < m,
        };
        if !ok {
            br4 += 1;
        }
    }
    let br5 = day_total.values().filter(|(t, avg)| *t > 0.8 * avg).count();
    let pass = n > 0 && br1 + br2 + br3 + br4 + br5 == 0;
    outcome(
        pass,
        format!(
            "{n} rows over {} days; violations BR1={br1} BR2={br2} BR3={br3} BR4={br4} BR5={br5}",
            day_total.len()
        ),
    )
}

// 7. Planted outliers through ingest and two-phase cleaning.
fn anomaly_recall(root: &Path) -> Outcome {
    let dir = root.join("recall");
    let spec = SynthSpec {
        seed: 7,
        n_vehicles: 100,
        n_days: 100,
        outlier_rate: 0.05,
        outlier_magnitude: 3.0,
        ..SynthSpec::default()
    };
    let spec_path = write_spec(&root.join("recall-spec"), &spec);
    let cfg = config_for(&dir, Some(&spec_path));
    for s in [Stage::Synth, Stage::Ingest, Stage::Clean] {
        run(s, &cfg, &Overrides::default()).unwrap();
    }
    let fleet = generate(&spec).unwrap();
    let truth: BTreeMap<(String, NaiveDate), bool> =
        fleet.days.iter().map(|d| ((d.vehicle_id.clone(), d.date), d.is_outlier)).collect();
    let before = read_records(&dir, "far.csv");
    let after: BTreeMap<(String, NaiveDate), AnomalyLabel> = read_records(&dir, "far_clean.csv")
        .into_iter()
        .map(|r| (r.key(), r.anomaly_label))
        .collect();
    let (mut tp, mut fneg, mut fp, mut tn) = (0, 0, 0, 0);
    for r in &before {
        // Removed in the first pass or labelled outlier in the second.
        let flagged = match after.get(&r.key()) {
            None => r.avg_fuel_consumption.is_some(),
            Some(l) => *l == AnomalyLabel::Outlier,
        };
        match (truth[&r.key()], flagged) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let recall = tp as f64 / (tp + fneg) as f64;
    let fpr = fp as f64 / (fp + tn) as f64;
    outcome(
        before.len() == 10_000 && recall >= 0.95 && fpr <= 0.08,
        format!(
            "{} vehicle-days, {} planted; recall={recall:.4} FPR={fpr:.4}",
            before.len(),
            tp + fneg
        ),
    )
}

// 8. Explained vs anomalous extra fuel. Injected fuel noise is removed by
// the first cleaning pass; the remaining outliers come from hot days whose
// extra fuel is carried by the features.
fn outliers_explained(root: &Path) -> Outcome {
    let dir = root.join("h3");
    let spec = SynthSpec {
        seed: 8,
        n_vehicles: 100,
        n_days: 100,
        hot_day_rate: 0.05,
        outlier_rate: 0.05,
        ..SynthSpec::default()
    };
    let spec_path = write_spec(&root.join("h3-spec"), &spec);
    let cfg = config_for(&dir, Some(&spec_path));
    run(Stage::Synth, &cfg, &Overrides::default()).unwrap();
    run(Stage::Pipeline, &cfg, &Overrides::default()).unwrap();
    let report: serde_json::Value =
        serde_json::from_reader(std::fs::File::open(dir.join("evaluation.json")).unwrap()).unwrap();
    let o = &report["outliers"];
    let explained = o["median_explained"].as_f64().unwrap_or(f64::NAN);
    let anomalous = o["median_anomalous"].as_f64().unwrap_or(f64::NAN);
    let p = o["p_value"].as_f64().unwrap_or(f64::NAN);
    let n = o["n_outlier_days"].as_u64().unwrap_or(0);
    outcome(
        explained >= anomalous && p < 0.01,
        format!("{n} outlier days; median explained={explained:.4} anomalous={anomalous:.4} p={p:.3e}"),
    )
}

fn brute_route(ptc: f64, kms: f64) -> RouteType {
    let highway = ptc <= 0.5 && kms >= 30.0;
    let city = ptc >= 0.65 && kms <= 30.0;
    if highway {
        RouteType::Highway
    } else if city {
        RouteType::City
    } else {
        RouteType::Combined
    }
}

// 9. Route rules against a direct re-implementation.
fn route_classifier() -> Outcome {
    let th = RouteThresholds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ptc_edges = [0.0, 0.5, 0.65, 1.0];
    let kms_edges = [0.0, 30.0];
    let mut disagree = 0;
    for i in 0..10_000 {
        let ptc = if i % 4 == 0 {
            ptc_edges[rng.random_range(0..ptc_edges.len())]
        } else {
            rng.random_range(0.0..=1.0)
        };
        let kms = if i % 3 == 0 {
            kms_edges[rng.random_range(0..kms_edges.len())]
        } else {
            rng.random_range(0.0..400.0)
        };
        if classify_route(ptc, kms, &th) != brute_route(ptc, kms) {
            disagree += 1;
        }
    }
    outcome(disagree == 0, format!("10000 pairs, {disagree} disagreements"))
}

// 10. Two full runs, byte for byte.
fn determinism(a: &Path, b: &Path) -> Outcome {
    let outputs = |dir: &Path| -> BTreeMap<String, String> {
        let m: serde_json::Value =
            serde_json::from_reader(std::fs::File::open(dir.join("manifest-pipeline.json")).unwrap()).unwrap();
        serde_json::from_value(m["outputs"].clone()).unwrap()
    };
    let (oa, ob) = (outputs(a), outputs(b));
    let mut differing: BTreeSet<String> = BTreeSet::new();
    for name in oa.keys().chain(ob.keys()) {
        let x = std::fs::read(a.join(name)).ok();
        let y = std::fs::read(b.join(name)).ok();
        if x.is_none() || x != y {
            differing.insert(name.clone());
        }
    }
    let required = ["model.json", "explanations.csv", "evaluation.json", "monthly_impact.csv"];
    let present = required.iter().all(|r| oa.contains_key(*r));
    outcome(
        present && differing.is_empty() && oa == ob,
        format!("{} artifacts compared (1 vs 4 workers), differing: {differing:?}", oa.len()),
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");

    let start = Instant::now();
    let cfg_a = config_for(&a, None);
    for s in [Stage::Synth, Stage::Ingest, Stage::Clean, Stage::Train] {
        run(s, &cfg_a, &Overrides::default()).unwrap();
    }
    let train_seconds = start.elapsed().as_secs_f64();
    run(
        Stage::Pipeline,
        &cfg_a,
        &Overrides {
            workers: Some(1),
            ..Overrides::default()
        },
    )
    .unwrap();
    let cfg_b = config_for(&b, None);
    run(Stage::Synth, &cfg_b, &Overrides::default()).unwrap();
    run(
        Stage::Pipeline,
        &cfg_b,
        &Overrides {
            workers: Some(4),
            ..Overrides::default()
        },
    )
    .unwrap();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("explanation anchor id1", Box::new(id1_anchor)),
        ("CO2 anchor", Box::new(co2_anchor)),
        ("synthetic accuracy", Box::new(|| synthetic_recovery(&a, train_seconds))),
        ("shape recovery", Box::new(shape_recovery)),
        ("decomposition identity", Box::new(|| decomposition(&a))),
        ("business rules", Box::new(|| business_rules(&a))),
        ("anomaly recall", Box::new(|| anomaly_recall(root.path()))),
        ("explained vs anomalous", Box::new(|| outliers_explained(root.path()))),
        ("route classifier", Box::new(route_classifier)),
        ("determinism", Box::new(|| determinism(&a, &b))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

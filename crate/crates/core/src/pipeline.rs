//! Stage runner: ingest → clean → train → explain → evaluate → impact, plus
//! synthetic fleet generation. Each run leaves a manifest next to its
//! artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::{flag_outliers, two_phase_clean, LimitSet};
use crate::design::{build_design, DEFAULT_CATEGORICALS};
use crate::evaluate::{
    aggregate_category_impact, catalog_mape, evaluate_model, load_sota_limits, monthly_impact, outlier_vs_explained,
    train_test_split, Catalog, CatalogReport, ChinCategory, LewisCategory, ModelMetrics, OutlierComparison,
    SignedRankTest, CO2_KG_PER_LITER,
};
use crate::explain::{
    apply_business_rules, generate_daily_explanations, read_explanations_csv, write_audit_jsonl,
    write_explanations_csv, ExplanationRow, InlierMedians, ReferencePolicy, RuleContext, RuleRegistry,
    DEFAULT_MAX_SAVING_SHARE, DEFAULT_MIN_RELATIVE_IMPACT, DEFAULT_RULE_ORDER,
};
use crate::gam::{fit_with_report, AdditiveModel, ColumnKind, FitReport, TrainConfig, MODEL_FORMAT_VERSION};
use crate::ingest::{
    aggregate_daily, assign_vehicle_class, classify_route, impute_missing, quality_filter, read_far_csv,
    read_feed_file, read_vehicles_csv, write_far_csv, write_vehicles_csv, AggregatorRegistry, AnomalyLabel,
    FarRecord, FeatureRegistry, FuelLimits, RemovalReason, Reject, RouteThresholds, RouteType, Taxonomy,
    VehicleClassTable, VinMap, MIN_TRIP_KMS,
};
use crate::stats::median;
use crate::synthgen::{generate, SynthSpec};
use crate::{Error, Result};

pub const SYNTH_DIR: &str = "synth";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Clean,
    Train,
    Explain,
    Evaluate,
    Impact,
    Synth,
    Pipeline,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Clean => "clean",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Evaluate => "evaluate",
            Stage::Impact => "impact",
            Stage::Synth => "synth",
            Stage::Pipeline => "pipeline",
        }
    }

    /// Stages run by `pipeline`, in order.
    pub const CHAIN: [Stage; 6] = [
        Stage::Ingest,
        Stage::Clean,
        Stage::Train,
        Stage::Explain,
        Stage::Evaluate,
        Stage::Impact,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Unset inputs default to the files `synth` writes under
    /// `<output_dir>/synth`.
    pub feed: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub vin_map: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub sota_limits: Option<PathBuf>,
    pub synth_spec: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            feed: None,
            registry: None,
            vin_map: None,
            catalog: None,
            sota_limits: None,
            synth_spec: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub order: Vec<String>,
    pub min_relative_impact: f64,
    pub max_saving_share: f64,
}

impl Default for RulesConfig {
    fn default() -> Self {
        RulesConfig {
            order: DEFAULT_RULE_ORDER.iter().map(|s| s.to_string()).collect(),
            min_relative_impact: DEFAULT_MIN_RELATIVE_IMPACT,
            max_saving_share: DEFAULT_MAX_SAVING_SHARE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Rules applied to the rows aggregated per category.
    pub category_rule_order: Vec<String>,
    /// L/100 km subtracted from the catalog value for "% below catalog".
    pub catalog_offset: f64,
    pub co2_kg_per_liter: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            category_rule_order: ["BR1", "BR3", "BR2"].map(String::from).to_vec(),
            catalog_offset: 1.0,
            co2_kg_per_liter: CO2_KG_PER_LITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drives the train/test split and the boosting bags.
    pub seed: u64,
    /// Worker threads; 0 lets the runtime choose.
    pub workers: usize,
    pub fleet: String,
    pub min_trip_kms: f64,
    pub categoricals: Vec<String>,
    /// Feed channels dropped without a warning.
    pub ignore_channels: Vec<String>,
    pub paths: PathsConfig,
    pub route: RouteThresholds,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub rules: RulesConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 0,
            fleet: "fleet".into(),
            min_trip_kms: MIN_TRIP_KMS,
            categoricals: DEFAULT_CATEGORICALS.map(String::from).to_vec(),
            ignore_channels: Vec::new(),
            paths: PathsConfig::default(),
            route: RouteThresholds::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            rules: RulesConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the config echoed in a run manifest when the
    /// file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            return Ok(manifest.config);
        }
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies command-line overrides and returns them by name.
    pub fn apply(&mut self, overrides: &Overrides) -> BTreeMap<String, String> {
        let mut applied = BTreeMap::new();
        if let Some(seed) = overrides.seed {
            self.seed = seed;
            applied.insert("seed".into(), seed.to_string());
        }
        if let Some(workers) = overrides.workers {
            self.workers = workers;
            applied.insert("workers".into(), workers.to_string());
        }
        if let Some(out) = &overrides.out {
            self.paths.output_dir = out.clone();
            applied.insert("output_dir".into(), out.display().to_string());
        }
        applied
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction {} is not in (0, 1)",
                self.split.train_fraction
            )));
        }
        let rules = RuleRegistry::with_builtin();
        rules.chain(&self.rules.order)?;
        rules.chain(&self.evaluate.category_rule_order)?;
        if !(self.rules.max_saving_share > 0.0) || self.rules.min_relative_impact < 0.0 {
            return Err(Error::Config("rule thresholds must be non-negative and the saving cap positive".into()));
        }
        Ok(())
    }

    fn synth_default(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(SYNTH_DIR).join(name)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub fleetfuel_version: String,
    pub model_format_version: u32,
    pub seed: u64,
    pub config: PipelineConfig,
    pub overrides: BTreeMap<String, String>,
    /// sha256 of every file read; artifacts of earlier stages are keyed
    /// relative to the output directory.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a PipelineConfig) -> Result<Self> {
        let out = cfg.paths.output_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Run {
            cfg,
            out,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        let key = self.relative(path);
        let digest = sha256_file(path)?;
        self.inputs.insert(key, digest);
        Ok(())
    }

    /// Artifact produced by `stage`.
    fn artifact(&mut self, stage: Stage, name: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        if !path.is_file() {
            return Err(Error::MissingStage {
                stage: stage.name().into(),
                path,
            });
        }
        self.record_input(&path)?;
        Ok(path)
    }

    /// Configured input file, or its default when that exists.
    fn optional_input(&mut self, configured: &Option<PathBuf>, default_name: &str) -> Result<Option<PathBuf>> {
        let path = match configured {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "configured input not found"),
                    ));
                }
                p.clone()
            }
            None => {
                let p = self.cfg.synth_default(default_name);
                if !p.is_file() {
                    return Ok(None);
                }
                p
            }
        };
        self.record_input(&path)?;
        Ok(Some(path))
    }

    fn required_input(&mut self, configured: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        match self.optional_input(configured, default_name)? {
            Some(p) => Ok(p),
            None => {
                let p = self.cfg.synth_default(default_name);
                Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input not found (run `synth` or set the path)"),
                ))
            }
        }
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        drop(w);
        let digest = sha256_file(&path)?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n").map_err(|e| Error::io(name, e))
        })
    }

    fn open(&self, path: &Path) -> Result<BufReader<File>> {
        Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
    }

    fn registry(&mut self) -> Result<FeatureRegistry> {
        match self.optional_input(&self.cfg.paths.registry.clone(), "registry.csv")? {
            Some(p) => FeatureRegistry::load(&p, &Taxonomy::default()),
            None => {
                log::info!("no registry file, using the builtin registry");
                Ok(FeatureRegistry::builtin())
            }
        }
    }

    fn far(&mut self, stage: Stage, name: &str, registry: &FeatureRegistry) -> Result<Vec<FarRecord>> {
        let path = self.artifact(stage, name)?;
        read_far_csv(self.open(&path)?, registry)
    }

    fn model(&mut self) -> Result<AdditiveModel> {
        let path = self.artifact(Stage::Train, "model.json")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        AdditiveModel::from_json(&text)
    }

    fn limits(&mut self) -> Result<LimitSet> {
        let path = self.artifact(Stage::Clean, "limits.csv")?;
        LimitSet::read_csv(self.open(&path)?)
    }

    fn explanations(&mut self) -> Result<Vec<ExplanationRow>> {
        let path = self.artifact(Stage::Explain, "explanations.csv")?;
        read_explanations_csv(self.open(&path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub n_readings: usize,
    pub n_rejects: usize,
    pub rejects: Vec<Reject>,
    pub unknown_channels: BTreeMap<String, usize>,
    pub n_vehicle_days: usize,
    pub n_vehicles: usize,
    pub n_kept: usize,
    pub removed: BTreeMap<RemovalReason, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub removed: BTreeMap<RemovalReason, usize>,
    pub n_inliers: usize,
    pub n_outliers: usize,
    pub n_unassigned: usize,
    pub flags: Vec<crate::anomaly::GroupFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub numeric_features: Vec<String>,
    pub categorical_features: Vec<String>,
    pub metrics: ModelMetrics,
    pub fit: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub fleet: String,
    pub n_test: usize,
    pub n_vehicles: usize,
    pub median_vehicle_mape: f64,
    pub lewis_category: LewisCategory,
    pub pooled_mape: f64,
    pub r2: f64,
    pub adjusted_r2: f64,
    pub chin_category: ChinCategory,
    pub n_predictors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummaryRow {
    pub fleet: String,
    pub n_outlier_days: usize,
    pub n_explained_days: usize,
    pub median_explained: Option<f64>,
    pub median_anomalous: Option<f64>,
    pub w_plus: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub fleet: String,
    pub model: ModelMetrics,
    pub outliers: OutlierSummaryRow,
    pub outlier_test: Option<SignedRankTest>,
    pub catalog: Option<CatalogReport>,
    pub n_explanations: usize,
    pub n_category_rows: usize,
}

fn plain_feature_names(registry: &FeatureRegistry) -> Vec<String> {
    registry.plain_features().map(|s| s.name.clone()).collect()
}

fn stage_ingest(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let feed_path = run.required_input(&cfg.paths.feed.clone(), "feed.csv")?;
    let registry = run.registry()?;
    let vins = match run.optional_input(&cfg.paths.vin_map.clone(), "vin_map.csv")? {
        Some(p) => VinMap::load(&p)?,
        None => {
            log::warn!("no VIN map, every vehicle joins one unknown group");
            VinMap::new(Vec::new())
        }
    };
    let parse = read_feed_file(&feed_path)?;
    let ignore: BTreeSet<String> = cfg.ignore_channels.iter().cloned().collect();
    let agg = aggregate_daily(&parse.readings, &registry, &AggregatorRegistry::with_builtin(), &ignore);
    let n_vehicle_days = agg.records.len();
    let mut vehicles = vins.identify(agg.records.iter().map(|r| r.vehicle_id.as_str()));
    let group: BTreeMap<String, u32> = vehicles.iter().map(|v| (v.vehicle_id.clone(), v.vehicle_group)).collect();
    let mut records = agg.records;
    for r in records.iter_mut() {
        r.vehicle_group = group.get(&r.vehicle_id).copied();
        r.route_type = match (r.per_time_city, r.trip_kms) {
            (Some(p), Some(k)) => classify_route(p, k, &cfg.route),
            _ => RouteType::Combined,
        };
    }
    let (mut kept, removal) = quality_filter(records, &FuelLimits::default(), cfg.min_trip_kms);

    let mut group_fuel: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in &kept {
        if let (Some(g), Some(a)) = (r.vehicle_group, r.avg_fuel_consumption) {
            group_fuel.entry(g).or_default().push(a);
        }
    }
    let table = VehicleClassTable::default();
    let class: BTreeMap<u32, u8> = group_fuel
        .iter()
        .filter_map(|(g, v)| median(v).map(|m| (*g, assign_vehicle_class(m, &table))))
        .collect();
    for r in kept.iter_mut() {
        r.vehicle_class = r.vehicle_group.and_then(|g| class.get(&g).copied());
    }
    for v in vehicles.iter_mut() {
        v.vehicle_class = class.get(&v.vehicle_group).copied();
    }

    let report = IngestReport {
        n_readings: parse.readings.len(),
        n_rejects: parse.rejects.len(),
        rejects: parse.rejects,
        unknown_channels: agg.unknown_channels,
        n_vehicle_days,
        n_vehicles: vehicles.len(),
        n_kept: kept.len(),
        removed: removal.counts,
    };
    run.write("far.csv", |w| write_far_csv(w, &kept, &registry))?;
    run.write("vehicles.csv", |w| write_vehicles_csv(w, &vehicles))?;
    run.write_json("ingest_report.json", &report)
}

fn stage_clean(run: &mut Run) -> Result<()> {
    let registry = run.registry()?;
    let records = run.far(Stage::Ingest, "far.csv", &registry)?;
    let n_input = records.len();
    let outcome = two_phase_clean(records);
    let records = impute_missing(outcome.records, &plain_feature_names(&registry));
    let records = flag_outliers(records, &outcome.limits);
    let count = |l: AnomalyLabel| records.iter().filter(|r| r.anomaly_label == l).count();
    let report = CleanReport {
        n_input,
        n_kept: records.len(),
        removed: outcome.report.counts,
        n_inliers: count(AnomalyLabel::Inlier),
        n_outliers: count(AnomalyLabel::Outlier),
        n_unassigned: count(AnomalyLabel::Unassigned),
        flags: outcome.limits.flags.clone(),
    };
    run.write("limits.csv", |w| outcome.limits.write_csv(w))?;
    run.write("far_clean.csv", |w| write_far_csv(w, &records, &registry))?;
    run.write_json("clean_report.json", &report)
}

/// Train and test partitions of the cleaned records.
pub fn split_records(records: &[FarRecord], cfg: &PipelineConfig) -> Result<(Vec<FarRecord>, Vec<FarRecord>)> {
    let (train, test) = train_test_split(records.len(), cfg.split.train_fraction, cfg.seed)?;
    Ok((
        train.iter().map(|&i| records[i].clone()).collect(),
        test.iter().map(|&i| records[i].clone()).collect(),
    ))
}

/// Numeric model inputs: every registry feature the model takes.
pub fn numeric_features(registry: &FeatureRegistry) -> Vec<String> {
    registry.model_features().map(|s| s.name.clone()).collect()
}

/// Fits the fuel model on `train` with the pipeline's seed.
pub fn train_model(
    train: &[FarRecord],
    registry: &FeatureRegistry,
    cfg: &PipelineConfig,
) -> Result<(AdditiveModel, FitReport)> {
    let numeric = numeric_features(registry);
    let matrix = build_design(train, &numeric, &cfg.categoricals)?;
    let target = train
        .iter()
        .map(|r| {
            r.avg_fuel_consumption
                .ok_or_else(|| Error::InvalidInput(format!("{} {}: missing target", r.vehicle_id, r.date)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    fit_with_report(&matrix, &target, &train_cfg)
}

fn stage_train(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let registry = run.registry()?;
    let records = run.far(Stage::Clean, "far_clean.csv", &registry)?;
    let (train, test) = split_records(&records, cfg)?;
    let (model, fit) = train_model(&train, &registry, cfg)?;
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    let metrics = evaluate_model(&model, &test.iter().collect::<Vec<_>>())?;
    let summary = TrainSummary {
        n_train: train.len(),
        n_test: test.len(),
        numeric_features: numeric_features(&registry),
        categorical_features: cfg.categoricals.clone(),
        metrics,
        fit,
    };
    let json = model.to_json()?;
    run.write("model.json", |w| {
        w.write_all(json.as_bytes()).map_err(|e| Error::io("model.json", e))
    })?;
    run.write("shapes.csv", |w| model.write_shapes_csv(w))?;
    run.write_json("metrics.json", &summary)
}

/// Indicator columns of the model.
pub fn indicator_columns(model: &AdditiveModel) -> BTreeSet<String> {
    model
        .terms
        .iter()
        .filter(|t| matches!(t.kind, ColumnKind::OneHot { .. }))
        .map(|t| t.feature.clone())
        .collect()
}

/// Explanations after the rule chain `order`, with the audit trail.
pub fn explain_records(
    model: &AdditiveModel,
    records: &[FarRecord],
    limits: &LimitSet,
    registry: &FeatureRegistry,
    cfg: &PipelineConfig,
    order: &[String],
) -> Result<(Vec<ExplanationRow>, Vec<crate::explain::AuditEntry>)> {
    let medians = InlierMedians::from_records(records, &plain_feature_names(registry));
    let policy = ReferencePolicy::new(registry, medians);
    let rows = generate_daily_explanations(model, records, &policy, limits)?;
    let categorical = indicator_columns(model);
    let ctx = RuleContext {
        registry,
        medians: &policy.medians,
        categorical: &categorical,
        min_relative_impact: cfg.rules.min_relative_impact,
        max_saving_share: cfg.rules.max_saving_share,
    };
    let rules = RuleRegistry::with_builtin();
    let chain = rules.chain(order)?;
    Ok(apply_business_rules(rows, &chain, &ctx))
}

fn stage_explain(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let registry = run.registry()?;
    let model = run.model()?;
    let records = run.far(Stage::Clean, "far_clean.csv", &registry)?;
    let limits = run.limits()?;
    let (rows, audit) = explain_records(&model, &records, &limits, &registry, cfg, &cfg.rules.order)?;
    run.write("explanations.csv", |w| write_explanations_csv(w, &rows))?;
    run.write("audit.jsonl", |w| write_audit_jsonl(w, &audit))
}

fn stage_evaluate(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let registry = run.registry()?;
    let model = run.model()?;
    let metrics_path = run.artifact(Stage::Train, "metrics.json")?;
    let summary: TrainSummary = serde_json::from_reader(run.open(&metrics_path)?)?;
    let records = run.far(Stage::Clean, "far_clean.csv", &registry)?;
    let limits = run.limits()?;
    let rows = run.explanations()?;
    let vehicles_path = run.artifact(Stage::Ingest, "vehicles.csv")?;
    let vehicles = read_vehicles_csv(run.open(&vehicles_path)?)?;
    let sota = match run.optional_input(&cfg.paths.sota_limits.clone(), "sota_limits.csv")? {
        Some(p) => load_sota_limits(&p)?,
        None => {
            log::warn!("no literature limits table, category impacts carry no verdict");
            Vec::new()
        }
    };
    let catalog = match run.optional_input(&cfg.paths.catalog.clone(), "catalog.csv")? {
        Some(p) => Some(Catalog::load(&p)?),
        None => {
            log::warn!("no catalog, skipping the catalog comparison");
            None
        }
    };
    let fleet = cfg.fleet.as_str();
    let m = &summary.metrics;
    let metrics_row = MetricsRow {
        fleet: fleet.to_string(),
        n_test: m.n_test,
        n_vehicles: m.n_vehicles,
        median_vehicle_mape: m.median_vehicle_mape,
        lewis_category: m.lewis_category,
        pooled_mape: m.pooled_mape,
        r2: m.r2,
        adjusted_r2: m.adjusted_r2,
        chin_category: m.chin_category,
        n_predictors: m.n_predictors,
    };

    let (category_rows, _) =
        explain_records(&model, &records, &limits, &registry, cfg, &cfg.evaluate.category_rule_order)?;
    let categories = aggregate_category_impact(&category_rows, &registry, &sota, fleet);

    let comparison: OutlierComparison = outlier_vs_explained(&rows, &limits, &records, fleet);
    let outliers = OutlierSummaryRow {
        fleet: fleet.to_string(),
        n_outlier_days: comparison.n_outlier_days,
        n_explained_days: comparison.n_explained_days,
        median_explained: comparison.median_explained,
        median_anomalous: comparison.median_anomalous,
        w_plus: comparison.test.map(|t| t.w_plus),
        p_value: comparison.test.map(|t| t.p_value),
    };

    let medians = InlierMedians::from_records(&records, &plain_feature_names(&registry));
    let catalog_report = catalog
        .as_ref()
        .map(|c| catalog_mape(&rows, &records, &vehicles, c, &medians, cfg.evaluate.catalog_offset, fleet));

    run.write("metrics_model.csv", |w| crate::csvfmt::write_table(w, &[metrics_row]))?;
    run.write("category_impact.csv", |w| crate::csvfmt::write_table(w, &categories))?;
    run.write("outliers_vs_explained.csv", |w| crate::csvfmt::write_table(w, &comparison.days))?;
    if let Some(r) = &catalog_report {
        run.write("new_fuel_vs_catalog.csv", |w| crate::csvfmt::write_table(w, std::slice::from_ref(r)))?;
    }
    let report = EvaluationReport {
        fleet: fleet.to_string(),
        model: summary.metrics.clone(),
        outliers,
        outlier_test: comparison.test,
        catalog: catalog_report,
        n_explanations: rows.len(),
        n_category_rows: category_rows.len(),
    };
    run.write_json("evaluation.json", &report)
}

fn stage_impact(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let registry = run.registry()?;
    let records = run.far(Stage::Clean, "far_clean.csv", &registry)?;
    let rows = run.explanations()?;
    let months = monthly_impact(&rows, &records, &registry, cfg.evaluate.co2_kg_per_liter, &cfg.fleet);
    run.write("monthly_impact.csv", |w| crate::csvfmt::write_table(w, &months))
}

fn stage_synth(run: &mut Run, seed: Option<u64>) -> Result<()> {
    let cfg = run.cfg;
    let mut spec = match &cfg.paths.synth_spec {
        Some(p) => {
            run.record_input(p)?;
            SynthSpec::load(p)?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let fleet = generate(&spec)?;
    let dir = run.out.join(SYNTH_DIR);
    for path in fleet.write_all(&dir)? {
        let key = run.relative(&path);
        let digest = sha256_file(&path)?;
        run.outputs.insert(key, digest);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: PathBuf,
    pub outputs: BTreeMap<String, String>,
}

/// Runs one command with `overrides` applied on top of `config`, inside a
/// worker pool of the configured size, and writes `manifest-<command>.json`.
pub fn run(stage: Stage, config: &PipelineConfig, overrides: &Overrides) -> Result<RunOutcome> {
    let mut cfg = config.clone();
    let applied = cfg.apply(overrides);
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    pool.install(|| {
        let mut run = Run::new(&cfg)?;
        match stage {
            Stage::Ingest => stage_ingest(&mut run)?,
            Stage::Clean => stage_clean(&mut run)?,
            Stage::Train => stage_train(&mut run)?,
            Stage::Explain => stage_explain(&mut run)?,
            Stage::Evaluate => stage_evaluate(&mut run)?,
            Stage::Impact => stage_impact(&mut run)?,
            Stage::Synth => stage_synth(&mut run, overrides.seed)?,
            Stage::Pipeline => {
                for s in Stage::CHAIN {
                    log::info!("stage {}", s.name());
                    match s {
                        Stage::Ingest => stage_ingest(&mut run)?,
                        Stage::Clean => stage_clean(&mut run)?,
                        Stage::Train => stage_train(&mut run)?,
                        Stage::Explain => stage_explain(&mut run)?,
                        Stage::Evaluate => stage_evaluate(&mut run)?,
                        _ => stage_impact(&mut run)?,
                    }
                }
            }
        }
        // Inputs produced within this run are not external inputs.
        let produced: BTreeSet<String> = run.outputs.keys().cloned().collect();
        let inputs = run
            .inputs
            .iter()
            .filter(|(k, _)| !produced.contains(*k) || stage != Stage::Pipeline)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let manifest = Manifest {
            command: stage.name().into(),
            fleetfuel_version: env!("CARGO_PKG_VERSION").into(),
            model_format_version: MODEL_FORMAT_VERSION,
            seed: cfg.seed,
            config: cfg.clone(),
            overrides: applied,
            inputs,
            outputs: run.outputs.clone(),
        };
        let path = run.out.join(format!("manifest-{}.json", stage.name()));
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(RunOutcome {
            manifest: path,
            outputs: run.outputs,
        })
    })
}

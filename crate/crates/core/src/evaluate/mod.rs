//! Model metrics, domain-knowledge evaluations and fuel/CO2 impact.

mod domain;
mod impact;
mod metrics;
mod wilcoxon;

pub use domain::{
    aggregate_category_impact, catalog_mape, day_subcategory_impacts, load_sota_limits, outlier_vs_explained,
    read_sota_limits, verdict, Catalog, CatalogEntry, CatalogReport, CategoryImpact, OutlierComparison, OutlierDay,
    SotaLimit, Verdict, NO_VERDICT_SUBCATEGORIES,
};
pub use impact::{co2_kg, monthly_impact, MonthlyImpact, CO2_KG_PER_LITER, DRIVING_BEHAVIOUR};
pub use metrics::{
    adjusted_r2, classify_mape, classify_r2, evaluate_model, mape, train_test_split, AdjustedR2, ChinCategory,
    LewisCategory, Mape, ModelMetrics, MIN_SPLIT_RECORDS,
};
pub use wilcoxon::{signed_rank_test, SignedRankTest, TestMethod, EXACT_MAX_N};

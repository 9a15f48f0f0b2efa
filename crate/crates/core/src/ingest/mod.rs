//! Telemetry ingestion: raw feed parsing, daily aggregation into Fleet
//! Analytics Records (FAR), route typing, vehicle identity, quality filters
//! and imputation.

mod aggregate;
mod far;
mod feed;
mod impute;
mod quality;
mod registry;
mod route;
mod vehicle;

pub use aggregate::{aggregate_daily, Aggregator, AggregatorRegistry, DailyAggregation};
pub use far::{
    check_header, compute_avg_fuel, read_far_csv, write_far_csv, AnomalyLabel, FarRecord, RouteType,
};
pub use feed::{parse_feed, FEED_COLUMNS, read_feed_file, FeedParse, RawReading, Reject};
pub use impute::impute_missing;
pub use quality::{quality_filter, FuelLimits, RemovalReason, RemovalReport, RemovedRecord, MIN_TRIP_KMS};
pub use registry::{
    FeatureRegistry, FeatureSpec, ImpactType, Taxonomy, PER_TIME_CITY, TRIP_FUEL_USED, TRIP_KMS,
};
pub use route::{classify_route, RouteThresholds};
pub use vehicle::{
    assign_vehicle_class, read_vehicles_csv, write_vehicles_csv, ClassBand, VehicleClassTable,
    VehicleIdentity, VinEntry, VinMap,
};

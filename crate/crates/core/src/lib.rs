//! Fleet fuel analytics: an interpretable additive fuel model trained on
//! daily vehicle telemetry, boxplot-based fuel anomaly detection, and
//! per-vehicle-day explanations of how much fuel each factor costs.

pub mod anomaly;
pub mod csvfmt;
pub mod design;
pub mod gam;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};

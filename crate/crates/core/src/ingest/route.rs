use serde::{Deserialize, Serialize};

use super::far::RouteType;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteThresholds {
    pub th_kms: f64,
    pub low_th_time: f64,
    pub high_th_time: f64,
}

impl Default for RouteThresholds {
    fn default() -> Self {
        RouteThresholds {
            th_kms: 30.0,
            low_th_time: 0.5,
            high_th_time: 0.65,
        }
    }
}

/// Primary driving context of a vehicle-day.
pub fn classify_route(per_time_city: f64, trip_kms: f64, th: &RouteThresholds) -> RouteType {
    if per_time_city <= th.low_th_time && trip_kms >= th.th_kms {
        RouteType::Highway
    } else if per_time_city >= th.high_th_time && trip_kms <= th.th_kms {
        RouteType::City
    } else {
        RouteType::Combined
    }
}

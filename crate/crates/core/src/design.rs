//! Mapping between FAR records and model input rows.

use crate::gam::{AdditiveModel, Column, ColumnKind, DesignMatrix, OneHotEncoder};
use crate::ingest::FarRecord;
use crate::{Error, Result};

pub const DEFAULT_CATEGORICALS: [&str; 3] = ["vehicle_group", "route_type", "vehicle_class"];

fn numeric_value(r: &FarRecord, name: &str) -> Result<f64> {
    r.value(name).filter(|v| v.is_finite()).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{} {}: missing value for model feature `{name}`",
            r.vehicle_id, r.date
        ))
    })
}

/// Numeric columns in the given order, followed by one indicator column per
/// level of each categorical attribute seen in `records`.
pub fn build_design(records: &[FarRecord], numeric: &[String], categorical: &[String]) -> Result<DesignMatrix> {
    let levels: Vec<Vec<Option<String>>> = records
        .iter()
        .map(|r| categorical.iter().map(|c| r.categorical(c)).collect())
        .collect();
    let encoder = OneHotEncoder::fit(categorical, &levels);
    let mut columns: Vec<Column> = numeric.iter().map(Column::numeric).collect();
    columns.extend(encoder.columns());
    let mut matrix = DesignMatrix::new(columns);
    for (r, lv) in records.iter().zip(&levels) {
        let mut row = numeric
            .iter()
            .map(|n| numeric_value(r, n))
            .collect::<Result<Vec<f64>>>()?;
        let refs: Vec<Option<&str>> = lv.iter().map(|l| l.as_deref()).collect();
        row.extend(encoder.encode(&refs));
        matrix.rows.push(row);
    }
    Ok(matrix)
}

/// Input row of a record in the model's term order.
pub fn model_row(model: &AdditiveModel, r: &FarRecord) -> Result<Vec<f64>> {
    model
        .terms
        .iter()
        .map(|t| match &t.kind {
            ColumnKind::Numeric => numeric_value(r, &t.feature),
            ColumnKind::OneHot { source, level } => {
                Ok(if r.categorical(source).as_deref() == Some(level.as_str()) {
                    1.0
                } else {
                    0.0
                })
            }
        })
        .collect()
}

pub fn predict(model: &AdditiveModel, r: &FarRecord) -> Result<f64> {
    Ok(model.predict_row(&model_row(model, r)?))
}

/// `(feature, f_i(x_i))` pairs in term order.
pub fn feature_relevance(model: &AdditiveModel, r: &FarRecord) -> Result<Vec<(String, f64)>> {
    let row = model_row(model, r)?;
    Ok(model
        .feature_names()
        .map(str::to_string)
        .zip(model.relevance_row(&row))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AnomalyLabel, RouteType};
    use chrono::NaiveDate;

    fn rec(group: u32, speed: Option<f64>) -> FarRecord {
        FarRecord {
            vehicle_id: "v".into(),
            date: NaiveDate::from_ymd_opt(2020, 4, 17).unwrap(),
            features: speed.map(|s| ("mean_speed_hwy".to_string(), s)).into_iter().collect(),
            trip_kms: Some(100.0),
            trip_fuel_used: Some(9.96),
            per_time_city: Some(0.1),
            avg_fuel_consumption: Some(9.96),
            route_type: RouteType::Highway,
            vehicle_group: Some(group),
            vehicle_class: None,
            anomaly_label: AnomalyLabel::Unassigned,
        }
    }

    #[test]
    fn design_has_numeric_then_indicator_columns() {
        let records = vec![rec(14, Some(99.5)), rec(0, Some(75.0))];
        let m = build_design(
            &records,
            &["mean_speed_hwy".into(), "trip_kms".into()],
            &["vehicle_group".into(), "route_type".into()],
        )
        .unwrap();
        let names: Vec<&str> = m.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["mean_speed_hwy", "trip_kms", "vehicle_group=0", "vehicle_group=14", "route_type=highway"]
        );
        assert_eq!(m.rows[0], vec![99.5, 100.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn missing_numeric_value_is_rejected() {
        let err = build_design(&[rec(1, None)], &["mean_speed_hwy".into()], &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}

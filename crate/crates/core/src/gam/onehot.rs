use serde::{Deserialize, Serialize};

use super::{Column, ColumnKind};

/// Known levels of each categorical source, in column order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub sources: Vec<(String, Vec<String>)>,
}

fn sort_levels(levels: &mut [String]) {
    if levels.iter().all(|l| l.parse::<f64>().is_ok()) {
        levels.sort_by(|a, b| {
            let (a, b) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            a.total_cmp(&b)
        });
    } else {
        levels.sort();
    }
}

impl OneHotEncoder {
    /// Learns the level set of every source from training rows; `rows[i][j]`
    /// is the level of source `j` in row `i`.
    pub fn fit(sources: &[String], rows: &[Vec<Option<String>>]) -> Self {
        let sources = sources
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let mut levels: Vec<String> = rows.iter().filter_map(|r| r[j].clone()).collect();
                levels.sort();
                levels.dedup();
                sort_levels(&mut levels);
                (name.clone(), levels)
            })
            .collect();
        OneHotEncoder { sources }
    }

    pub fn columns(&self) -> Vec<Column> {
        self.sources
            .iter()
            .flat_map(|(source, levels)| {
                levels.iter().map(move |level| Column {
                    name: format!("{source}={level}"),
                    kind: ColumnKind::OneHot {
                        source: source.clone(),
                        level: level.clone(),
                    },
                })
            })
            .collect()
    }

    /// Indicator values for one row; unseen levels encode as all zeros.
    pub fn encode(&self, values: &[Option<&str>]) -> Vec<f64> {
        self.sources
            .iter()
            .zip(values)
            .flat_map(|((_, levels), value)| {
                levels
                    .iter()
                    .map(move |l| if Some(l.as_str()) == *value { 1.0 } else { 0.0 })
            })
            .collect()
    }
}

/// Expands categorical rows into indicator columns.
pub fn one_hot(sources: &[String], rows: &[Vec<Option<String>>]) -> (OneHotEncoder, Vec<Vec<f64>>) {
    let encoder = OneHotEncoder::fit(sources, rows);
    let encoded = rows
        .iter()
        .map(|r| {
            let refs: Vec<Option<&str>> = r.iter().map(|v| v.as_deref()).collect();
            encoder.encode(&refs)
        })
        .collect();
    (encoder, encoded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(levels: &[&str]) -> Vec<Vec<Option<String>>> {
        levels.iter().map(|l| vec![Some(l.to_string())]).collect()
    }

    #[test]
    fn two_groups_two_columns() {
        let (enc, m) = one_hot(&["vehicle_group".into()], &rows(&["14", "0", "14"]));
        let names: Vec<String> = enc.columns().into_iter().map(|c| c.name).collect();
        assert_eq!(names, vec!["vehicle_group=0", "vehicle_group=14"]);
        assert_eq!(m, vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn numeric_levels_sort_numerically() {
        let (enc, _) = one_hot(&["g".into()], &rows(&["10", "9", "100"]));
        assert_eq!(enc.sources[0].1, vec!["9", "10", "100"]);
    }

    #[test]
    fn single_level_and_unseen_level() {
        let (enc, m) = one_hot(&["route".into()], &rows(&["city", "city"]));
        assert_eq!(enc.columns().len(), 1);
        assert_eq!(m, vec![vec![1.0], vec![1.0]]);
        assert_eq!(enc.encode(&[Some("highway")]), vec![0.0]);
        assert_eq!(enc.encode(&[None]), vec![0.0]);
    }
}

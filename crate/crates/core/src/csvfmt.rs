//! Float cells for CSV output. `Display` for `f64` is the shortest string
//! that parses back to the same bits, which keeps files round-trippable and
//! byte-stable across runs.

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn parse_opt(cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Format(format!("not a number: {cell:?}")))
}

pub fn parse_f64(cell: &str) -> Result<f64> {
    parse_opt(cell)?.ok_or_else(|| Error::Format("empty numeric cell".into()))
}

/// Writes serializable rows with a header derived from the field names.
pub fn write_table<W: std::io::Write, T: serde::Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

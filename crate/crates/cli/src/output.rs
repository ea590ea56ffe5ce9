use std::path::Path;

use ndarray::Array1;
use spinv_core::datagen::{mosaic, write_pgm};

use crate::CliError;

/// Writes a CSV table. Rows are already formatted so that output bytes do
/// not depend on anything but the values.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
    w.write_record(header).map_err(|e| CliError::output(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// Shortest representation that reads back to the same value; empty for
/// a missing one.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Grid of square filters, `per_row` to a row.
pub fn write_mosaic(path: &Path, filters: &[Array1<f64>], per_row: usize) -> Result<(), CliError> {
    let Some(first) = filters.first() else {
        return Ok(());
    };
    let side = (first.len() as f64).sqrt().round() as usize;
    if side * side != first.len() {
        return Ok(());
    }
    write_pgm(path, mosaic(filters, side, per_row.max(1)).view(), Some((-1.0, 1.0)))?;
    Ok(())
}

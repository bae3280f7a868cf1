//! CSV files of dense factor matrices.
//!
//! Columns are headed `factor_1 … factor_K` and values are written with 17
//! significant digits, so a write followed by a read reproduces every `f64`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// `{:.16e}`: 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_factor_csv_to(matrix: &Array2<f64>, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=matrix.ncols()).map(|k| format!("factor_{k}")))?;
    for row in matrix.rows() {
        out.write_record(row.iter().map(|&v| format_float(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_factor_csv(matrix: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_factor_csv_to(matrix, File::create(path)?)
}

/// Reads a numeric CSV. A first record that does not parse as numbers is
/// treated as a header.
pub fn read_numeric_csv_from(r: impl Read, source: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut values = Vec::new();
    let mut width = None;
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if index == 0 => continue,
            Err(e) => {
                return Err(Error::Parse { path: source.to_path_buf(), line: index + 1, message: e.to_string() });
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: index + 1,
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
    }
    let width = width.unwrap_or(0);
    let rows = values.len().checked_div(width).unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, width), values).expect("rows of equal width"))
}

pub fn read_numeric_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    read_numeric_csv_from(File::open(path)?, path)
}

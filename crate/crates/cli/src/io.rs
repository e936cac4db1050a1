//! CSV input and output, and file digests.
//!
//! Dialect: comma separated, `.` decimal mark, header row, UTF-8.

use std::fs;
use std::path::Path;

use archimax::{Error, Result};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

/// Header names of columns that carry labels rather than data.
const LABEL_COLUMNS: [&str; 2] = ["block", "date"];

pub fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::domain(format!("{}: {e}", path.display()))
}

/// Numeric table; a leading `block` or `date` column is skipped.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(|s| s.trim().to_string()).collect();
    let skip = usize::from(header.first().is_some_and(|h| LABEL_COLUMNS.contains(&h.to_ascii_lowercase().as_str())));
    let names = header[skip..].to_vec();
    if names.is_empty() {
        return Err(Error::domain(format!("{}: no data columns", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::domain(format!("{}: row {} has {} fields, expected {}", path.display(), r + 2, rec.len(), header.len())));
        }
        for (c, field) in rec.iter().enumerate().skip(skip) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::domain(format!("{}: row {}, column `{}`: `{field}` is not a number", path.display(), r + 2, header[c]))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::domain(format!("{}: no data rows", path.display())));
    }
    Ok((names.clone(), DMatrix::from_row_slice(rows, names.len(), &values)))
}

/// Raw string table with header.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(|s| s.trim().to_string()).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(|s| s.trim().to_string()).collect()).map_err(|e| csv_error(path, e)))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let rows: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|&x| fmt_f64(x)).collect()).collect();
    write_rows(path, header, &rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::numerical(format!("cannot serialise output: {e}")))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

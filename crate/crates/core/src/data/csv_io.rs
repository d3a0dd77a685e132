//! CSV ingestion. Header row holds feature names plus the label column
//! (`outcome` by convention); empty cells are missing values.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::cohort::Cohort;
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "outcome";

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Cohort> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::SchemaMismatch(format!("no `{label_column}` column in header")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let d = names.len();

    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::ParseError {
                row: r + 1,
                column: rec.len(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_idx {
                if cell.is_empty() {
                    return Err(Error::MissingLabel { row: r + 1 });
                }
                let label = match cell.parse::<f64>() {
                    Ok(v) if v == 0.0 => 0,
                    Ok(v) if v == 1.0 => 1,
                    _ => {
                        return Err(Error::InvalidLabel {
                            row: r + 1,
                            value: cell.to_string(),
                        })
                    }
                };
                y.push(label);
            } else if cell.is_empty() {
                values.push(0.0);
                mask.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                    row: r + 1,
                    column: c,
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::ParseError {
                        row: r + 1,
                        column: c,
                        message: format!("`{cell}` is not finite"),
                    });
                }
                values.push(v);
                mask.push(false);
            }
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, d), values).expect("row lengths checked");
    let missing = Array2::from_shape_vec((n, d), mask).expect("row lengths checked");
    Cohort::with_mask(names, x, missing, y)
}

pub fn write_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(cohort, file)
}

/// Writes values with Rust's shortest round-trip float formatting, so a
/// reload reproduces every bit.
pub fn write_csv_to<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = cohort.feature_names.clone();
    header.push(LABEL_COLUMN.to_string());
    wtr.write_record(&header)?;
    for i in 0..cohort.n_rows() {
        let mut rec: Vec<String> = (0..cohort.n_features())
            .map(|j| {
                if cohort.missing[[i, j]] {
                    String::new()
                } else {
                    format!("{}", cohort.x[[i, j]])
                }
            })
            .collect();
        rec.push(cohort.y[i].to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

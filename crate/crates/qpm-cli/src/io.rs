//! CSV ingestion: comma-separated values, one sample per row, no header by
//! default, optional trailing weight column.

use qpm_core::{DiscreteMeasure, PointSet};
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ParseError {
    pub path: String,
    pub row: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: row {}, column {}: {}",
            self.path, self.row, self.col, self.msg
        )
    }
}

impl std::error::Error for ParseError {}

/// Parses a CSV file into a matrix of finite values. Rows are 1-based in
/// error messages; `skip_header` drops the first line.
pub fn load_matrix(path: &Path, skip_header: bool) -> Result<Vec<Vec<f64>>, ParseError> {
    let err = |row: usize, col: usize, msg: String| ParseError {
        path: path.display().to_string(),
        row,
        col,
        msg,
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(0, 0, format!("cannot read file: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_idx, line) in text.lines().enumerate() {
        let row_no = line_idx + 1;
        if skip_header && line_idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col_idx, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                err(
                    row_no,
                    col_idx + 1,
                    format!("cannot parse {:?} as a number", field.trim()),
                )
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(err(
                    row_no,
                    row.len(),
                    format!("ragged row: {} fields, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(0, 0, "no data rows".into()));
    }
    Ok(rows)
}

/// Loads a point set, splitting off the trailing weight column when asked.
pub fn load_points(
    path: &Path,
    skip_header: bool,
    weights_last_column: bool,
) -> Result<(PointSet, Option<Vec<f64>>), ParseError> {
    let mut rows = load_matrix(path, skip_header)?;
    let weights = if weights_last_column {
        if rows[0].len() < 2 {
            return Err(ParseError {
                path: path.display().to_string(),
                row: 1,
                col: 1,
                msg: "need at least one coordinate besides the weight column".into(),
            });
        }
        Some(rows.iter_mut().map(|r| r.pop().unwrap()).collect())
    } else {
        None
    };
    let points = PointSet::from_rows(&rows).map_err(|e| ParseError {
        path: path.display().to_string(),
        row: 0,
        col: 0,
        msg: e.to_string(),
    })?;
    Ok((points, weights))
}

/// Loads a measure: uniform unless a weight column is present.
pub fn load_measure(
    path: &Path,
    skip_header: bool,
    weights_last_column: bool,
) -> Result<DiscreteMeasure, Box<dyn std::error::Error>> {
    let (points, weights) = load_points(path, skip_header, weights_last_column)?;
    Ok(DiscreteMeasure::new(points, weights)?)
}

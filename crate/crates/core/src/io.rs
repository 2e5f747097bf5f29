//! File formats. Batches are CSV with one sample per row, values printed
//! with the shortest decimal form that parses back to the same `f64`.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::ir::json_error;
use crate::matrix::Matrix;

/// Deserializes JSON, reporting data errors with the path of the
/// offending field and syntax errors with their position.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        json_error(e.into_inner(), Some(path))
    })?;
    de.end().map_err(|e| json_error(e, None))?;
    Ok(value)
}

/// Parses a numeric CSV. A first row that does not parse as numbers is
/// taken as a header and skipped. Blank lines are ignored.
pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(Error::Csv(format!(
                            "line {}: {} fields, expected {}",
                            i + 1,
                            row.len(),
                            first.len()
                        )));
                    }
                }
                rows.push(row);
            }
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(Error::Csv(format!("line {}: non-numeric field", i + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Ok(Matrix::new(0, 0, Vec::new())?);
    }
    Matrix::from_rows(rows)
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_matrix_csv(&std::fs::read_to_string(path)?)
}

/// Formats `m` with a header `{prefix}0,{prefix}1,...`.
pub fn format_matrix_csv(m: &Matrix, prefix: &str) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..m.cols()).map(|j| format!("{prefix}{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.iter_rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Matrix, prefix: &str) -> Result<()> {
    std::fs::write(path, format_matrix_csv(m, prefix))?;
    Ok(())
}

/// Reads a single-column CSV, or flattens a multi-column one row by row.
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    Ok(read_matrix_csv(path)?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = Matrix::new(2, 3, vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0, f64::MAX, -0.0]).unwrap();
        let text = format_matrix_csv(&m, "x");
        assert!(text.starts_with("x0,x1,x2\n"));
        let back = parse_matrix_csv(&text).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn headerless_and_ragged() {
        assert_eq!(parse_matrix_csv("1,2\n3,4\n").unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(parse_matrix_csv("a,b\n1,2\n3\n").is_err());
        assert!(parse_matrix_csv("1,2\nx,4\n").is_err());
        assert!(parse_matrix_csv("a,b\n").unwrap().is_empty());
    }
}

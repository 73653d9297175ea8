//! CSV and JSON file conventions.
//!
//! Matrices are written without a header. Datasets may carry one header row
//! of column labels, detected on read by the presence of a non-numeric field.
//! Numbers are written rounded to 12 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{PrecisError, Result};
use crate::linalg::SymMatrix;
use crate::model::{Dataset, MeasurementErrorModel};

/// `v` rounded to 12 significant digits, in the shortest form that reads back
/// to the rounded value.
pub fn format_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    let mag = rounded.abs();
    if (1e-4..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn write_rows<'a>(path: &Path, header: Option<&[String]>, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    if let Some(h) = header {
        out.write_record(h)?;
    }
    for row in rows {
        out.write_record(row.iter().map(|v| format_num(*v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &SymMatrix) -> Result<()> {
    write_rows(path, None, (0..m.dim()).map(|i| m.row(i)))
}

pub fn write_dataset_csv(path: &Path, x: &Dataset, header: Option<&[String]>) -> Result<()> {
    write_rows(path, header, x.rows())
}

/// Single column, one value per line.
pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    write_rows(path, None, v.chunks(1))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Raw numeric table plus the header row when one was present.
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut header = None;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Option<Vec<f64>> = record.iter().map(parse_field).collect();
        match parsed {
            Some(row) => rows.push(row),
            None if line == 0 => header = Some(record.iter().map(str::to_string).collect()),
            None => {
                return Err(PrecisError::InvalidInput(format!(
                    "{}: non-numeric value on line {}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(PrecisError::InvalidInput(format!("{}: no numeric rows", path.display())));
    }
    Ok(Table { header, rows })
}

pub fn read_dataset_csv(path: &Path) -> Result<(Option<Vec<String>>, Dataset)> {
    let t = read_table(path)?;
    let x = Dataset::from_rows(&t.rows)
        .map_err(|e| PrecisError::InvalidInput(format!("{}: {e}", path.display())))?;
    if let Some(h) = &t.header {
        if h.len() != x.d() {
            return Err(PrecisError::InvalidInput(format!(
                "{}: header has {} labels for {} columns",
                path.display(),
                h.len(),
                x.d()
            )));
        }
    }
    Ok((t.header, x))
}

pub fn read_matrix_csv(path: &Path) -> Result<SymMatrix> {
    let t = read_table(path)?;
    SymMatrix::from_rows(&t.rows).map_err(|e| PrecisError::InvalidInput(format!("{}: {e}", path.display())))
}

/// Error variances given as a single row or a single column.
pub fn read_sigma_u(path: &Path) -> Result<MeasurementErrorModel> {
    let t = read_table(path)?;
    let values: Vec<f64> = if t.rows.len() == 1 {
        t.rows[0].clone()
    } else if t.rows.iter().all(|r| r.len() == 1) {
        t.rows.iter().map(|r| r[0]).collect()
    } else {
        return Err(PrecisError::InvalidInput(format!(
            "{}: error variances must be one row or one column",
            path.display()
        )));
    };
    MeasurementErrorModel::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_num(0.0), "0");
        assert_eq!(format_num(0.1), "0.1");
        assert_eq!(format_num(-2.5), "-2.5");
        assert_eq!(format_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_num(1e-20), "1e-20");
        assert_eq!(format_num(123456789.123456789), "123456789.123");
        for v in [std::f64::consts::PI, -1e-7, 6.02e23, 0.000123456789012345] {
            let back: f64 = format_num(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-11);
        }
    }

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = SymMatrix::from_rows(&[vec![2.0, -0.5], vec![-0.5, 1.25]]).unwrap();
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "2,-0.5\n-0.5,1.25\n");
        assert_eq!(read_matrix_csv(&p).unwrap(), m);

        let x = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
        let labels = vec!["a".to_string(), "b".to_string()];
        write_dataset_csv(&p, &x, Some(&labels)).unwrap();
        let (h, back) = read_dataset_csv(&p).unwrap();
        assert_eq!((h.unwrap(), back), (labels, x.clone()));
        write_dataset_csv(&p, &x, None).unwrap();
        assert!(read_dataset_csv(&p).unwrap().0.is_none());
    }

    #[test]
    fn sigma_u_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "0.1,0.2,0.3\n").unwrap();
        assert_eq!(read_sigma_u(&p).unwrap().variances(), &[0.1, 0.2, 0.3]);
        write_vector_csv(&p, &[0.1, 0.2]).unwrap();
        assert_eq!(read_sigma_u(&p).unwrap().variances(), &[0.1, 0.2]);
        std::fs::write(&p, "1,2\n3,4\n").unwrap();
        assert!(read_sigma_u(&p).is_err());
    }

    #[test]
    fn rejects_text_after_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,b\n1,2\nx,3\n").unwrap();
        assert!(read_dataset_csv(&p).is_err());
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(read_dataset_csv(&p).is_err());
    }
}

//! Dense numeric CSV input for the regression benchmark.

use std::io::Read;
use std::path::Path;

use ssqp_core::linalg::Matrix;

use crate::BenchError;

/// A comma-separated numeric matrix with one header row.
pub fn read_matrix<R: Read>(input: R) -> Result<Matrix, BenchError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(BenchError::Data(format!("row {}: expected {c} fields, got {}", line + 1, rec.len())));
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 =
                field.parse().map_err(|_| BenchError::Data(format!("row {}: not a number: {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(BenchError::Data(format!("row {}: non-finite value", line + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| BenchError::Data("no data rows".into()))?;
    Ok(Matrix::from_rows(rows, cols, data))
}

/// Splits off the last column as labels.
pub fn split_labels(m: &Matrix) -> Result<(Matrix, Vec<f64>), BenchError> {
    if m.cols() < 2 {
        return Err(BenchError::Data("need at least one feature column and a label column".into()));
    }
    let f = m.cols() - 1;
    let mut features = Vec::with_capacity(m.rows() * f);
    let mut labels = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        features.extend_from_slice(&row[..f]);
        labels.push(row[f]);
    }
    Ok((Matrix::from_rows(m.rows(), f, features), labels))
}

pub fn load_regression_file(path: &Path, labels_in_file: bool) -> Result<(Matrix, Option<Vec<f64>>), BenchError> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    let m = read_matrix(std::io::BufReader::new(file))?;
    if labels_in_file {
        let (x, y) = split_labels(&m)?;
        Ok((x, Some(y)))
    } else {
        Ok((m, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_skipped_and_label_split() {
        let text = "a,b,label\n1, 2, 3\n4,5,6\n";
        let m = read_matrix(text.as_bytes()).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        let (x, y) = split_labels(&m).unwrap();
        assert_eq!(x.row(1), &[4.0, 5.0]);
        assert_eq!(y, vec![3.0, 6.0]);
    }

    #[test]
    fn malformed_input() {
        assert!(read_matrix("a,b\n1,x\n".as_bytes()).is_err());
        assert!(read_matrix("a,b\n".as_bytes()).is_err());
        assert!(split_labels(&read_matrix("a\n1\n".as_bytes()).unwrap()).is_err());
    }
}

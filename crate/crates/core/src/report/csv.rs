use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::multiplicity::{ComparisonMatrix, MatrixMode};

/// How a matrix cell is written: integers verbatim, reals with six decimals.
pub trait CsvCell: Copy + PartialEq + PartialOrd + Default + std::fmt::Debug + FromStr {
    fn format_cell(&self) -> String;
}

impl CsvCell for u64 {
    fn format_cell(&self) -> String {
        self.to_string()
    }
}

impl CsvCell for f64 {
    fn format_cell(&self) -> String {
        format!("{self:.6}")
    }
}

/// First line: an empty corner cell then the column labels. Each following
/// line: the row label then the cells.
pub fn matrix_csv<T: CsvCell>(matrix: &ComparisonMatrix<T>) -> String {
    let mut out = String::new();
    for label in matrix.labels() {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (r, label) in matrix.labels().iter().enumerate() {
        out.push_str(label);
        for v in matrix.row(r) {
            let _ = write!(out, ",{}", v.format_cell());
        }
        out.push('\n');
    }
    out
}

pub fn emit_matrix_csv<T: CsvCell>(matrix: &ComparisonMatrix<T>, path: &Path) -> Result<()> {
    std::fs::write(path, matrix_csv(matrix)).map_err(|e| Error::io(path, e))
}

pub fn parse_matrix_csv<T: CsvCell>(text: &str, mode: MatrixMode) -> Result<ComparisonMatrix<T>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| Error::Parse { line: line + 1, message };
    let (_, header) = lines.next().ok_or_else(|| bad(0, "empty matrix file".into()))?;
    let mut fields = header.split(',');
    if fields.next() != Some("") {
        return Err(bad(0, "header must start with an empty corner cell".into()));
    }
    let labels: Vec<String> = fields.map(str::to_owned).collect();
    let mut cells = Vec::with_capacity(labels.len() * labels.len());
    let mut rows = 0;
    for (k, line) in lines {
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default();
        if labels.get(rows).map(String::as_str) != Some(label) {
            return Err(bad(k, format!("unexpected row label {label:?}")));
        }
        let row: Vec<&str> = fields.collect();
        if row.len() != labels.len() {
            return Err(bad(k, format!("{} cells, expected {}", row.len(), labels.len())));
        }
        for v in row {
            cells.push(v.parse::<T>().map_err(|_| bad(k, format!("bad cell {v:?}")))?);
        }
        rows += 1;
    }
    if rows != labels.len() {
        return Err(bad(rows, format!("{rows} rows for {} labels", labels.len())));
    }
    ComparisonMatrix::new(labels, cells, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_is_three_lines() {
        let m = ComparisonMatrix::new(vec!["a".into(), "b".into()], vec![0u64; 4], MatrixMode::Joint).unwrap();
        assert_eq!(matrix_csv(&m), ",a,b\na,0,0\nb,0,0\n");
    }

    #[test]
    fn reals_use_six_decimals() {
        let m = ComparisonMatrix::new(vec!["a".into(), "b".into()], vec![0.0, 0.125, 0.125, 0.0], MatrixMode::Prediction).unwrap();
        assert_eq!(matrix_csv(&m), ",a,b\na,0.000000,0.125000\nb,0.125000,0.000000\n");
    }

    #[test]
    fn malformed_input_rejected() {
        for text in ["", "a,b\n", ",a\nb,0\n", ",a,b\na,0,1\n", ",a\na,x\n", ",a,b\na,0,1\nb,2,0\n"] {
            assert!(parse_matrix_csv::<u64>(text, MatrixMode::Joint).is_err(), "{text:?}");
        }
    }
}

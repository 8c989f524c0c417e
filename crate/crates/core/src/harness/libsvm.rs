//! The libsvm sparse text format.
//!
//! ```text
//! file    := { line "\n" }
//! line    := label { ws index ":" value } [ ws ] [ "#" comment ]
//! label   := float
//! index   := positive integer, strictly increasing within a line
//! value   := float
//! ws      := one or more spaces or tabs
//! ```
//!
//! Blank and comment-only lines are skipped; reported line numbers count every
//! physical line from 1. Index `j` is stored in column `j - 1`, and the column
//! count is the largest index seen unless a wider one is requested.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmData {
    pub matrix: SparseMatrix,
    pub labels: Vec<f64>,
    /// Physical line number of each row, for error reporting.
    pub lines: Vec<usize>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_float(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("{what} `{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} `{tok}` is not finite")));
    }
    Ok(v)
}

pub fn read<R: BufRead>(reader: R, min_cols: usize) -> Result<LibsvmData> {
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    let mut cols = min_cols;

    for (i, text) in reader.lines().enumerate() {
        let lineno = i + 1;
        let text = text?;
        let body = text.split('#').next().unwrap_or("");
        let mut toks = body.split_whitespace();
        let Some(label) = toks.next() else {
            continue;
        };
        labels.push(parse_float(label, lineno, "label")?);
        let mut prev = 0usize;
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected index:value, found `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("index `{idx}` is not a positive integer")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "indices are 1-based"));
            }
            if idx == prev {
                return Err(parse_err(lineno, format!("duplicate index {idx}")));
            }
            if idx < prev {
                return Err(parse_err(lineno, format!("index {idx} follows {prev}")));
            }
            prev = idx;
            indices.push(idx - 1);
            values.push(parse_float(val, lineno, "value")?);
            cols = cols.max(idx);
        }
        indptr.push(indices.len());
        lines.push(lineno);
    }
    if labels.is_empty() {
        return Err(Error::NoRows);
    }
    let matrix = SparseMatrix::try_new(labels.len(), cols, indptr, indices, values)?;
    Ok(LibsvmData {
        matrix,
        labels,
        lines,
    })
}

pub fn read_path(path: &Path, min_cols: usize) -> Result<LibsvmData> {
    let file = std::fs::File::open(path)?;
    read(std::io::BufReader::new(file), min_cols)
}

/// Writes stored entries with shortest round-trip float formatting.
pub fn write<W: Write>(mut out: W, matrix: &SparseMatrix, labels: &[f64]) -> Result<()> {
    if labels.len() != matrix.nrows() {
        return Err(Error::dims("libsvm labels", matrix.nrows(), labels.len()));
    }
    for (r, label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        let (idx, vals) = matrix.row(r);
        for (j, v) in idx.iter().zip(vals) {
            write!(out, " {}:{v}", j + 1)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_path(path: &Path, matrix: &SparseMatrix, labels: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write(std::io::BufWriter::new(file), matrix, labels)
}

/// Integer class labels, rejecting fractional values.
pub fn integer_labels(data: &LibsvmData) -> Result<Vec<i64>> {
    data.labels
        .iter()
        .zip(&data.lines)
        .map(|(&l, &line)| {
            if l.fract() == 0.0 && l.abs() < 9.0e15 {
                Ok(l as i64)
            } else {
                Err(parse_err(line, format!("label {l} is not an integer")))
            }
        })
        .collect()
}

//! Plain CSV matrices: one row per line, comma separated, optional header.
//!
//! Values are written in the shortest decimal form that parses back to the
//! same `f64`. Undefined entries of a masked matrix are written as `NA`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MISSING: &str = "NA";

/// Parses a matrix. `row` and `col` in errors are 1-based line and field numbers.
pub fn read_matrix<R: Read>(reader: R, header: bool) -> Result<Matrix> {
    let (rows, cols, data) = read_cells(reader, header, false)?;
    let data = data.into_iter().map(|v| v.expect("missing values rejected")).collect();
    Matrix::new(rows, cols, data)
}

/// Parses a matrix that may contain `NA`; returns values (0 where missing) and the defined mask.
pub fn read_masked_matrix<R: Read>(reader: R, header: bool) -> Result<(Matrix, Vec<bool>)> {
    let (rows, cols, data) = read_cells(reader, header, true)?;
    let mask = data.iter().map(Option::is_some).collect();
    let values = data.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    Ok((Matrix::new(rows, cols, values)?, mask))
}

fn read_cells<R: Read>(reader: R, header: bool, allow_missing: bool) -> Result<(usize, usize, Vec<Option<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                row: line,
                col: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse {
                    row: line,
                    col: record.len().min(c) + 1,
                    message: format!("expected {c} fields, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        for (k, field) in record.iter().enumerate() {
            let cell = if allow_missing && field == MISSING {
                None
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row: line,
                    col: k + 1,
                    message: format!("not a number: {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: line,
                        col: k + 1,
                        message: format!("non-finite value {field:?}"),
                    });
                }
                Some(v)
            };
            data.push(cell);
        }
        rows += 1;
    }
    match cols {
        Some(c) if rows > 0 && c > 0 => Ok((rows, c, data)),
        _ => Err(Error::Parse {
            row: 0,
            col: 0,
            message: "no data rows".into(),
        }),
    }
}

pub fn read_matrix_file(path: &Path, header: bool) -> Result<Matrix> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_matrix(file, header)
}

pub fn read_masked_matrix_file(path: &Path, header: bool) -> Result<(Matrix, Vec<bool>)> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_masked_matrix(file, header)
}

pub fn write_matrix<W: Write>(writer: W, m: &Matrix) -> Result<()> {
    write_rows(writer, m, None)
}

/// Writes `m`, with `NA` wherever `defined` is false.
pub fn write_masked_matrix<W: Write>(writer: W, m: &Matrix, defined: &[bool]) -> Result<()> {
    if defined.len() != m.rows() * m.cols() {
        return Err(Error::DimensionMismatch("mask length differs from matrix size".into()));
    }
    write_rows(writer, m, Some(defined))
}

fn write_rows<W: Write>(writer: W, m: &Matrix, defined: Option<&[bool]>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for j in 0..m.cols() {
            if j > 0 {
                line.push(',');
            }
            if defined.is_some_and(|d| !d[i * m.cols() + j]) {
                line.push_str(MISSING);
            } else {
                line.push_str(&m[(i, j)].to_string());
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, m: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_matrix(file, m)
}

pub fn write_masked_matrix_file(path: &Path, m: &Matrix, defined: &[bool]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_masked_matrix(file, m, defined)
}

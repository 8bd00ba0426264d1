//! CSV ingestion and emission for the `x1..xd,y,a` schema.

use crate::dr_engine::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use std::io::{Read, Write};
use std::path::Path;

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads a dataset. Columns may appear in any order; covariates must be named
/// `x1..xd` without gaps. Rows are numbered from 1 (the first data row).
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers()?.clone();
    let mut y_col = None;
    let mut a_col = None;
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (idx, name) in header.iter().enumerate() {
        match name {
            "y" if y_col.is_none() => y_col = Some(idx),
            "a" if a_col.is_none() => a_col = Some(idx),
            _ => {
                let j = name
                    .strip_prefix('x')
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&j| j >= 1)
                    .ok_or_else(|| parse_error(0, name, "unexpected or duplicate column"))?;
                x_cols.push((j, idx));
            }
        }
    }
    let y_col = y_col.ok_or_else(|| parse_error(0, "y", "missing column"))?;
    let a_col = a_col.ok_or_else(|| parse_error(0, "a", "missing column"))?;
    x_cols.sort_unstable();
    for (want, &(j, _)) in (1..).zip(&x_cols) {
        if j != want {
            return Err(parse_error(0, &format!("x{want}"), "missing covariate column"));
        }
    }
    if x_cols.is_empty() {
        return Err(parse_error(0, "x1", "missing covariate column"));
    }

    let d = x_cols.len();
    let (mut xs, mut y, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for (i, record) in csv.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let number = |idx: usize, name: &str| -> Result<f64> {
            let cell = record.get(idx).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(row, name, format!("`{cell}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_error(row, name, format!("`{cell}` is not finite")))
            }
        };
        for &(j, idx) in &x_cols {
            xs.push(number(idx, &format!("x{j}"))?);
        }
        y.push(number(y_col, "y")?);
        a.push(match record.get(a_col).unwrap_or("") {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_error(row, "a", format!("`{other}` is not 0 or 1"))),
        });
    }
    Dataset::new(Matrix::new(y.len(), d, xs)?, y, a)
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?)
}

/// Writes floats in shortest round-trip form.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let d = data.n_covariates();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("a".into());
    csv.write_record(&header)?;
    for i in 0..data.len() {
        let mut record: Vec<String> = data.x().row(i).iter().map(|v| v.to_string()).collect();
        record.push(data.y()[i].to_string());
        record.push(data.a()[i].to_string());
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(data, file)
}

//! Unit-level records and the CSV format they are read from.
//!
//! The CSV needs a header row. Column `z` (0/1) and `y` (integer category)
//! are required, `d` (0/1) is optional, and every remaining column is read
//! as a numeric covariate.

use std::io::Read;

use crate::error::{Error, Result};

/// One experimental unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    /// Treatment assignment.
    pub z: bool,
    /// Treatment actually received, when recorded.
    pub d: Option<bool>,
    /// Ordinal outcome, `0..J`.
    pub y: usize,
    /// Covariates; empty when none were recorded.
    pub x: Vec<f64>,
}

impl UnitRecord {
    pub fn new(z: bool, y: usize) -> Self {
        UnitRecord { z, d: None, y, x: Vec::new() }
    }

    pub fn with_d(mut self, d: bool) -> Self {
        self.d = Some(d);
        self
    }

    pub fn with_x(mut self, x: Vec<f64>) -> Self {
        self.x = x;
        self
    }
}

/// Parsed CSV contents.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<UnitRecord>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Keeps only the named covariates, in the given order.
    pub fn select_covariates(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.covariate_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown covariate column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let records = self
            .records
            .iter()
            .map(|r| UnitRecord { x: idx.iter().map(|&i| r.x[i]).collect(), ..r.clone() })
            .collect();
        Ok(Dataset { records, covariate_names: names.to_vec() })
    }

    pub fn without_covariates(&self) -> Dataset {
        self.select_covariates(&[]).expect("empty selection is always valid")
    }
}

/// Infers the category count as `max(y) + 1`, or checks an override.
pub fn infer_categories(records: &[UnitRecord], categories: Option<usize>) -> Result<usize> {
    let max_y = records.iter().map(|r| r.y).max().unwrap_or(0);
    match categories {
        Some(j) => {
            if let Some((unit, r)) = records.iter().enumerate().find(|(_, r)| r.y >= j) {
                return Err(Error::OutOfRangeOutcome { unit, y: r.y, categories: j });
            }
            if j < 2 {
                return Err(Error::LengthTooShort { len: j });
            }
            Ok(j)
        }
        None => Ok((max_y + 1).max(2)),
    }
}

/// Checks that `d` is present on every unit or on none.
pub fn has_treatment_received(records: &[UnitRecord]) -> Result<bool> {
    let with_d = records.iter().filter(|r| r.d.is_some()).count();
    match with_d {
        0 => Ok(false),
        n if n == records.len() => Ok(true),
        _ => Err(Error::Parse("column d must be present for all units or none".into())),
    }
}

fn parse_binary(field: &str, col: &str, line: usize) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse(format!("line {line}: column {col} must be 0 or 1, got `{other}`"))),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let z_col = find("z").ok_or_else(|| Error::Parse("missing required column `z`".into()))?;
    let y_col = find("y").ok_or_else(|| Error::Parse("missing required column `y`".into()))?;
    let d_col = find("d");
    let cov_cols: Vec<usize> =
        (0..headers.len()).filter(|&i| i != z_col && i != y_col && Some(i) != d_col).collect();

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let z = parse_binary(&row[z_col], "z", line)?;
        let d = d_col.map(|c| parse_binary(&row[c], "d", line)).transpose()?;
        let y = row[y_col]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("line {line}: y must be a nonnegative integer, got `{}`", &row[y_col])))?;
        let x = cov_cols
            .iter()
            .map(|&c| {
                row[c].trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {line}: covariate `{}` is not numeric: `{}`", headers[c], &row[c]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(UnitRecord { z, d, y, x });
    }
    Ok(Dataset { records, covariate_names: cov_cols.iter().map(|&c| headers[c].clone()).collect() })
}

/// Writes records in the format [`read_csv`] accepts.
pub fn write_csv<W: std::io::Write>(writer: W, records: &[UnitRecord], covariate_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_d = records.first().is_some_and(|r| r.d.is_some());
    let mut header = vec!["z".to_string()];
    if with_d {
        header.push("d".into());
    }
    header.push("y".into());
    header.extend(covariate_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for r in records {
        let mut row = vec![(r.z as u8).to_string()];
        if with_d {
            row.push((r.d.unwrap_or(false) as u8).to_string());
        }
        row.push(r.y.to_string());
        row.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Expands per-category counts for two arms into unit records.
pub fn records_from_counts(treated: &[usize], control: &[usize]) -> Vec<UnitRecord> {
    let mut out = Vec::new();
    for (z, counts) in [(true, treated), (false, control)] {
        for (y, &c) in counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(UnitRecord::new(z, y), c));
        }
    }
    out
}

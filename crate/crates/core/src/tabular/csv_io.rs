//! CSV ingestion with schema inference, and CSV output for augmented tables.
//!
//! Inference rule per column, over non-missing cells: numeric when at least
//! 95% parse as finite numbers, else datetime when at least 95% parse under a
//! supported format, else categorical. Cells that do not conform to the
//! decided dtype become missing.

use std::collections::HashMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{CoreError, Result};

use super::{Column, ColumnData, Granularity, Table};

const TYPE_THRESHOLD: f64 = 0.95;

/// Explicit dtype override for a column, bypassing inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DTypeHint {
    Numeric,
    Categorical,
    Datetime,
}

/// Optional per-column dtype overrides keyed by header name.
pub type SchemaHints = HashMap<String, DTypeHint>;

fn is_missing_token(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty()
        || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("nan")
        || t.eq_ignore_ascii_case("null")
}

fn parse_numeric(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Supported formats, finest first. Date-only forms parse to midnight.
fn parse_datetime(cell: &str) -> Option<(i64, Granularity)> {
    let t = cell.trim();
    const SECOND_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%m/%d/%Y %H:%M:%S"];
    const MINUTE_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M", "%m/%d/%Y %H:%M"];
    const DAY_FORMATS: [&str; 2] = ["%Y-%m-%d", "%m/%d/%Y"];
    for f in SECOND_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, f) {
            return Some((dt.and_utc().timestamp(), Granularity::Seconds));
        }
    }
    for f in MINUTE_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, f) {
            return Some((dt.and_utc().timestamp(), Granularity::Minutes));
        }
    }
    for f in DAY_FORMATS {
        if let Ok(d) = NaiveDate::parse_from_str(t, f) {
            let dt = d.and_hms_opt(0, 0, 0).unwrap();
            return Some((dt.and_utc().timestamp(), Granularity::Days));
        }
    }
    None
}

pub(super) fn render_datetime(value: i64, granularity: Granularity) -> String {
    let secs = value * granularity.unit_seconds();
    let dt = chrono::DateTime::from_timestamp(secs, 0)
        .map(|d| d.naive_utc())
        .unwrap_or_default();
    match granularity {
        Granularity::Seconds => dt.format("%Y-%m-%d %H:%M:%S").to_string(),
        Granularity::Minutes => dt.format("%Y-%m-%d %H:%M").to_string(),
        Granularity::Hours => dt.format("%Y-%m-%d %H:00").to_string(),
        Granularity::Days => dt.format("%Y-%m-%d").to_string(),
    }
}

fn infer_dtype(cells: &[String]) -> DTypeHint {
    let present: Vec<&String> = cells.iter().filter(|c| !is_missing_token(c)).collect();
    if present.is_empty() {
        return DTypeHint::Categorical;
    }
    let n = present.len() as f64;
    let numeric = present.iter().filter(|c| parse_numeric(c).is_some()).count() as f64;
    if numeric / n >= TYPE_THRESHOLD {
        return DTypeHint::Numeric;
    }
    let datetime = present.iter().filter(|c| parse_datetime(c).is_some()).count() as f64;
    if datetime / n >= TYPE_THRESHOLD {
        return DTypeHint::Datetime;
    }
    DTypeHint::Categorical
}

fn build_column(name: &str, cells: Vec<String>, dtype: DTypeHint) -> Column {
    let n = cells.len();
    let mut missing = vec![false; n];
    match dtype {
        DTypeHint::Numeric => {
            let mut values = vec![0.0; n];
            for (i, cell) in cells.iter().enumerate() {
                match (!is_missing_token(cell)).then(|| parse_numeric(cell)).flatten() {
                    Some(v) => values[i] = v,
                    None => missing[i] = true,
                }
            }
            Column { name: name.into(), data: ColumnData::Numeric(values), missing, origin: None }
        }
        DTypeHint::Datetime => {
            // Store at the finest granularity any cell parsed to.
            let parsed: Vec<Option<(i64, Granularity)>> = cells
                .iter()
                .map(|c| (!is_missing_token(c)).then(|| parse_datetime(c)).flatten())
                .collect();
            let granularity = parsed
                .iter()
                .flatten()
                .map(|&(_, g)| g)
                .min()
                .unwrap_or(Granularity::Days);
            let unit = granularity.unit_seconds();
            let mut values = vec![0i64; n];
            for (i, p) in parsed.iter().enumerate() {
                match p {
                    Some((secs, _)) => values[i] = secs.div_euclid(unit),
                    None => missing[i] = true,
                }
            }
            Column {
                name: name.into(),
                data: ColumnData::Datetime { values, granularity },
                missing,
                origin: None,
            }
        }
        DTypeHint::Categorical => {
            let mut dict: Vec<String> = Vec::new();
            let mut lookup: HashMap<String, u32> = HashMap::new();
            let mut codes = vec![0u32; n];
            for (i, cell) in cells.iter().enumerate() {
                if is_missing_token(cell) {
                    missing[i] = true;
                    continue;
                }
                let v = cell.trim();
                let code = *lookup.entry(v.to_string()).or_insert_with(|| {
                    dict.push(v.to_string());
                    (dict.len() - 1) as u32
                });
                codes[i] = code;
            }
            Column {
                name: name.into(),
                data: ColumnData::Categorical { codes, dict },
                missing,
                origin: None,
            }
        }
    }
}

/// Load an RFC-4180 CSV with a header row into a typed [`Table`]. The table
/// name is the file stem.
pub fn load_csv(path: impl AsRef<Path>, hints: Option<&SchemaHints>) -> Result<Table> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CoreError::Io(std::io::Error::other(e.to_string())),
            _ => CoreError::Format { line: 0, msg: e.to_string() },
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CoreError::Format { line: 1, msg: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoreError::Format {
            line: row_idx + 2,
            msg: match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("ragged row: expected {} fields, got {}", expected_len, len)
                }
                _ => e.to_string(),
            },
        })?;
        for (j, field) in record.iter().enumerate() {
            cells[j].push(field.to_string());
        }
    }
    if cells.first().map_or(true, Vec::is_empty) {
        return Err(CoreError::EmptyTable);
    }
    let columns = headers
        .iter()
        .zip(cells)
        .map(|(h, col_cells)| {
            let dtype = hints
                .and_then(|m| m.get(h).copied())
                .unwrap_or_else(|| infer_dtype(&col_cells));
            build_column(h, col_cells, dtype)
        })
        .collect();
    Table::new(name, columns)
}

/// Write a table as CSV. Missing cells become empty fields; datetimes render
/// in their granularity's format.
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer
        .write_record(table.columns.iter().map(|c| c.name.as_str()))
        .map_err(|e| CoreError::Format { line: 1, msg: e.to_string() })?;
    for row in 0..table.row_count {
        let record: Vec<String> = table
            .columns
            .iter()
            .map(|c| c.render(row).unwrap_or_default())
            .collect();
        writer
            .write_record(&record)
            .map_err(|e| CoreError::Format { line: row + 2, msg: e.to_string() })?;
    }
    writer.flush()?;
    Ok(())
}

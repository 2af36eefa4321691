use std::collections::HashSet;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::ChartError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Number,
    Text,
    Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Number(Vec<f64>),
    Text(Vec<String>),
    /// Seconds since the Unix epoch (UTC; zone-less values are read as UTC).
    Timestamp(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn column_type(&self) -> ColumnType {
        match self.data {
            ColumnData::Number(_) => ColumnType::Number,
            ColumnData::Text(_) => ColumnType::Text,
            ColumnData::Timestamp(_) => ColumnType::Timestamp,
        }
    }

    /// Numeric view; timestamps are seconds. `None` for text.
    pub fn numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Number(v) | ColumnData::Timestamp(v) => Some(v),
            ColumnData::Text(_) => None,
        }
    }

    pub fn display(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Number(v) => format_number(v[row]),
            ColumnData::Timestamp(v) => DateTime::from_timestamp(v[row].floor() as i64, 0)
                .map(|d| d.format("%Y-%m-%d").to_string())
                .unwrap_or_default(),
            ColumnData::Text(v) => v[row].clone(),
        }
    }
}

/// Rectangular typed table with unique column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<Column>,
    rows: usize,
}

impl DataTable {
    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

pub fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(d.timestamp() as f64 + d.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(d) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = d.and_utc();
            return Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|d| d.and_utc().timestamp() as f64)
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a UTF-8 CSV with a header row. Column types come from the first
/// record (number, then ISO-8601 timestamp, then text); every later cell must
/// parse as that type. Rows and columns in errors are 1-based data positions.
pub fn parse_dataset(source: &str) -> Result<DataTable, ChartError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| ChartError::Malformed(e.to_string()))?.iter().map(String::from).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(ChartError::EmptyData);
    }
    let mut seen = HashSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(ChartError::DuplicateColumn(name.clone()));
        }
    }
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| ChartError::Malformed(e.to_string()))?;
    let Some(first) = records.first() else {
        return Err(ChartError::EmptyData);
    };
    let types: Vec<ColumnType> = first
        .iter()
        .map(|cell| {
            if parse_number(cell).is_some() {
                ColumnType::Number
            } else if parse_timestamp(cell).is_some() {
                ColumnType::Timestamp
            } else {
                ColumnType::Text
            }
        })
        .collect();
    let mut columns: Vec<Column> = header
        .iter()
        .zip(&types)
        .map(|(name, ty)| Column {
            name: name.clone(),
            data: match ty {
                ColumnType::Number => ColumnData::Number(Vec::with_capacity(records.len())),
                ColumnType::Text => ColumnData::Text(Vec::with_capacity(records.len())),
                ColumnType::Timestamp => ColumnData::Timestamp(Vec::with_capacity(records.len())),
            },
        })
        .collect();
    for (r, record) in records.iter().enumerate() {
        for (c, (cell, column)) in record.iter().zip(columns.iter_mut()).enumerate() {
            let bad = || ChartError::UnparseableCell { row: r + 1, col: c + 1 };
            match &mut column.data {
                ColumnData::Number(v) => v.push(parse_number(cell).ok_or_else(bad)?),
                ColumnData::Timestamp(v) => {
                    let t = parse_timestamp(cell).ok_or_else(bad)?;
                    if v.last().is_some_and(|prev| t < *prev) {
                        return Err(ChartError::NonMonotoneTimestamps { column: column.name.clone(), row: r + 1 });
                    }
                    v.push(t);
                }
                ColumnData::Text(v) => v.push(cell.to_string()),
            }
        }
    }
    Ok(DataTable { columns, rows: records.len() })
}

/// Compact label: integers print without decimals, large magnitudes get K/M suffixes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a >= 1e6 {
        format!("{}M", trim_decimals(v / 1e6, 1))
    } else if a >= 1e4 {
        format!("{}K", trim_decimals(v / 1e3, 1))
    } else {
        trim_decimals(v, 2)
    }
}

fn trim_decimals(v: f64, places: usize) -> String {
    let s = format!("{v:.places$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_table() {
        let t = parse_dataset("year,count\n2019,3\n2020,5\n2021,8\n2022,13\n2023,21\n").unwrap();
        assert_eq!(t.columns().len(), 2);
        assert_eq!(t.row_count(), 5);
        assert_eq!(t.column("count").unwrap().numeric().unwrap()[4], 21.0);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(parse_dataset("year,count\n"), Err(ChartError::EmptyData)));
        assert!(matches!(parse_dataset(""), Err(ChartError::EmptyData)));
        assert!(matches!(parse_dataset("a,a\n1,2\n"), Err(ChartError::DuplicateColumn(n)) if n == "a"));
        assert!(matches!(
            parse_dataset("a,b\n1,2\n3,x\n"),
            Err(ChartError::UnparseableCell { row: 2, col: 2 })
        ));
        assert!(matches!(parse_dataset("a,b\n1,2\n3\n"), Err(ChartError::Malformed(_))));
    }

    #[test]
    fn timestamps_and_text() {
        let t = parse_dataset("when,label\n2024-01-01,a\n2024-01-02T12:00:00Z,b\n").unwrap();
        let when = t.column("when").unwrap();
        assert_eq!(when.column_type(), ColumnType::Timestamp);
        assert_eq!(when.numeric().unwrap(), &[1704067200.0, 1704067200.0 + 86400.0 + 43200.0]);
        assert_eq!(t.column("label").unwrap().column_type(), ColumnType::Text);
        assert!(matches!(
            parse_dataset("when\n2024-01-02\n2024-01-01\n"),
            Err(ChartError::NonMonotoneTimestamps { row: 2, .. })
        ));
    }

    #[test]
    fn number_labels() {
        assert_eq!(format_number(40.0), "40");
        assert_eq!(format_number(2.5), "2.5");
        assert_eq!(format_number(12500.0), "12.5K");
        assert_eq!(format_number(-0.001), "0");
    }
}

//! Flat, append-only result records and their CSV form.
//!
//! One row per statistic: which experiment and operation produced it, the
//! replication and τ it belongs to, the raw value before normalization, the
//! normalizer, and the seed plus config hash that reproduce it.  Numbers
//! are printed with 17 significant digits so a written table parses back
//! bit-identically.

use std::path::Path;

use crate::config::Operation;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 10] = [
    "experiment",
    "operation",
    "replication",
    "tau",
    "raw_value",
    "normalization",
    "statistic",
    "value",
    "seed",
    "config_hash",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub operation: Operation,
    pub replication: u64,
    /// Ladder rung the row belongs to; `None` for rows without one.
    pub tau: Option<f64>,
    pub raw_value: Option<f64>,
    pub normalization: Option<f64>,
    pub statistic: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) => format!("{v:.16e}"),
    }
}

fn parse_opt(s: &str, column: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| {
        Error::Data(format!(
            "row {line}: column '{column}' holds '{s}', not a number"
        ))
    })
}

impl ResultTable {
    pub fn new() -> Self {
        ResultTable::default()
    }

    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ResultRow>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Stable order by replication id, keeping each replication's own row
    /// order; parallel schedules then serialize identically.
    pub fn normalize_order(&mut self) {
        self.rows.sort_by_key(|r| r.replication);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)
            .map_err(|e| Error::Data(format!("writing result table header: {e}")))?;
        for r in &self.rows {
            w.write_record([
                r.experiment.as_str(),
                &r.operation.to_string(),
                &r.replication.to_string(),
                &fmt_opt(r.tau),
                &fmt_opt(r.raw_value),
                &fmt_opt(r.normalization),
                r.statistic.as_str(),
                &format!("{:.16e}", r.value),
                &r.seed.to_string(),
                r.config_hash.as_str(),
            ])
            .map_err(|e| Error::Data(format!("writing result row: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("flushing result table: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(format!("result table not UTF-8: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn from_csv_str(text: &str) -> Result<ResultTable> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::Data(format!("reading result table header: {e}")))?;
        if header.iter().ne(COLUMNS) {
            return Err(Error::Data(format!(
                "result table header {:?} does not match the expected columns {:?}",
                header.iter().collect::<Vec<_>>(),
                COLUMNS
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
            if rec.len() != COLUMNS.len() {
                return Err(Error::Data(format!(
                    "row {}: {} fields, expected {}",
                    i + 1,
                    rec.len(),
                    COLUMNS.len()
                )));
            }
            let line = i + 1;
            let operation = rec[1].parse::<Operation>().map_err(Error::Data)?;
            let replication = rec[2].parse::<u64>().map_err(|_| {
                Error::Data(format!("row {line}: replication '{}' not an integer", &rec[2]))
            })?;
            let value = rec[7].parse::<f64>().map_err(|_| {
                Error::Data(format!("row {line}: value '{}' not a number", &rec[7]))
            })?;
            let seed = rec[8].parse::<u64>().map_err(|_| {
                Error::Data(format!("row {line}: seed '{}' not an integer", &rec[8]))
            })?;
            rows.push(ResultRow {
                experiment: rec[0].to_string(),
                operation,
                replication,
                tau: parse_opt(&rec[3], "tau", line)?,
                raw_value: parse_opt(&rec[4], "raw_value", line)?,
                normalization: parse_opt(&rec[5], "normalization", line)?,
                statistic: rec[6].to_string(),
                value,
                seed,
                config_hash: rec[9].to_string(),
            });
        }
        Ok(ResultTable { rows })
    }

    pub fn read_csv(path: &Path) -> Result<ResultTable> {
        let text = std::fs::read_to_string(path)?;
        ResultTable::from_csv_str(&text)
    }
}

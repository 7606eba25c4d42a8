//! Result records and their CSV/JSON emission.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// One measurement. Column order is fixed by field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub model_hash: String,
    /// `key=value` pairs joined by `;`.
    pub params: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

/// An asserted invariant of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// JSON for a `.json` extension, CSV otherwise.
    pub fn from_path(p: &std::path::Path) -> Self {
        if p.extension().is_some_and(|e| e == "json") {
            Format::Json
        } else {
            Format::Csv
        }
    }
}

/// Groups rows by experiment in order of first appearance, keeping the
/// order within each group.
pub fn grouped(records: &[Record]) -> Vec<&Record> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.experiment.as_str()) {
            order.push(&r.experiment);
        }
    }
    let mut out: Vec<&Record> = records.iter().collect();
    out.sort_by_key(|r| order.iter().position(|e| *e == r.experiment));
    out
}

pub fn emit_report<W: Write>(records: &[Record], format: Format, mut w: W) -> Result<()> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records to emit".into()));
    }
    let rows = grouped(records);
    match format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &rows)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn write_report(records: &[Record], path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    emit_report(records, Format::from_path(path), std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(exp: &str, metric: &str) -> Record {
        Record {
            experiment: exp.into(),
            model_hash: "m".into(),
            params: "k=1".into(),
            metric: metric.into(),
            value: 0.5,
            stderr: None,
            seed: 1,
            config_hash: "c".into(),
            version: "0".into(),
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let mut out = Vec::new();
        emit_report(&[rec("a", "tv")], Format::Csv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "experiment,model_hash,params,metric,value,stderr,seed,config_hash,version");
        assert_eq!(lines.len(), 2);
        assert!(emit_report(&[], Format::Csv, Vec::new()).is_err());
    }

    #[test]
    fn grouping_is_stable() {
        let rs = [rec("a", "1"), rec("b", "2"), rec("a", "3")];
        let g: Vec<&str> = grouped(&rs).iter().map(|r| r.metric.as_str()).collect();
        assert_eq!(g, vec!["1", "3", "2"]);
        let mut out = Vec::new();
        emit_report(&rs, Format::Json, &mut out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        let keys: Vec<Vec<&String>> = v.as_array().unwrap().iter().map(|o| o.as_object().unwrap().keys().collect()).collect();
        assert!(keys.windows(2).all(|w| w[0] == w[1]));
    }
}

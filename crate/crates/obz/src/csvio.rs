//! Reference-matrix CSV input and log export CSV output (RFC 4180, UTF-8).

use std::io::{Read, Write};

use obz_core::FEATURE_NAMES;

use crate::records::{FeatureKind, LogRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct RefTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RefTable {
    /// FOF when the header is exactly the canonical feature list, embedding otherwise.
    pub fn inferred_kind(&self) -> FeatureKind {
        if self.feature_names.iter().map(String::as_str).eq(FEATURE_NAMES) {
            FeatureKind::Fof
        } else {
            FeatureKind::Embedding
        }
    }
}

/// Header row of column names, then one numeric row per sample.
pub fn read_ref_table<R: Read>(input: R) -> Result<RefTable, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let feature_names: Vec<String> = rdr
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if feature_names.is_empty() || feature_names.iter().any(String::is_empty) {
        return Err("header must name every column".into());
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| format!("row {} has a non-numeric value", i + 1))?;
        rows.push(row);
    }
    Ok(RefTable { feature_names, rows })
}

pub fn write_ref_table<W: Write>(out: W, names: &[&str], rows: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_header() -> Vec<String> {
    let mut h: Vec<String> = ["log_id", "sample_id", "timestamp", "top_label", "top_probability"]
        .into_iter()
        .map(String::from)
        .collect();
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h.extend(
        ["gmm_score", "gmm_outlier", "pca_score", "pca_outlier", "is_outlier"]
            .into_iter()
            .map(String::from),
    );
    h
}

fn export_row(log: &LogRecord) -> Vec<String> {
    let mut row = vec![log.log_id.clone(), log.sample_id.clone(), log.timestamp.0.to_string()];
    match log.top_prediction() {
        Some(p) => {
            row.push(p.label.clone());
            row.push(p.probability.to_string());
        }
        None => row.extend([String::new(), String::new()]),
    }
    match &log.features {
        Some(f) => row.extend(f.values().iter().map(|v| v.to_string())),
        None => row.extend(std::iter::repeat_n(String::new(), FEATURE_NAMES.len())),
    }
    for kind in [obz_core::DetectorKind::Gmm, obz_core::DetectorKind::Pca] {
        match log.verdicts.iter().find(|v| v.detector_kind == kind) {
            Some(v) => {
                row.push(v.score.to_string());
                row.push(v.is_outlier.to_string());
            }
            None => row.extend([String::new(), String::new()]),
        }
    }
    row.push(log.is_outlier().to_string());
    row
}

pub fn write_export<W: Write>(out: W, logs: &[LogRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(export_header())?;
    for log in logs {
        w.write_record(export_row(log))?;
    }
    w.flush()?;
    Ok(())
}

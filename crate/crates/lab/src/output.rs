//! CSV and JSON artifacts of a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kodlab_core::rng::RNG_ALGORITHM;
use kodlab_core::{LabError, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::experiments::ResultRecord;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 7] = ["experiment", "config_digest", "rng", "p", "function", "statistic", "value"];

#[derive(Debug, Serialize)]
pub struct Digests {
    pub config_sha256: String,
    pub csv_sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub schema_version: u32,
    pub experiment: &'a str,
    pub params: &'a BTreeMap<String, String>,
    pub metrics: &'a BTreeMap<String, f64>,
    pub digests: Digests,
    pub rng: &'static str,
    pub wall_time_s: f64,
}

/// Refuses non-finite values; a NaN in the output is always a bug upstream.
pub fn check_finite(rec: &ResultRecord) -> Result<()> {
    let bad_row = rec.rows.iter().find(|r| !r.value.is_finite()).map(|r| {
        format!("{} at p={:?} {}", r.statistic, r.p, r.function)
    });
    let bad_metric = rec.metrics.iter().find(|(_, v)| !v.is_finite()).map(|(k, _)| k.clone());
    match bad_row.or(bad_metric) {
        Some(what) => Err(LabError::Evaluation(format!("non-finite value in {what}"))),
        None => Ok(()),
    }
}

/// The long-format table. Values use Rust's shortest round-trip scientific
/// form, so equal numbers give equal bytes.
pub fn csv_bytes(rec: &ResultRecord) -> Result<Vec<u8>> {
    let io = |e: csv::Error| LabError::Evaluation(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for row in &rec.rows {
        let p = row.p.map(|p| p.to_string()).unwrap_or_default();
        let value = format!("{:e}", row.value);
        w.write_record([
            rec.experiment.as_str(),
            rec.config_digest.as_str(),
            RNG_ALGORITHM,
            p.as_str(),
            row.function.as_str(),
            row.statistic.as_str(),
            value.as_str(),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| LabError::Evaluation(format!("csv: {e}")))
}

/// Writes `<out>/<experiment>.csv` and `<out>/<experiment>.json`.
pub fn write(rec: &ResultRecord, out: &Path, wall_time_s: f64) -> Result<(PathBuf, PathBuf)> {
    check_finite(rec)?;
    let io = |e: std::io::Error| LabError::Evaluation(format!("writing {}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let csv = csv_bytes(rec)?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        experiment: &rec.experiment,
        params: &rec.params,
        metrics: &rec.metrics,
        digests: Digests {
            config_sha256: rec.config_digest.clone(),
            csv_sha256: hex(&Sha256::digest(&csv)),
        },
        rng: RNG_ALGORITHM,
        wall_time_s,
    };
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| LabError::Evaluation(format!("json: {e}")))?;
    let csv_path = out.join(format!("{}.csv", rec.experiment));
    let json_path = out.join(format!("{}.json", rec.experiment));
    fs::write(&csv_path, csv).map_err(io)?;
    fs::write(&json_path, json).map_err(io)?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Row;

    fn record(value: f64) -> ResultRecord {
        ResultRecord {
            experiment: "bergman".into(),
            config_digest: "abc".into(),
            params: BTreeMap::new(),
            metrics: BTreeMap::from([("m".to_string(), 1.0)]),
            rows: vec![Row {
                p: Some(3),
                function: "-".into(),
                statistic: "dim".into(),
                value,
            }],
        }
    }

    #[test]
    fn csv_has_header_and_round_trip_values() {
        let bytes = csv_bytes(&record(0.1)).unwrap();
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        assert_eq!(r.headers().unwrap(), CSV_COLUMNS.as_slice());
        let row = r.records().next().unwrap().unwrap();
        assert_eq!(&row[2], RNG_ALGORITHM);
        assert_eq!(&row[3], "3");
        assert_eq!(row[6].parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn nan_is_refused() {
        assert!(check_finite(&record(f64::NAN)).is_err());
        assert!(check_finite(&record(2.0)).is_ok());
    }
}

//! Result records and their CSV / sidecar serialization.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::geometry::Position3;
use crate::metrics::Peb;

pub const CSV_HEADER: [&str; 16] = [
    "trial_or_cell",
    "x",
    "y",
    "z",
    "peb_total",
    "peb_ue",
    "peb_eve",
    "rate_ue",
    "rate_eve",
    "secrecy_rate",
    "rho",
    "n_e",
    "iterations",
    "status",
    "rank1_defect",
    "wall_ms",
];

/// One trial, heatmap cell, or tradeoff point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub index: usize,
    pub position: Position3,
    pub peb: Peb,
    pub rate_ue: f64,
    pub rate_eve: f64,
    pub secrecy_rate: f64,
    pub rho: f64,
    pub n_e: usize,
    pub iterations: usize,
    pub status: String,
    pub rank1_defect: f64,
    pub wall_ms: f64,
}

impl ResultRecord {
    /// Record of a failed trial: every numeric output is the sentinel.
    pub fn failed(index: usize, position: Position3, rho: f64, n_e: usize, status: String) -> Self {
        Self {
            index,
            position,
            peb: Peb::INFINITE,
            rate_ue: f64::INFINITY,
            rate_eve: f64::INFINITY,
            secrecy_rate: f64::INFINITY,
            rho,
            n_e,
            iterations: 0,
            status,
            rank1_defect: f64::INFINITY,
            wall_ms: 0.0,
        }
    }
}

/// Shortest round-trip decimal; anything non-finite becomes the "inf"
/// sentinel so no untagged NaN reaches the file.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

pub fn to_csv(records: &[ResultRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        let p = r.position;
        w.write_record([
            r.index.to_string(),
            fmt_float(p.x),
            fmt_float(p.y),
            fmt_float(p.z),
            fmt_float(r.peb.total),
            fmt_float(r.peb.ue),
            fmt_float(r.peb.eve),
            fmt_float(r.rate_ue),
            fmt_float(r.rate_eve),
            fmt_float(r.secrecy_rate),
            fmt_float(r.rho),
            r.n_e.to_string(),
            r.iterations.to_string(),
            r.status.clone(),
            fmt_float(r.rank1_defect),
            fmt_float(r.wall_ms),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

fn csv_err(e: csv::Error) -> crate::Error {
    std::io::Error::other(e.to_string()).into()
}

/// Sidecar `<run>.meta` contents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub run_id: String,
    pub mode: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub rows: usize,
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.meta`; returns both paths.
pub fn write_outputs(dir: &Path, name: &str, records: &[ResultRecord], meta: &RunMeta) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    let meta_path = dir.join(format!("{name}.meta"));
    std::fs::write(&csv_path, to_csv(records)?)?;
    write_meta(&meta_path, meta)?;
    Ok((csv_path, meta_path))
}

pub fn write_meta(path: &Path, meta: &RunMeta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_and_sentinels() {
        let mut ok = ResultRecord::failed(0, Position3::new(5.0, 10.0, 2.0), 0.5, 8, "converged".into());
        ok.peb = Peb { total: 1.5, ue: 1.0, eve: 0.1 + 0.2 };
        ok.rate_ue = 2.0;
        ok.rate_eve = f64::NAN;
        ok.wall_ms = 0.0;
        let bad = ResultRecord::failed(1, Position3::new(0.0, 0.0, 2.0), 0.0, 8, "error: a, b".into());
        let text = String::from_utf8(to_csv(&[ok, bad]).unwrap()).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "0,5,10,2,1.5,1,0.30000000000000004,2,inf,inf,0.5,8,0,converged,inf,0");
        assert_eq!(lines[2], "1,0,0,2,inf,inf,inf,inf,inf,inf,0,8,0,\"error: a, b\",inf,0");
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r') && !text.contains("NaN"));
    }

    #[test]
    fn floats_round_trip() {
        for v in [1e-13, 3.782315130682147e11, 0.1 + 0.2, 2.5878143735620313] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    proptest::proptest! {
        #[test]
        fn any_float_survives_the_csv(v in proptest::num::f64::ANY) {
            let text = fmt_float(v);
            if v.is_finite() {
                proptest::prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits());
            } else {
                proptest::prop_assert_eq!(text, "inf");
            }
        }
    }
}

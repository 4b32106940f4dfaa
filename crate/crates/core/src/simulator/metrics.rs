//! Per-frame metrics log and run summary.
//!
//! CSV header:
//!
//! ```text
//! step,time_s,rcm_error_mm,e_t0,e_t1,e_t2,e_t3,mpd_px,inliers,tip_x_mm,tip_y_mm,tip_z_mm,target_vertex,event
//! ```
//!
//! `mpd_px` is `NaN` and `inliers` is 0 on frames where registration failed.
//! `event` is empty or one of `advance:<vertex>`, `converged`,
//! `registration_failed`, `burst`, `failed`, `max_steps`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub time_s: f64,
    pub rcm_error_mm: f64,
    pub e_t0: f64,
    pub e_t1: f64,
    pub e_t2: f64,
    pub e_t3: f64,
    pub mpd_px: f64,
    pub inliers: usize,
    /// Ground-truth tip position, evaluation only.
    pub tip_x_mm: f64,
    pub tip_y_mm: f64,
    pub tip_z_mm: f64,
    pub target_vertex: usize,
    pub event: String,
}

impl MetricsRecord {
    pub fn task_error(&self) -> [f64; 4] {
        [self.e_t0, self.e_t1, self.e_t2, self.e_t3]
    }

    pub fn tip_mm(&self) -> [f64; 3] {
        [self.tip_x_mm, self.tip_y_mm, self.tip_z_mm]
    }
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| SimError::Io(e.to_string()))?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| SimError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))?;
    Ok(())
}

pub const CSV_HEADER: [&str; 14] = [
    "step",
    "time_s",
    "rcm_error_mm",
    "e_t0",
    "e_t1",
    "e_t2",
    "e_t3",
    "mpd_px",
    "inliers",
    "tip_x_mm",
    "tip_y_mm",
    "tip_z_mm",
    "target_vertex",
    "event",
];

pub fn metrics_to_csv_string(records: &[MetricsRecord]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>, SimError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| SimError::Config(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(SimError::Config(format!("unexpected metrics header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    r.deserialize().map(|rec| rec.map_err(|e| SimError::Config(e.to_string()))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub status: String,
    pub final_mpd_px: Option<f64>,
    pub max_rcm_error_mm: f64,
    pub mean_rcm_error_mm: f64,
    /// Distance of the final tip from the target vertex's capture-time tip.
    pub final_tip_error_mm: Option<f64>,
    pub steps: usize,
    pub path: Vec<usize>,
    #[serde(default)]
    pub wall_time_s: Option<f64>,
}

/// Summary statistics of a metrics log. `target_tip_mm` is the capture-time
/// tip of the final target, if known.
pub fn summarize(records: &[MetricsRecord], status: &str, path: &[usize], target_tip_mm: Option<[f64; 3]>) -> RunSummary {
    let n = records.len();
    let max_rcm = records.iter().map(|r| r.rcm_error_mm).fold(0.0, f64::max);
    let mean_rcm = if n == 0 { 0.0 } else { records.iter().map(|r| r.rcm_error_mm).sum::<f64>() / n as f64 };
    let final_mpd_px = records.iter().rev().map(|r| r.mpd_px).find(|m| m.is_finite());
    let final_tip_error_mm = match (records.last(), target_tip_mm) {
        (Some(last), Some(t)) => {
            let p = last.tip_mm();
            Some(((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt())
        }
        _ => None,
    };
    RunSummary {
        converged: status == "converged",
        status: status.to_string(),
        final_mpd_px,
        max_rcm_error_mm: max_rcm,
        mean_rcm_error_mm: mean_rcm,
        final_tip_error_mm,
        steps: n,
        path: path.to_vec(),
        wall_time_s: None,
    }
}

/// Rebuilds a summary from a metrics log alone: the status comes from the
/// last event and the path from the order of target vertices.
pub fn replay_summary(records: &[MetricsRecord], target_tip_mm: Option<[f64; 3]>) -> RunSummary {
    let status = records
        .last()
        .and_then(|r| r.event.split(';').find(|e| ["converged", "failed", "max_steps"].contains(e)))
        .unwrap_or("incomplete");
    let mut path: Vec<usize> = Vec::new();
    for r in records {
        if path.last() != Some(&r.target_vertex) {
            path.push(r.target_vertex);
        }
    }
    summarize(records, status, &path, target_tip_mm)
}

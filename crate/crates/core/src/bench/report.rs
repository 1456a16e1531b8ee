use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchError, BenchmarkReport, SampleRecord, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown report format {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub threshold: Threshold,
    pub rate: f64,
    pub coarse_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n: usize,
    pub mean_rot_err: f64,
    pub median_rot_err: f64,
    pub mean_trans_err: f64,
    pub median_trans_err: f64,
    pub coarse_median_rot_err: f64,
    pub coarse_median_trans_err: f64,
    /// Fraction of samples whose final rotation error is no worse than the
    /// coarse one.
    pub not_worse_frac: f64,
    pub success: Vec<SuccessRate>,
    pub mean_coarse_ms: f64,
    pub mean_refine_ms: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Lower median for even counts, so it is always a recorded value.
fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[(s.len() - 1) / 2]
}

/// Recomputes every aggregate from the records.
pub fn aggregate(records: &[SampleRecord], thresholds: &[Threshold]) -> Aggregates {
    let col = |f: fn(&SampleRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let rot = col(|r| r.rot_err);
    let tr = col(|r| r.trans_err);
    let n = records.len().max(1) as f64;
    let ok = |rot: f64, tr: f64, t: &Threshold| rot < t.rot_deg && tr < t.trans;
    let success = thresholds
        .iter()
        .map(|t| SuccessRate {
            threshold: *t,
            rate: records.iter().filter(|r| r.error.is_none() && ok(r.rot_err, r.trans_err, t)).count() as f64 / n,
            coarse_rate: records
                .iter()
                .filter(|r| r.error.is_none() && ok(r.coarse_rot_err, r.coarse_trans_err, t))
                .count() as f64
                / n,
        })
        .collect();
    Aggregates {
        n: records.len(),
        mean_rot_err: mean(&rot),
        median_rot_err: median(&rot),
        mean_trans_err: mean(&tr),
        median_trans_err: median(&tr),
        coarse_median_rot_err: median(&col(|r| r.coarse_rot_err)),
        coarse_median_trans_err: median(&col(|r| r.coarse_trans_err)),
        not_worse_frac: records.iter().filter(|r| r.rot_err <= r.coarse_rot_err).count() as f64 / n,
        success,
        mean_coarse_ms: mean(&col(|r| r.coarse_ms)),
        mean_refine_ms: mean(&col(|r| r.refine_ms)),
    }
}

/// CSV columns, in order.
pub const CSV_HEADER: [&str; 11] = [
    "index",
    "coarse_rot_err",
    "coarse_trans_err",
    "rot_err",
    "trans_err",
    "status",
    "n_matches",
    "n_inliers",
    "coarse_ms",
    "refine_ms",
    "error",
];

pub(super) fn emit_report(report: &BenchmarkReport, path: &Path, format: ReportFormat) -> Result<(), BenchError> {
    match format {
        ReportFormat::Json => {
            std::fs::write(path, serde_json::to_string_pretty(report)?)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(CSV_HEADER)?;
            for r in &report.records {
                let (status, nm, ni) = match &r.diagnostics {
                    Some(d) => (
                        serde_json::to_value(d.status)?.as_str().unwrap_or_default().to_string(),
                        d.n_matches.to_string(),
                        d.n_inliers.to_string(),
                    ),
                    None => (String::new(), String::new(), String::new()),
                };
                w.write_record([
                    r.index.to_string(),
                    r.coarse_rot_err.to_string(),
                    r.coarse_trans_err.to_string(),
                    r.rot_err.to_string(),
                    r.trans_err.to_string(),
                    status,
                    nm,
                    ni,
                    r.coarse_ms.to_string(),
                    r.refine_ms.to_string(),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

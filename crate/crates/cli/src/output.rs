use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use ssoc_core::certify::Certificate;
use ssoc_core::pipeline::sample_trajectory;
use ssoc_core::reconstruction::Reconstruction;
use ssoc_core::residuals::ResidualReport;

use crate::CliError;

pub const TRAJECTORY_SAMPLES_PER_INTERVAL: usize = 10;

/// Shortest representation that parses back to the same value.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:e}")
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn finish_csv(path: &Path, mut w: csv::Writer<Vec<u8>>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))?;
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::io(path, e.into_error()))?;
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_trajectory(path: &Path, rec: &Reconstruction) -> Result<(), CliError> {
    let rows = sample_trajectory(rec, TRAJECTORY_SAMPLES_PER_INTERVAL)?;
    let (n, m) = (rec.x.dim(), rec.u.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|j| format!("u{j}")));
    header.extend((1..=n).map(|i| format!("p{i}")));
    w.write_record(&header)?;
    for (t, x, u, p) in rows {
        let record: Vec<String> = std::iter::once(t)
            .chain(x)
            .chain(u)
            .chain(p)
            .map(num)
            .collect();
        w.write_record(&record)?;
    }
    finish_csv(path, w)
}

pub fn write_residuals(path: &Path, report: &ResidualReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "t_k", "t_k1", "dyn_l2", "stat_l2"])?;
    for r in &report.per_interval {
        w.write_record([
            r.k.to_string(),
            num(r.t_start),
            num(r.t_end),
            num(r.dyn_l2),
            num(r.stat_l2),
        ])?;
    }
    finish_csv(path, w)
}

/// One row of the convergence table; `cert` is `None` when the run failed.
pub struct SweepRow {
    pub n: usize,
    pub cert: Option<Certificate>,
    pub status: String,
}

pub fn write_convergence(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "N",
        "E_N2",
        "E_inf",
        "alpha_hat",
        "threshold",
        "accepted",
        "status",
    ])?;
    for row in rows {
        let record = match &row.cert {
            Some(c) => [
                row.n.to_string(),
                num(c.e_n2),
                num(c.e_inf),
                num(c.alpha_hat),
                num(c.threshold),
                c.accepted.to_string(),
                row.status.clone(),
            ],
            None => [
                row.n.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                row.status.clone(),
            ],
        };
        w.write_record(&record)?;
    }
    finish_csv(path, w)
}

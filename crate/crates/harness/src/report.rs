//! Plot-ready CSV output and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toe_core::routing::percentile;

use crate::config::{hex, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{RunReport, SchemeRun, SnapshotRow};

pub const REPORT_FILES: [&str; 5] =
    ["timeseries.csv", "percentiles.csv", "cluster_report.csv", "pca.csv", "rounding_quality.csv"];

/// Five-number box summary plus the median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        v.sort_by(f64::total_cmp);
        Self {
            count: v.len(),
            min: v.first().copied().unwrap_or(0.0),
            p5: percentile(&v, 5.0),
            p50: percentile(&v, 50.0),
            p95: percentile(&v, 95.0),
            max: v.last().copied().unwrap_or(0.0),
        }
    }
}

pub type Metric = fn(&SnapshotRow) -> f64;

pub const METRICS: [(&str, Metric); 4] =
    [("mlu", |r| r.mlu), ("lu_p50", |r| r.lu_p50), ("lu_p99", |r| r.lu_p99), ("tax", |r| r.tax)];

/// Box stats of one metric over the run's steady-state snapshots, or all
/// snapshots when every epoch is a bootstrap.
pub fn run_stats(run: &SchemeRun, metric: Metric) -> BoxStats {
    let steady: Vec<f64> = run.steady_rows().map(metric).collect();
    if steady.is_empty() {
        BoxStats::of(run.epochs.iter().flat_map(|e| &e.rows).map(metric))
    } else {
        BoxStats::of(steady)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sorted_runs(report: &RunReport) -> Vec<&SchemeRun> {
    let mut runs: Vec<&SchemeRun> = report.runs.iter().collect();
    runs.sort_by_key(|r| (r.period, r.label()));
    runs
}

pub fn timeseries_csv(report: &RunReport) -> String {
    let mut s = String::from("period,scheme,topology,routing,epoch,bootstrap,snapshot,mlu,lu_p50,lu_p99,tax\n");
    for run in sorted_runs(report) {
        for e in &run.epochs {
            for r in &e.rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    run.period,
                    run.label(),
                    run.scheme.topology,
                    run.scheme.routing,
                    e.epoch,
                    e.topology.bootstrap,
                    r.snapshot,
                    r.mlu,
                    r.lu_p50,
                    r.lu_p99,
                    r.tax
                )
                .unwrap();
            }
        }
    }
    s
}

pub fn percentiles_csv(report: &RunReport) -> String {
    let mut s = String::from("period,scheme,metric,count,min,p5,p50,p95,max\n");
    for run in sorted_runs(report) {
        for (name, f) in METRICS {
            let b = run_stats(run, f);
            writeln!(s, "{},{},{name},{},{},{},{},{},{}", run.period, run.label(), b.count, b.min, b.p5, b.p50, b.p95, b.max)
                .unwrap();
        }
    }
    s
}

pub fn cluster_report_csv(report: &RunReport) -> String {
    let mut s = String::from(
        "period,scheme,epoch,window_start,window_end,snapshot_start,snapshot_end,bootstrap,k,silhouette,alpha,representatives,topology\n",
    );
    for run in sorted_runs(report) {
        for e in &run.epochs {
            let t = &e.topology;
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                run.period,
                run.label(),
                e.epoch,
                e.window.start,
                e.window.end,
                e.snapshots.start,
                e.snapshots.end,
                t.bootstrap,
                t.k(),
                opt(t.silhouette),
                opt(t.alpha),
                t.representative_digest(),
                t.topology_digest()
            )
            .unwrap();
        }
    }
    s
}

pub fn rounding_quality_csv(report: &RunReport) -> String {
    let mut s = String::from("period,scheme,epoch,method,violations,violation_ratio,goodness,iterations_used\n");
    for run in sorted_runs(report) {
        for e in &run.epochs {
            if let Some(r) = &e.topology.rounding {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    run.period,
                    run.label(),
                    e.epoch,
                    r.method.as_str(),
                    r.violations,
                    r.violation_ratio,
                    r.goodness,
                    r.iterations_used
                )
                .unwrap();
            }
        }
    }
    s
}

pub fn pca_csv(report: &RunReport) -> String {
    let mut s = String::from("snapshot,pc1,pc2\n");
    if let Some(p) = &report.pca {
        for (t, (a, b)) in p.coords.iter().enumerate() {
            writeln!(s, "{t},{a},{b}").unwrap();
        }
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: String,
    seed: u64,
    trace_seed: u64,
    pods: usize,
    snapshots: usize,
    periods: Vec<usize>,
    pca_pve: Option<(f64, f64)>,
    files: BTreeMap<&'a str, String>,
    config: &'a ExperimentConfig,
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Write all report files plus `manifest.json` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.runs.is_empty() {
        return Err(HarnessError::Config("no records to report".into()));
    }
    create_dir(dir)?;
    let bodies = [
        timeseries_csv(report),
        percentiles_csv(report),
        cluster_report_csv(report),
        pca_csv(report),
        rounding_quality_csv(report),
    ];
    let mut files = BTreeMap::new();
    let mut written = Vec::new();
    for (name, body) in REPORT_FILES.iter().zip(&bodies) {
        let path = dir.join(name);
        write_file(&path, body.as_bytes())?;
        files.insert(*name, hex(&Sha256::digest(body.as_bytes())));
        written.push(path);
    }
    let mut periods: Vec<usize> = report.runs.iter().map(|r| r.period).collect();
    periods.sort_unstable();
    periods.dedup();
    let mut config = report.config.clone();
    config.output_dir = None;
    let manifest = Manifest {
        config_hash: report.config.hash(),
        seed: report.config.seed,
        trace_seed: report.config.trace_seed(),
        pods: report.pods,
        snapshots: report.trace_len,
        periods,
        pca_pve: report.pca.as_ref().map(|p| p.pve),
        files,
        config: &config,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}

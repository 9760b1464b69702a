//! Writes the two JSON artifacts of a run. `report.json` holds only the
//! experiment's result and is byte-identical across repeated runs with the
//! same config and seed; `manifest.json` adds environment metadata such as
//! wall time and a timestamp.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::tasks::TaskOutcome;

pub fn ensure_dir(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)
}

fn write_pretty(path: &Path, value: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json encoding");
    text.push('\n');
    std::fs::write(path, text)
}

pub fn write_report(out_dir: &Path, task: &str, seed: u64, report: &Value) -> std::io::Result<()> {
    let doc = json!({
        "task": task,
        "seed": seed,
        "result": report,
    });
    write_pretty(&out_dir.join("report.json"), &doc)
}

pub fn write_manifest(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &TaskOutcome,
    wall_time_seconds: f64,
    status: &str,
) -> std::io::Result<()> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "task": cfg.task,
        "seed": cfg.seed,
        "status": status,
        "model_hash": outcome.model_hash,
        "config_path": cfg.source_path,
        "config_text": cfg.raw_text,
        "series_files": outcome.series_files,
        "core_version": stable_harnack::VERSION,
        "cli_version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": wall_time_seconds,
        "timestamp_unix": timestamp,
    });
    write_pretty(&out_dir.join("manifest.json"), &doc)
}

/// Manifest for a run that failed after parsing: report.json still gets an
/// error document so downstream tooling sees a consistent shape.
pub fn write_error_report(
    out_dir: &Path,
    task: &str,
    seed: u64,
    error: &str,
) -> std::io::Result<()> {
    let doc = json!({
        "task": task,
        "seed": seed,
        "error": error,
    });
    write_pretty(&out_dir.join("report.json"), &doc)
}

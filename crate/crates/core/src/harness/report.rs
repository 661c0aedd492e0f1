use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::experiment::{RunOutput, RunReport, RunSummary};
use crate::allocator::agent::TrainedPolicies;
use crate::config::Algorithm;
use crate::error::Result;
use crate::policy::PolicyNet;

/// Column order of `slots.csv`.
pub const SLOT_COLUMNS: [&str; 16] = [
    "slot",
    "ul_reward",
    "dl_reward",
    "fop_ul",
    "fop_dl",
    "power_term",
    "hmd_power_w",
    "beam_power_w",
    "ul_penalty",
    "dl_penalty",
    "ul_cancelled",
    "dl_cancelled",
    "ul_dropped",
    "dl_dropped",
    "ul_audit_ok",
    "dl_audit_ok",
];

/// Column order of `epochs.csv`.
pub const EPOCH_COLUMNS: [&str; 8] = [
    "link",
    "episode",
    "epoch",
    "reward",
    "moving_avg",
    "loss",
    "cancelled",
    "epsilon",
];

/// Header row followed by one row per record. The header is written even
/// when there are no records.
pub fn write_csv<T: Serialize, W: Write>(columns: &[&str], rows: &[T], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &RunSummary) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)?)
}

pub fn parse_summary(s: &str) -> Result<RunSummary> {
    Ok(serde_json::from_str(s)?)
}

/// Write `report.json`, `slots.csv` and `epochs.csv` into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), summary_json(&report.summary)?)?;
    write_csv(&SLOT_COLUMNS, &report.slots, fs::File::create(dir.join("slots.csv"))?)?;
    write_csv(
        &EPOCH_COLUMNS,
        &report.epochs,
        fs::File::create(dir.join("epochs.csv"))?,
    )?;
    Ok(())
}

/// Policy checkpoints as `models/uplink.json` and `models/downlink.json`.
pub fn write_policies(policies: &TrainedPolicies, dir: &Path) -> Result<()> {
    let models = dir.join("models");
    fs::create_dir_all(&models)?;
    fs::write(models.join("uplink.json"), policies.uplink.to_json()?)?;
    fs::write(models.join("downlink.json"), policies.downlink.to_json()?)?;
    Ok(())
}

/// Read checkpoints written by [`write_policies`]; `dir` is the run
/// directory or its `models/` subdirectory.
pub fn read_policies(dir: &Path, algorithm: Algorithm) -> Result<TrainedPolicies> {
    let models = if dir.join("models").is_dir() {
        dir.join("models")
    } else {
        dir.to_path_buf()
    };
    let load = |name: &str| -> Result<PolicyNet> { PolicyNet::from_json(&fs::read_to_string(models.join(name))?) };
    Ok(TrainedPolicies {
        algorithm,
        uplink: load("uplink.json")?,
        downlink: load("downlink.json")?,
    })
}

/// Everything a run produces under `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    write_report(&out.report, dir)?;
    if let Some(p) = &out.policies {
        write_policies(p, dir)?;
    }
    Ok(())
}

//! CSV result files and the reproducibility manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::CSV_HEADER;

use super::experiment::{AblationReport, Measurement, SimulationRun, StageReport};
use super::HarnessError;

pub const PSYCHOMETRIC_HEADER: [&str; 5] = ["condition", "axis", "level", "trials", "detections"];
pub const THRESHOLDS_HEADER: [&str; 7] = ["condition", "axis", "midpoint", "slope", "threshold", "ci_low", "ci_high"];
pub const STAGES_HEADER: [&str; 13] = [
    "seed",
    "probe",
    "trial",
    "stage",
    "compiled_fraction",
    "focus",
    "axis",
    "midpoint",
    "slope",
    "threshold",
    "ci_low",
    "ci_high",
    "policy_unchanged",
];
pub const ABLATION_HEADER: [&str; 9] = [
    "seed",
    "variant",
    "axis",
    "threshold",
    "ci_low",
    "ci_high",
    "diff_from_baseline",
    "diff_ci_low",
    "diff_ci_high",
];

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_psychometric(dir: &Path, ms: &[&Measurement]) -> Result<(), HarnessError> {
    let rows = ms.iter().flat_map(|m| {
        m.data.levels.iter().zip(&m.data.detect_counts).map(move |(l, k)| {
            vec![
                m.condition.clone(),
                m.data.axis.to_string(),
                l.to_string(),
                m.data.trials_per_level.to_string(),
                k.to_string(),
            ]
        })
    });
    write_table(&dir.join("psychometric.csv"), &PSYCHOMETRIC_HEADER, rows)
}

fn threshold_fields(m: &Measurement) -> [String; 5] {
    [
        num(m.fit.map(|f| f.midpoint)),
        num(m.fit.map(|f| f.slope)),
        num(m.threshold()),
        num(m.estimate.map(|e| e.ci_low)),
        num(m.estimate.map(|e| e.ci_high)),
    ]
}

pub fn write_thresholds(dir: &Path, ms: &[&Measurement]) -> Result<(), HarnessError> {
    let rows = ms.iter().map(|m| {
        let mut row = vec![m.condition.clone(), m.data.axis.to_string()];
        row.extend(threshold_fields(m));
        row
    });
    write_table(&dir.join("thresholds.csv"), &THRESHOLDS_HEADER, rows)
}

pub fn write_simulation(dir: &Path, runs: &[SimulationRun]) -> Result<(), HarnessError> {
    let path = dir.join("events.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(CSV_HEADER).map_err(csv_err(&path))?;
    for r in runs {
        r.log
            .write_rows(&mut w, Some(&format!("seed={}", r.seed)))
            .map_err(|e| HarnessError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
    }
    w.flush().map_err(io_err(&path))
}

pub fn write_stages(dir: &Path, report: &StageReport) -> Result<(), HarnessError> {
    let rows = report.seeds.iter().flat_map(|s| s.probes.iter()).map(|r| {
        let m = &r.measurement;
        let [mid, slope, thr, lo, hi] = threshold_fields(m);
        vec![
            r.seed.to_string(),
            r.probe.to_string(),
            r.trial.to_string(),
            r.stage.to_string(),
            r.compiled_fraction.to_string(),
            r.focus.to_string(),
            r.axis.to_string(),
            mid,
            slope,
            thr,
            lo,
            hi,
            r.policy_unchanged.to_string(),
        ]
    });
    write_table(&dir.join("stages.csv"), &STAGES_HEADER, rows)?;

    let ms: Vec<&Measurement> = report
        .seeds
        .iter()
        .flat_map(|s| s.probes.iter().map(|r| &r.measurement))
        .collect();
    write_psychometric(dir, &ms)?;
    write_thresholds(dir, &ms)?;

    let path = dir.join("events.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(CSV_HEADER).map_err(csv_err(&path))?;
    for s in &report.seeds {
        for (trial, log) in s.training_logs.iter().enumerate() {
            log.write_rows(&mut w, Some(&format!("seed={};trial={trial}", s.seed)))
                .map_err(|e| HarnessError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
        }
    }
    w.flush().map_err(io_err(&path))
}

pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<(), HarnessError> {
    let rows = report.rows.iter().map(|r| {
        let m = &r.measurement;
        let d = r.difference.as_ref().and_then(|d| d.as_ref().ok());
        vec![
            r.seed.to_string(),
            r.variant.name().to_string(),
            m.data.axis.to_string(),
            num(m.threshold()),
            num(m.estimate.map(|e| e.ci_low)),
            num(m.estimate.map(|e| e.ci_high)),
            num(d.map(|d| d.difference)),
            num(d.map(|d| d.ci_low)),
            num(d.map(|d| d.ci_high)),
        ]
    });
    write_table(&dir.join("ablation.csv"), &ABLATION_HEADER, rows)?;
    let ms: Vec<&Measurement> = report.rows.iter().map(|r| &r.measurement).collect();
    write_psychometric(dir, &ms)?;
    write_thresholds(dir, &ms)?;
    for (seed, bytes) in &report.stimuli {
        let path = dir.join(format!("stimuli-s{seed}.csv"));
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn config_hash(config_bytes: &[u8]) -> String {
    Sha256::digest(config_bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_manifest(dir: &Path, command: &str, config_bytes: &[u8], seeds: &[u64]) -> Result<(), HarnessError> {
    let path = dir.join("manifest.txt");
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    write!(
        f,
        "command = {command}\nconfig_sha256 = {}\nseeds = {}\nversion = {}\n",
        config_hash(config_bytes),
        seeds.join(","),
        env!("CARGO_PKG_VERSION"),
    )
    .map_err(io_err(&path))
}

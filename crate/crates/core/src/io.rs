//! Output files of a run. CSV floats use shortest round-trip formatting, so
//! identical results give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigFileError, RunManifest};
use crate::harness::{EvalRecord, ExperimentConfig, ExperimentOutput, RunDiagnostic};
use crate::stats::{CurvePoint, Summary, Window, SIGNIFICANCE};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const SUMMARY_TEXT_FILE: &str = "summary.txt";
pub const CURVES_FILE: &str = "curves.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Every file a run writes, manifest last.
pub const ARTIFACTS: [&str; 5] = [RECORDS_FILE, SUMMARY_CSV_FILE, SUMMARY_TEXT_FILE, CURVES_FILE, MANIFEST_FILE];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Manifest(#[from] ConfigFileError),
}

fn write_csv<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<(), OutputError> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|source| OutputError::Io { path: "<csv>".into(), source })?;
    Ok(())
}

pub fn write_records<W: Write>(w: W, records: &[EvalRecord]) -> Result<(), OutputError> {
    write_csv(w, records)
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<EvalRecord>, OutputError> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<Result<Vec<EvalRecord>, _>>()?)
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    policy_id: &'a str,
    cumulative_mean: f64,
    cumulative_std: f64,
    cumulative_near_best: bool,
    initial_mean: f64,
    initial_std: f64,
    initial_near_best: bool,
    final_mean: f64,
    final_std: f64,
    final_near_best: bool,
}

pub fn write_summary_csv<W: Write>(w: W, summary: &Summary) -> Result<(), OutputError> {
    write_csv(
        w,
        summary.rows.iter().map(|r| SummaryCsvRow {
            policy_id: &r.policy_id,
            cumulative_mean: r.cumulative.mean,
            cumulative_std: r.cumulative.std,
            cumulative_near_best: r.cumulative.near_best,
            initial_mean: r.initial.mean,
            initial_std: r.initial.std,
            initial_near_best: r.initial.near_best,
            final_mean: r.final_.mean,
            final_std: r.final_.std,
            final_near_best: r.final_.near_best,
        }),
    )
}

pub fn write_curves<W: Write>(w: W, curves: &[CurvePoint]) -> Result<(), OutputError> {
    write_csv(w, curves)
}

/// Aligned, human-readable table. Entries marked `*` are the best in their
/// window or not significantly different from it.
pub fn summary_text(summary: &Summary, diagnostics: &[RunDiagnostic]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "runs: {}  evaluation points per run: {}  window: {} points",
        summary.runs, summary.eval_points, summary.window_len
    );
    let _ = writeln!(s);
    let id_width = summary.rows.iter().map(|r| r.policy_id.len()).max().unwrap_or(0).max("policy".len());
    let _ = write!(s, "{:<id_width$}", "policy");
    for w in Window::ALL {
        let _ = write!(s, "  {:>20}", w.label());
    }
    let _ = writeln!(s);
    for r in &summary.rows {
        let _ = write!(s, "{:<id_width$}", r.policy_id);
        for w in Window::ALL {
            let st = r.window(w);
            let cell = format!("{:.1} ± {:.1}{}", st.mean, st.std, if st.near_best { "*" } else { " " });
            let _ = write!(s, "  {cell:>20}");
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "* best, or not significantly different from the best (Student's t-test, p > {SIGNIFICANCE})");
    let _ = writeln!(s, "diverged runs: {}", diagnostics.len());
    for d in diagnostics {
        let _ = writeln!(s, "  run {} episode {}: {}", d.run_id, d.episode, d.message);
    }
    s
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), OutputError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), OutputError>) -> Result<Vec<u8>, OutputError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Writes all artifacts of a finished run into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    output: &ExperimentOutput,
    summary: &Summary,
    curves: &[CurvePoint],
) -> Result<RunManifest, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.display().to_string(), source })?;
    write_file(dir, RECORDS_FILE, &to_bytes(|b| write_records(b, &output.records))?)?;
    write_file(dir, SUMMARY_CSV_FILE, &to_bytes(|b| write_summary_csv(b, summary))?)?;
    write_file(dir, SUMMARY_TEXT_FILE, summary_text(summary, &output.diagnostics).as_bytes())?;
    write_file(dir, CURVES_FILE, &to_bytes(|b| write_curves(b, curves))?)?;
    let manifest = RunManifest::new(cfg, &ARTIFACTS);
    write_file(dir, MANIFEST_FILE, manifest.to_toml()?.as_bytes())?;
    Ok(manifest)
}

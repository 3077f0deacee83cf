//! JSON-lines output for trials and results.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::metrics::TrialSummary;

use super::pipeline::TrialOutput;

pub const RESULTS_FILE: &str = "results.jsonl";

pub fn write_jsonl<T: Serialize, W: Write>(out: &mut W, items: &[T]) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut *out, it).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, items)?;
    w.flush()
}

/// Paths written for one trial.
#[derive(Debug, Clone)]
pub struct TrialFiles {
    pub dir: PathBuf,
    pub cues: PathBuf,
    pub truth: PathBuf,
    pub detections: PathBuf,
    pub events: PathBuf,
}

/// Writes the per-trial logs under `root/trials/<id>/` and appends the
/// summary row to `root/results.jsonl`.
pub fn write_trial(root: &Path, out: &TrialOutput) -> std::io::Result<TrialFiles> {
    let dir = root.join("trials").join(&out.summary.trial_id);
    fs::create_dir_all(&dir)?;
    let files = TrialFiles {
        cues: dir.join("cues.jsonl"),
        truth: dir.join("truth.jsonl"),
        detections: dir.join("detections.jsonl"),
        events: dir.join("events.jsonl"),
        dir,
    };
    write_jsonl_file(&files.cues, &out.cue_log)?;
    if !out.counterpart_cue_log.is_empty() {
        write_jsonl_file(&files.dir.join("counterpart_cues.jsonl"), &out.counterpart_cue_log)?;
    }
    write_jsonl_file(&files.truth, &out.truth)?;
    write_jsonl_file(&files.detections, &out.detections)?;
    write_jsonl_file(&files.events, &out.events)?;
    let meta = serde_json::json!({
        "params": out.params,
        "calibration": out.calibration,
        "peer_calibration": out.peer_calibration,
        "frames": out.frames,
        "wall_time_s": out.wall_time_s,
    });
    fs::write(files.dir.join("trial.json"), serde_json::to_string_pretty(&meta)?)?;
    append_summary(&root.join(RESULTS_FILE), &out.summary)?;
    Ok(files)
}

pub fn append_summary(path: &Path, summary: &TrialSummary) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(summary)?;
    line.push('\n');
    f.write_all(line.as_bytes())
}

/// Parses summary rows, skipping blank lines. Returns the rows and the
/// 1-based numbers of lines that failed to parse.
pub fn parse_summaries(text: &str) -> (Vec<TrialSummary>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrialSummary>(line) {
            Ok(r) => rows.push(r),
            Err(_) => bad.push(i + 1),
        }
    }
    (rows, bad)
}

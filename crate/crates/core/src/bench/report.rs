use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::Evaluation;

pub const TABLE_FILE: &str = "report.csv";
pub const PER_STEP_FILE: &str = "per_step.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub per_step: PathBuf,
    pub traces: Vec<PathBuf>,
}

fn file_stem(model: &str) -> String {
    model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes the comparison table, per-step RMSE and one trace file per model.
/// Wall-clock times are left out so reruns produce identical bytes.
pub fn write_report(dir: &Path, evaluations: &[Evaluation]) -> Result<ReportFiles> {
    if evaluations.is_empty() {
        return Err(Error::invalid("report needs at least one evaluation"));
    }
    let mut seen = BTreeSet::new();
    for e in evaluations {
        if !seen.insert(file_stem(&e.report.model)) {
            return Err(Error::invalid(format!("duplicate model name `{}` in report", e.report.model)));
        }
    }
    fs::create_dir_all(dir)?;

    let table = dir.join(TABLE_FILE);
    let mut w = BufWriter::new(File::create(&table)?);
    writeln!(w, "model,category,rmse_mmhg,window_count")?;
    for e in evaluations {
        for s in &e.report.scores {
            writeln!(w, "{},{},{},{}", e.report.model, s.category, s.rmse, s.window_count)?;
        }
    }
    w.flush()?;

    let per_step = dir.join(PER_STEP_FILE);
    let mut w = BufWriter::new(File::create(&per_step)?);
    writeln!(w, "model,step,rmse_mmhg")?;
    for e in evaluations {
        for (k, r) in e.per_step_rmse().iter().enumerate() {
            writeln!(w, "{},{},{}", e.report.model, k, r)?;
        }
    }
    w.flush()?;

    let mut traces = Vec::with_capacity(evaluations.len());
    for e in evaluations {
        let path = dir.join(format!("traces_{}.csv", file_stem(&e.report.model)));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "recording_id,offset,step,truth_mmhg,pred_mmhg")?;
        for t in &e.traces {
            for (k, (y, p)) in t.truth.iter().zip(&t.pred).enumerate() {
                writeln!(w, "{},{},{},{},{}", t.recording_id, t.offset, k, y, p)?;
            }
        }
        w.flush()?;
        traces.push(path);
    }
    Ok(ReportFiles {
        table,
        per_step,
        traces,
    })
}

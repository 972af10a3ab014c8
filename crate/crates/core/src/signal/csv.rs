use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::RtSeries;

/// Column names for the recording CSV. The default is the `t,aop_mmhg,rpm`
/// layout; set `rpm` to `None` to ignore motor speed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub t: String,
    pub aop: String,
    pub rpm: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            t: "t".into(),
            aop: "aop_mmhg".into(),
            rpm: Some("rpm".into()),
        }
    }
}

fn column(headers: &::csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn field<'a>(record: &'a ::csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<&'a str> {
    record.get(idx).map(str::trim).ok_or_else(|| Error::MalformedRow {
        line,
        reason: format!("missing `{name}` field"),
    })
}

fn finite(raw: &str, line: u64, name: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("`{name}` value `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            line,
            reason: format!("`{name}` value `{raw}` is not finite"),
        });
    }
    Ok(v)
}

/// Parses one recording. Row order is preserved; sample indices must start
/// anywhere and then increase by exactly one per row.
pub fn ingest_csv(source: impl Read, recording_id: &str, schema: &CsvSchema) -> Result<RtSeries> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    let t_col = column(&headers, &schema.t)?;
    let aop_col = column(&headers, &schema.aop)?;
    let rpm_col = schema.rpm.as_deref().map(|n| column(&headers, n)).transpose()?;

    let mut series = RtSeries::new(recording_id, Vec::new(), rpm_col.map(|_| Vec::new()));
    let mut previous: Option<i64> = None;
    let mut record = ::csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line());
                return Err(Error::MalformedRow {
                    line,
                    reason: e.to_string(),
                });
            }
        }
        let line = record.position().map_or(line, |p| p.line());
        let raw_t = field(&record, t_col, line, &schema.t)?;
        let t: i64 = raw_t.parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("sample index `{raw_t}` is not an integer"),
        })?;
        match previous {
            None => series.start_index = t,
            Some(p) if t == p + 1 => {}
            Some(p) => {
                return Err(Error::SampleIndex {
                    line,
                    previous: p,
                    found: t,
                })
            }
        }
        previous = Some(t);
        series.aop.push(finite(field(&record, aop_col, line, &schema.aop)?, line, &schema.aop)?);
        if let (Some(idx), Some(rpm)) = (rpm_col, series.rpm.as_mut()) {
            let name = schema.rpm.as_deref().unwrap_or("rpm");
            let v = finite(field(&record, idx, line, name)?, line, name)?;
            if v < 0.0 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("negative motor speed {v}"),
                });
            }
            rpm.push(v);
        }
    }
    Ok(series)
}

/// Reads a recording file; the recording id is the file stem.
pub fn read_recording(path: &Path, schema: &CsvSchema) -> Result<RtSeries> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    ingest_csv(BufReader::new(file), &id, schema)
}

/// Writes the `t,aop_mmhg,rpm` layout, pressure to 4 decimals and motor
/// speed to 1. A series without motor speed writes `0`.
pub fn write_csv(w: impl Write, series: &RtSeries) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "t,aop_mmhg,rpm")?;
    for rec in series.records() {
        writeln!(w, "{},{:.4},{:.1}", rec.t, rec.aop, rec.rpm.unwrap_or(0.0))?;
    }
    w.flush()?;
    Ok(())
}

//! Per-cell trace files with header `iter,f,grad_norm,sfo,event`.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back gives bit-identical values. An empty `grad_norm` field means no
//! gradient was computed on that row.

use std::io::{Read, Write};
use std::path::Path;

use ssrgd::trace::{Event, TraceRecord};

use crate::error::{io_err, HarnessError, Result};

pub const HEADER: [&str; 5] = ["iter", "f", "grad_norm", "sfo", "event"];

/// A parsed trace row. `sfo` is the raw count.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub f: f64,
    pub grad_norm: Option<f64>,
    pub sfo: u64,
    pub event: Event,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        TraceRow {
            iter: r.iter,
            f: r.f_value,
            grad_norm: r.grad_norm,
            sfo: r.sfo,
            event: r.event,
        }
    }
}

pub fn write_rows<W: Write>(out: W, rows: impl IntoIterator<Item = TraceRow>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| HarnessError::Trace(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        let grad = r.grad_norm.map(|g| g.to_string()).unwrap_or_default();
        w.write_record([
            r.iter.to_string(),
            r.f.to_string(),
            grad,
            r.sfo.to_string(),
            r.event.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Trace(e.to_string()))?;
    Ok(())
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_rows(std::io::BufWriter::new(file), records.iter().map(TraceRow::from))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| HarnessError::Trace(e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::Trace(format!(
            "expected header `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Trace(e.to_string()))?;
        let bad = |what: &str| HarnessError::Trace(format!("row {}: bad {what}", line + 1));
        let field = |k: usize| rec.get(k).unwrap_or("");
        let grad_norm = match field(2) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("grad_norm"))?),
        };
        rows.push(TraceRow {
            iter: field(0).parse().map_err(|_| bad("iter"))?,
            f: field(1).parse().map_err(|_| bad("f"))?,
            grad_norm,
            sfo: field(3).parse().map_err(|_| bad("sfo"))?,
            event: field(4).parse().map_err(|_| bad("event"))?,
        });
    }
    Ok(rows)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_rows(std::io::BufReader::new(file))
}

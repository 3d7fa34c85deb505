use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::report::RegretReport;
use crate::harness::runner::RegretTrace;

pub const CSV_HEADER: [&str; 8] = [
    "policy",
    "replicate",
    "round",
    "inst_regret",
    "cum_regret",
    "pred_regret",
    "lambda_min",
    "bound",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per (trace, round). Columns that were not recorded are empty.
pub fn write_csv<'a, W: Write>(traces: impl IntoIterator<Item = &'a RegretTrace>, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for trace in traces {
        let replicate = trace.replicate.to_string();
        for t in 0..trace.horizon() {
            let div = trace.diversity.as_ref().map(|d| d[t]);
            w.write_record([
                trace.label.as_str(),
                replicate.as_str(),
                &(t + 1).to_string(),
                &trace.inst_regret[t].to_string(),
                &trace.cum_regret[t].to_string(),
                &opt(trace.pred_regret.as_ref().map(|p| p[t])),
                &opt(div.map(|p| p.lambda_min)),
                &opt(div.map(|p| p.bound)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<'a>(traces: impl IntoIterator<Item = &'a RegretTrace>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(traces, BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })
}

pub fn emit_json(report: &RegretReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_json(path: impl AsRef<Path>) -> Result<RegretReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

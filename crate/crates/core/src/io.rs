//! CSV and JSON serialization. Floats are written with 17 significant digits
//! (`{:.16e}`) so values round-trip exactly. CSV files may start with `#`
//! comment lines carrying the tool version and the resolved configuration.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::simulate::SimTrace;
use crate::VERSION;

pub const TRACE_HEADER: [&str; 4] = ["t", "delta_hat", "delta_uni_hat", "stderr"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `# noisy-consensus <version>` followed by `# config: <json>`.
pub fn write_metadata<W: Write>(w: &mut W, config: &Value) -> Result<()> {
    writeln!(w, "# noisy-consensus {VERSION}")?;
    writeln!(w, "# config: {config}")?;
    Ok(())
}

/// The `config:` comment of a CSV written by [`write_metadata`].
pub fn read_metadata<R: Read>(r: R) -> Result<Option<Value>> {
    for line in BufReader::new(r).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some(json) = rest.trim().strip_prefix("config:") {
            return Ok(Some(serde_json::from_str(json.trim())?));
        }
    }
    Ok(None)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

pub fn write_matrix_csv<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        out.write_record((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])))?;
    }
    out.flush()?;
    Ok(())
}

/// Headerless numeric CSV; every row must have the same length.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(rec.iter().map(parse_f64).collect::<Result<_>>()?);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch { expected: ncols, got: bad.len() });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// One number per line (or per comma), e.g. a per-node variance file.
pub fn read_vector<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        for tok in line.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
            out.push(parse_f64(tok)?);
        }
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &SimTrace, config: Option<&Value>) -> Result<()> {
    if let Some(c) = config {
        write_metadata(&mut w, c)?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for k in 0..trace.len() {
        out.write_record([
            trace.times[k].to_string(),
            fmt_f64(trace.delta_hat[k]),
            fmt_f64(trace.delta_uni_hat[k]),
            fmt_f64(trace.stderr[k]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<SimTrace> {
    let mut rd = reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let mut trace = SimTrace { times: vec![], delta_hat: vec![], delta_uni_hat: vec![], stderr: vec![] };
    for rec in rd.records() {
        let rec = rec?;
        trace.times.push(rec[0].parse().map_err(|_| Error::Parse(format!("bad step {:?}", &rec[0])))?);
        trace.delta_hat.push(parse_f64(&rec[1])?);
        trace.delta_uni_hat.push(parse_f64(&rec[2])?);
        trace.stderr.push(parse_f64(&rec[3])?);
    }
    Ok(trace)
}

/// Rows `t, node, x1..xd`.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    trajectory: &[(usize, DMatrix<f64>)],
    config: Option<&Value>,
) -> Result<()> {
    if let Some(c) = config {
        write_metadata(&mut w, c)?;
    }
    let d = trajectory.first().map_or(0, |(_, p)| p.ncols());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "node".to_string()];
    header.extend((1..=d).map(|c| format!("x{c}")));
    out.write_record(&header)?;
    for (t, p) in trajectory {
        for i in 0..p.nrows() {
            let mut row = vec![t.to_string(), i.to_string()];
            row.extend((0..d).map(|c| fmt_f64(p[(i, c)])));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// JSON document with `version` and `config` keys merged into `body`.
pub fn with_metadata(mut body: Value, config: &Value) -> Value {
    if let Value::Object(map) = &mut body {
        map.insert("version".into(), Value::String(VERSION.into()));
        map.insert("config".into(), config.clone());
    }
    body
}

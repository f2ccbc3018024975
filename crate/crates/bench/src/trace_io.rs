//! CSV trace files: fixed column order, 17 significant digits, empty cells
//! for metrics without a reference.

use std::io::{Read, Write};
use std::path::Path;

use ssqp_core::algorithms::RunTraceRow;

use crate::BenchError;

pub const COLUMNS: [&str; 9] = ["iter", "sfo", "qmo", "gap", "rel_gap", "max_viol", "sum_viol", "dist_sq", "wall"];

/// Shortest exact-enough form: 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, rows: &[RunTraceRow]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.sfo.to_string(),
            r.qmo.to_string(),
            opt(r.gap),
            opt(r.rel_gap),
            format_float(r.max_viol),
            format_float(r.sum_viol),
            opt(r.dist_sq),
            format_float(r.wall),
        ])?;
    }
    w.flush().map_err(|e| BenchError::Trace(e.to_string()))?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<RunTraceRow>, BenchError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(BenchError::Trace(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| BenchError::Trace(format!("row {}: bad {} value {:?}", line + 1, COLUMNS[i], field(i)));
        let int = |i: usize| field(i).parse::<u64>().map_err(|_| bad(i));
        let float = |i: usize| parse_float(field(i)).ok_or_else(|| bad(i));
        let maybe = |i: usize| if field(i).is_empty() { Ok(None) } else { float(i).map(Some) };
        rows.push(RunTraceRow {
            iter: int(0)?,
            sfo: int(1)?,
            qmo: int(2)?,
            gap: maybe(3)?,
            rel_gap: maybe(4)?,
            max_viol: float(5)?,
            sum_viol: float(6)?,
            dist_sq: maybe(7)?,
            wall: float(8)?,
        });
    }
    Ok(rows)
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn write_trace_file(path: &Path, rows: &[RunTraceRow]) -> Result<(), BenchError> {
    let file = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_trace(std::io::BufWriter::new(file), rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<RunTraceRow>, BenchError> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_trace(std::io::BufReader::new(file))
}

//! Output files: state traces and maps as CSV, metrics as JSON, and the
//! transition matrix in a small binary container.

use std::fs;
use std::path::Path;

use gridtrack::markov::{QuantizationMode, TransitionMatrix};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::experiment::{MapSnapshot, RunOutput, TraceRow};

/// Magic bytes of the transition-matrix container.
pub const TRANSITION_MAGIC: [u8; 8] = *b"CGRIDP1\0";
const HEADER_LEN: usize = 16;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() }
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.truth.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|m| format!("true_x{m}")));
    header.extend((1..=dim).map(|m| format!("est_x{m}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.truth.iter().map(|&v| num(v)));
        rec.extend(r.estimate.iter().map(|&v| num(v)));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let cols = r.headers().map_err(csv_err(path))?.len();
    if cols < 3 || (cols - 1) % 2 != 0 {
        return Err(HarnessError::Format { path: path.to_path_buf(), message: format!("{cols} columns") });
    }
    let dim = (cols - 1) / 2;
    let bad = |m: String| HarnessError::Format { path: path.to_path_buf(), message: m };
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err(path))?;
            let t = rec[0].parse().map_err(|e| bad(format!("t: {e}")))?;
            let vals: Vec<f64> = (1..cols)
                .map(|k| rec[k].parse().map_err(|e| bad(format!("column {k}: {e}"))))
                .collect::<Result<_>>()?;
            Ok(TraceRow { t, truth: vals[..dim].to_vec(), estimate: vals[dim..].to_vec() })
        })
        .collect()
}

pub fn write_map(path: &Path, map: &MapSnapshot) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["qx_m", "qy_m", "true_gain_db", "pred_gain_db"]).map_err(csv_err(path))?;
    for ((q, t), p) in map.points.iter().zip(&map.truth).zip(&map.predicted) {
        w.write_record([num(q[0]), num(q[1]), num(*t), num(*p)]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads `(true, predicted)` gain columns of a map file.
pub fn read_map(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let parse = |k: usize| {
            rec.get(k).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| HarnessError::Format {
                path: path.to_path_buf(),
                message: format!("bad value in column {k}"),
            })
        };
        truth.push(parse(2)?);
        pred.push(parse(3)?);
    }
    Ok((truth, pred))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("metrics serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Header: magic, `u32` cell count, `u32` mode tag (all little-endian); then
/// the matrix as `f64` little-endian in column-major order.
pub fn encode_transition(p: &TransitionMatrix) -> Vec<u8> {
    let n = p.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * n);
    out.extend_from_slice(&TRANSITION_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&p.mode().tag().to_le_bytes());
    for v in p.matrix().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_transition(bytes: &[u8]) -> std::result::Result<TransitionMatrix, String> {
    if bytes.len() < HEADER_LEN || bytes[..8] != TRANSITION_MAGIC {
        return Err("missing transition-matrix header".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
    let n = word(8) as usize;
    let mode = QuantizationMode::from_tag(word(12)).ok_or_else(|| format!("unknown mode tag {}", word(12)))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * n * n {
        return Err(format!("expected {} payload bytes, found {}", 8 * n * n, body.len()));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    TransitionMatrix::new(DMatrix::from_vec(n, n, values), mode).map_err(|e| e.to_string())
}

pub fn write_transition(path: &Path, p: &TransitionMatrix) -> Result<()> {
    fs::write(path, encode_transition(p)).map_err(io_err(path))
}

pub fn read_transition(path: &Path) -> Result<TransitionMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_transition(&bytes).map_err(|message| HarnessError::Format { path: path.to_path_buf(), message })
}

/// Writes every artifact of a run into `dir`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_trace(&dir.join("state_trace.csv"), &output.trace)?;
    for map in &output.maps {
        write_map(&dir.join(format!("map_t{}.csv", map.t)), map)?;
    }
    write_json(&dir.join("metrics.json"), &output.metrics)?;
    write_json(&dir.join("config_resolved.json"), &output.metrics.config)?;
    write_transition(&dir.join("transition.bin"), &output.transition)
}

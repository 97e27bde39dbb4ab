//! CSV form of a simulation trace: one row per basic step.

use std::io::{Read, Write};

use crate::sim::SimTrace;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub h: usize,
    pub t_seconds: f64,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub ubar: Vec<f64>,
    pub du: Vec<f64>,
    pub alpha: Option<f64>,
    pub feasible_high: bool,
    pub feasible_low: bool,
    pub stage_cost: f64,
}

pub fn header(p: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["h".to_string(), "t_seconds".to_string()];
    cols.extend((1..=p).map(|i| format!("y_{i}")));
    for name in ["u", "ubar", "du"] {
        cols.extend((1..=m).map(|i| format!("{name}_{i}")));
    }
    for name in ["alpha", "feasible_high", "feasible_low", "stage_cost"] {
        cols.push(name.to_string());
    }
    cols
}

pub fn rows(trace: &SimTrace) -> Vec<CsvRow> {
    trace
        .steps
        .iter()
        .map(|s| CsvRow {
            h: s.h,
            t_seconds: s.h as f64 * trace.dt,
            y: s.y.clone(),
            u: s.u.clone(),
            ubar: s.ubar.clone(),
            du: s.du.clone(),
            alpha: s.alpha,
            feasible_high: s.feasible_high,
            feasible_low: s.feasible_low,
            stage_cost: s.stage_cost,
        })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_rows<W: Write>(out: W, p: usize, m: usize, rows: &[CsvRow]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(p, m))?;
    for r in rows {
        let mut rec = vec![r.h.to_string(), num(r.t_seconds)];
        for v in r.y.iter().chain(&r.u).chain(&r.ubar).chain(&r.du) {
            rec.push(num(*v));
        }
        rec.push(r.alpha.map_or_else(String::new, num));
        rec.push(r.feasible_high.to_string());
        rec.push(r.feasible_low.to_string());
        rec.push(num(r.stage_cost));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(out: W, trace: &SimTrace) -> Result<(), TraceError> {
    write_rows(out, trace.partition.p(), trace.partition.m(), &rows(trace))
}

/// Parses a trace written by [`write_rows`]; dimensions come from the header.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, TraceError> {
    let mut rd = csv::Reader::from_reader(input);
    let hdr: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let count = |prefix: &str| hdr.iter().filter(|c| c.strip_prefix(prefix).is_some_and(|r| r.parse::<usize>().is_ok())).count();
    let (p, m) = (count("y_"), count("u_"));
    if hdr != header(p, m) {
        return Err(TraceError::Malformed("unexpected header".into()));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|_| TraceError::Malformed(format!("bad number {s:?}")));
    let flag = |s: &str| s.parse::<bool>().map_err(|_| TraceError::Malformed(format!("bad flag {s:?}")));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f: Vec<&str> = rec.iter().collect();
        let vec_at = |start: usize, len: usize| -> Result<Vec<f64>, TraceError> { f[start..start + len].iter().map(|s| float(s)).collect() };
        let base = 2 + p + 3 * m;
        out.push(CsvRow {
            h: f[0].parse().map_err(|_| TraceError::Malformed(format!("bad step {:?}", f[0])))?,
            t_seconds: float(f[1])?,
            y: vec_at(2, p)?,
            u: vec_at(2 + p, m)?,
            ubar: vec_at(2 + p + m, m)?,
            du: vec_at(2 + p + 2 * m, m)?,
            alpha: if f[base].is_empty() { None } else { Some(float(f[base])?) },
            feasible_high: flag(f[base + 1])?,
            feasible_low: flag(f[base + 2])?,
            stage_cost: float(f[base + 3])?,
        });
    }
    Ok(out)
}

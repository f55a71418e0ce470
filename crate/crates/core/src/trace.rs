//! Per-iteration records, run results and their CSV / JSON forms.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SolverParams;
use crate::Point;

pub const TRACE_HEADER: &str =
    "iter,fval,window_max,tau_bar,tau,mem,backtracks,w_norm,d_norm,step_norm";

/// State of one completed iteration `k`. `fval` is the value at the new
/// iterate `x_{k+1}`; `window_max` is the reference value the linesearch
/// accepted against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub fval: f64,
    pub window_max: f64,
    pub tau_bar: f64,
    pub tau: f64,
    pub mem: usize,
    pub backtracks: usize,
    pub w_norm: f64,
    pub d_norm: f64,
    pub step_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroSubgradient,
    StopCriterion,
    MaxIter,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::ZeroSubgradient => "zero_subgradient",
            Termination::StopCriterion => "stop_criterion",
            Termination::MaxIter => "max_iter",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub params: SolverParams,
    pub termination: Termination,
    pub final_value: f64,
    pub final_point: Point,
    pub iterations: usize,
    /// Objective evaluations made by the linesearch (subgradient calls excluded).
    pub f_evals: usize,
    pub subgradient_evals: usize,
    pub wall_time: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Formats a float with 17 significant digits, enough for an exact round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 + trace.len() * 200);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            fmt_f64(r.fval),
            fmt_f64(r.window_max),
            fmt_f64(r.tau_bar),
            fmt_f64(r.tau),
            r.mem,
            r.backtracks,
            fmt_f64(r.w_norm),
            fmt_f64(r.d_norm),
            fmt_f64(r.step_norm),
        );
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(trace_to_csv(trace).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text, path)
}

pub fn parse_trace_csv(text: &str, origin: &Path) -> Result<Vec<TraceRecord>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{TRACE_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 10 {
            return Err(parse_err(
                lineno,
                format!("expected 10 fields, got {}", fields.len()),
            ));
        }
        let int = |i: usize| {
            fields[i]
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("field {}: {e}", i + 1)))
        };
        let real = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("field {}: {e}", i + 1)))
        };
        out.push(TraceRecord {
            iter: int(0)?,
            fval: real(1)?,
            window_max: real(2)?,
            tau_bar: real(3)?,
            tau: real(4)?,
            mem: int(5)?,
            backtracks: int(6)?,
            w_norm: real(7)?,
            d_norm: real(8)?,
            step_norm: real(9)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            vals in prop::collection::vec((finite(), finite(), finite(), 0usize..7, 0usize..40), 0..20)
        ) {
            let trace: Vec<TraceRecord> = vals.iter().enumerate().map(|(i, &(a, b, c, m, bt))| TraceRecord {
                iter: i, fval: a, window_max: b, tau_bar: c, tau: c * 0.5, mem: m,
                backtracks: bt, w_norm: a.abs(), d_norm: b.abs(), step_norm: c.abs(),
            }).collect();
            let parsed = parse_trace_csv(&trace_to_csv(&trace), Path::new("mem")).unwrap();
            prop_assert_eq!(parsed.len(), trace.len());
            for (p, t) in parsed.iter().zip(&trace) {
                prop_assert_eq!(p.fval.to_bits(), t.fval.to_bits());
                prop_assert_eq!(p.window_max.to_bits(), t.window_max.to_bits());
                prop_assert_eq!(p.tau.to_bits(), t.tau.to_bits());
                prop_assert_eq!(p.step_norm.to_bits(), t.step_norm.to_bits());
                prop_assert_eq!((p.iter, p.mem, p.backtracks), (t.iter, t.mem, t.backtracks));
            }
        }
    }

    #[test]
    fn rejects_bad_header_and_short_rows() {
        assert!(parse_trace_csv("a,b\n", Path::new("x")).is_err());
        let bad = format!("{TRACE_HEADER}\n0,1,2\n");
        match parse_trace_csv(&bad, Path::new("x")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0 / 6.0).parse::<f64>().unwrap(), 1.0 / 6.0);
    }
}

//! Post-hoc checks of the descent laws on a recorded trace.
//!
//! For a full (unthinned) trace the following must hold:
//!
//! * the window maximum never increases from one row to the next;
//! * `fval <= window_max - (sigma * a / tau) * step_norm^2` on every row,
//!   where `a` is the direction strategy's declared constant;
//! * `mem_{k+1} <= min(mem_k + 1, mem_max)`;
//! * `min_{j <= k} step_norm_j <= 2 c / sqrt(k + 1)` for `k >= mem_max`, with
//!   `c = sqrt(tau_max (mem_max + 1) (phi(x_0) - phi_best) / (sigma a))`.

use std::fmt;

use crate::trace::TraceRecord;

/// Relative slack on the decrease term and absolute slack (scaled by the
/// reference value) absorbing rounding in `step_norm` and in the strategy's
/// declared constant.
const DECREASE_RTOL: f64 = 1e-9;
const VALUE_ATOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckConfig {
    pub sigma: f64,
    /// Strategy constant `a`; the decrease and rate checks are skipped without it.
    pub declared_a: Option<f64>,
    /// Memory cap; defaults to the largest `mem` in the trace.
    pub mem_max: Option<usize>,
    /// Stepsize cap for the rate check; defaults to the largest `tau` in the trace.
    pub tau_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    NonConsecutive {
        row: usize,
        iter: usize,
    },
    WindowMaxIncrease {
        row: usize,
        prev: f64,
        cur: f64,
    },
    SufficientDecrease {
        row: usize,
        fval: f64,
        bound: f64,
    },
    MemoryLaw {
        row: usize,
        prev: usize,
        cur: usize,
        cap: usize,
    },
    RateDiagnostic {
        row: usize,
        min_step: f64,
        bound: f64,
    },
}

impl Violation {
    /// Trace row the violation was found at.
    pub fn row(&self) -> Option<usize> {
        match *self {
            Violation::Empty => None,
            Violation::NonConsecutive { row, .. }
            | Violation::WindowMaxIncrease { row, .. }
            | Violation::SufficientDecrease { row, .. }
            | Violation::MemoryLaw { row, .. }
            | Violation::RateDiagnostic { row, .. } => Some(row),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "trace has no rows"),
            Violation::NonConsecutive { row, iter } => {
                write!(f, "row {row}: iteration index {iter} breaks the sequence 0, 1, 2, ...")
            }
            Violation::WindowMaxIncrease { row, prev, cur } => write!(
                f,
                "row {row}: window maximum increased from {prev:e} to {cur:e} (window maximum must be nonincreasing)"
            ),
            Violation::SufficientDecrease { row, fval, bound } => write!(
                f,
                "row {row}: fval {fval:e} exceeds the sufficient-decrease bound {bound:e}"
            ),
            Violation::MemoryLaw { row, prev, cur, cap } => write!(
                f,
                "row {row}: memory went from {prev} to {cur}, violating m_(k+1) <= min(m_k + 1, {cap}) (memory law)"
            ),
            Violation::RateDiagnostic { row, min_step, bound } => write!(
                f,
                "row {row}: smallest step so far {min_step:e} exceeds the rate bound {bound:e}"
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckReport {
    pub rows: usize,
    /// Rate constant `c`, when a declared `a` was supplied.
    pub rate_constant: Option<f64>,
}

/// `fval <= window_max - (sigma a / tau) step_norm^2`, up to rounding slack.
pub fn sufficient_decrease_holds(rec: &TraceRecord, sigma: f64, a: f64) -> bool {
    rec.fval <= decrease_bound(rec, sigma, a)
}

fn decrease_bound(rec: &TraceRecord, sigma: f64, a: f64) -> f64 {
    let decrease = sigma * a / rec.tau * rec.step_norm * rec.step_norm;
    rec.window_max - decrease * (1.0 - DECREASE_RTOL) + VALUE_ATOL * rec.window_max.abs().max(1.0)
}

/// Checks every law and returns the first violation found, scanning row by row.
pub fn check_trace(trace: &[TraceRecord], cfg: &CheckConfig) -> Result<CheckReport, Violation> {
    if trace.is_empty() {
        return Err(Violation::Empty);
    }
    let mem_cap = cfg
        .mem_max
        .unwrap_or_else(|| trace.iter().map(|r| r.mem).max().unwrap_or(0));
    let tau_cap = cfg
        .tau_max
        .unwrap_or_else(|| trace.iter().map(|r| r.tau).fold(0.0, f64::max));
    let phi0 = trace[0].window_max;
    let phi_best = trace.iter().map(|r| r.fval).fold(phi0, f64::min);
    let rate_constant = cfg
        .declared_a
        .map(|a| (tau_cap * (mem_cap + 1) as f64 * (phi0 - phi_best) / (cfg.sigma * a)).sqrt());

    let mut min_step = f64::INFINITY;
    for (row, rec) in trace.iter().enumerate() {
        if rec.iter != row {
            return Err(Violation::NonConsecutive {
                row,
                iter: rec.iter,
            });
        }
        if row == 0 {
            if rec.mem > mem_cap {
                return Err(Violation::MemoryLaw {
                    row,
                    prev: 0,
                    cur: rec.mem,
                    cap: mem_cap,
                });
            }
        } else {
            let prev = &trace[row - 1];
            if rec.window_max > prev.window_max {
                return Err(Violation::WindowMaxIncrease {
                    row,
                    prev: prev.window_max,
                    cur: rec.window_max,
                });
            }
            if rec.mem > (prev.mem + 1).min(mem_cap) {
                return Err(Violation::MemoryLaw {
                    row,
                    prev: prev.mem,
                    cur: rec.mem,
                    cap: mem_cap,
                });
            }
        }
        if let Some(a) = cfg.declared_a {
            if !sufficient_decrease_holds(rec, cfg.sigma, a) {
                return Err(Violation::SufficientDecrease {
                    row,
                    fval: rec.fval,
                    bound: decrease_bound(rec, cfg.sigma, a),
                });
            }
        }
        min_step = min_step.min(rec.step_norm);
        if let Some(c) = rate_constant {
            if row >= mem_cap {
                let bound = 2.0 * c / ((row + 1) as f64).sqrt();
                if min_step > bound * (1.0 + DECREASE_RTOL) {
                    return Err(Violation::RateDiagnostic {
                        row,
                        min_step,
                        bound,
                    });
                }
            }
        }
    }
    Ok(CheckReport {
        rows: trace.len(),
        rate_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsm::{run_nsm, ConstantMemory, ConstantStep};
    use crate::oracle::{FnObjective, Steepest};
    use crate::params::SolverParams;
    use crate::snsm::run_snsm;

    fn bumpy() -> impl crate::Objective<Info = ()> {
        FnObjective::new(
            2,
            |x: &[f64]| {
                x[0] * x[0] + 2.0 * x[1] * x[1] - (x[0] - x[1]).abs() + 0.3 * (3.0 * x[0]).cos()
            },
            |x: &[f64], w: &mut [f64]| {
                let s = (x[0] - x[1]).signum();
                w[0] = 2.0 * x[0] - s - 0.9 * (3.0 * x[0]).sin();
                w[1] = 4.0 * x[1] + s;
            },
        )
    }

    fn cfg(a: f64, mem_max: usize) -> CheckConfig {
        CheckConfig {
            sigma: 0.2,
            declared_a: Some(a),
            mem_max: Some(mem_max),
            tau_max: Some(1e8),
        }
    }

    #[test]
    fn generated_traces_pass() {
        let p = SolverParams::default();
        let res = run_snsm(&bumpy(), &Steepest, &p, &[3.0, -2.0]).unwrap();
        assert!(res.trace.len() > 3);
        check_trace(&res.trace, &cfg(1.0, 5)).unwrap();
        let p = SolverParams { mem0: 3, ..p };
        let res = run_nsm(
            &bumpy(),
            &Steepest,
            &p,
            &mut ConstantStep(1.0),
            &mut ConstantMemory(3),
            &[3.0, -2.0],
        )
        .unwrap();
        check_trace(&res.trace, &cfg(1.0, 5)).unwrap();
    }

    #[test]
    fn injected_violations_are_reported_by_row() {
        let p = SolverParams::default();
        let res = run_snsm(&bumpy(), &Steepest, &p, &[3.0, -2.0]).unwrap();
        let mut t = res.trace.clone();
        t[2].fval = t[2].window_max + 1.0;
        assert!(matches!(
            check_trace(&t, &cfg(1.0, 5)),
            Err(Violation::SufficientDecrease { row: 2, .. })
        ));

        let mut t = res.trace.clone();
        t[1].mem = t[0].mem + 2;
        assert!(matches!(
            check_trace(&t, &cfg(1.0, 5)),
            Err(Violation::MemoryLaw { row: 1, .. })
        ));

        let mut t = res.trace.clone();
        t[1].window_max = t[0].window_max + 1.0;
        assert!(matches!(
            check_trace(&t, &cfg(1.0, 5)),
            Err(Violation::WindowMaxIncrease { row: 1, .. })
        ));

        let mut t = res.trace.clone();
        t.remove(1);
        assert!(matches!(
            check_trace(&t, &cfg(1.0, 5)),
            Err(Violation::NonConsecutive { row: 1, iter: 2 })
        ));

        assert_eq!(check_trace(&[], &cfg(1.0, 5)), Err(Violation::Empty));
    }

    #[test]
    fn rate_diagnostic_fires_on_long_steps() {
        // Constant decrease rows with one large, unexplained step length.
        let rows: Vec<TraceRecord> = (0..50)
            .map(|k| TraceRecord {
                iter: k,
                fval: 10.0 - 1e-3 * (k + 1) as f64,
                window_max: 10.0 - 1e-3 * k as f64,
                tau_bar: 1.0,
                tau: 1.0,
                mem: 0,
                backtracks: 0,
                w_norm: 1.0,
                d_norm: 1.0,
                step_norm: 0.05,
            })
            .collect();
        let loose = CheckConfig {
            sigma: 0.2,
            declared_a: Some(1e-3),
            mem_max: Some(0),
            tau_max: Some(1.0),
        };
        check_trace(&rows, &loose).unwrap();
        let tight = CheckConfig {
            declared_a: None,
            ..loose
        };
        check_trace(&rows, &tight).unwrap();
        // Window pinned at 10 while every step keeps length 0.05: each row
        // passes the decrease law for a = 0.4, but the total drop of 1e-3 cannot
        // pay for that many long steps.
        let mut pinned = rows.clone();
        for r in pinned.iter_mut() {
            r.window_max = 10.0;
            r.fval = 10.0 - 1e-3;
        }
        let strict = CheckConfig {
            sigma: 0.2,
            declared_a: Some(0.4),
            mem_max: Some(0),
            tau_max: Some(1.0),
        };
        match check_trace(&pinned, &strict) {
            Err(Violation::RateDiagnostic { row, .. }) => assert_eq!(row, 20),
            other => panic!("unexpected {other:?}"),
        }
    }
}

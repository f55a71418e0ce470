use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning constants shared by both drivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Initial trial stepsize.
    pub tau0: f64,
    pub tau_min: f64,
    /// Cap on the self-adaptive trial stepsize; also used by the rate diagnostic.
    pub tau_max: f64,
    /// Armijo sufficient-decrease fraction, in (0, 1).
    pub sigma: f64,
    /// Backtracking factor, in (0, 1).
    pub beta: f64,
    /// Trial stepsize growth factor, > 1.
    pub gamma: f64,
    /// Initial memory parameter.
    pub mem0: usize,
    /// Largest memory parameter. Zero makes both drivers monotone.
    pub mem_max: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracks allowed in a single linesearch before it is declared stalled.
    pub max_backtracks: usize,
    /// Keep every `trace_stride`-th trace record.
    #[serde(default = "one")]
    pub trace_stride: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            tau_min: 1e-4,
            tau_max: 1e8,
            sigma: 0.2,
            beta: 0.2,
            gamma: 4.0,
            mem0: 0,
            mem_max: 5,
            tol: 1e-4,
            max_iter: 10_000,
            max_backtracks: 100,
            trace_stride: 1,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.tau0) || !positive(self.tau_min) || !positive(self.tau_max) {
            return fail("tau0, tau_min and tau_max must be positive and finite");
        }
        if self.tau0 < self.tau_min {
            return fail("tau0 must be at least tau_min");
        }
        if self.tau_max < self.tau0 {
            return fail("tau_max must be at least tau0");
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return fail("sigma must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail("beta must lie in (0, 1)");
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return fail("gamma must be greater than 1");
        }
        if self.mem0 > self.mem_max {
            return fail("mem0 must not exceed mem_max");
        }
        if !positive(self.tol) {
            return fail("tol must be positive");
        }
        if self.max_iter == 0 {
            return fail("max_iter must be positive");
        }
        Ok(())
    }
}

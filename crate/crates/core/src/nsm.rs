//! Generic nonmonotone subgradient driver with pluggable stepsize and memory
//! schedules.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linesearch::{search_into, ArmijoConfig, MemoryWindow};
use crate::oracle::{DirectionStrategy, Objective};
use crate::params::SolverParams;
use crate::stopping::should_stop;
use crate::trace::{RunResult, Termination, TraceRecord};
use crate::vector::{dist, dot, is_zero, norm};
use crate::verify;

/// Chooses the initial trial stepsize of the next iteration.
pub trait StepSchedule {
    /// Called once iteration `k` has finished with trial stepsize `tau_bar`
    /// and accepted stepsize `tau`; returns the trial stepsize for `k + 1`.
    /// The result must be at least `tau_min`.
    fn next_tau_bar(&mut self, k: usize, tau_bar: f64, tau: f64) -> f64;
}

/// Chooses the memory parameter of the next iteration. The result must obey
/// `m_{k+1} <= min(m_k + 1, mem_max)`.
pub trait MemorySchedule {
    fn next_mem(&mut self, k: usize, mem: usize) -> usize;
}

impl<F: FnMut(usize, f64, f64) -> f64> StepSchedule for F {
    fn next_tau_bar(&mut self, k: usize, tau_bar: f64, tau: f64) -> f64 {
        self(k, tau_bar, tau)
    }
}

impl<F: FnMut(usize, usize) -> usize> MemorySchedule for F {
    fn next_mem(&mut self, k: usize, mem: usize) -> usize {
        self(k, mem)
    }
}

/// Always restarts the linesearch from the same stepsize.
#[derive(Clone, Copy, Debug)]
pub struct ConstantStep(pub f64);

impl StepSchedule for ConstantStep {
    fn next_tau_bar(&mut self, _k: usize, _tau_bar: f64, _tau: f64) -> f64 {
        self.0
    }
}

/// Fixed memory parameter. Pair with `mem0` equal to the same value so the
/// sequence never jumps by more than one.
#[derive(Clone, Copy, Debug)]
pub struct ConstantMemory(pub usize);

impl MemorySchedule for ConstantMemory {
    fn next_mem(&mut self, _k: usize, _mem: usize) -> usize {
        self.0
    }
}

/// Grows the memory by one per iteration up to a cap.
#[derive(Clone, Copy, Debug)]
pub struct GrowingMemory(pub usize);

impl MemorySchedule for GrowingMemory {
    fn next_mem(&mut self, _k: usize, mem: usize) -> usize {
        (mem + 1).min(self.0)
    }
}

/// The self-adaptive trial stepsize rule: multiply by `gamma` (capped at
/// `tau_max`) after two consecutive iterations that accepted their trial
/// stepsize, otherwise restart from `max(tau, tau_min)`.
#[derive(Clone, Copy, Debug)]
pub struct SelfAdaptiveStep {
    pub gamma: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Whether the previous iteration accepted its trial stepsize. Starts true.
    pub prev_accepted_at_init: bool,
}

impl SelfAdaptiveStep {
    pub fn from_params(p: &SolverParams) -> Self {
        Self {
            gamma: p.gamma,
            tau_min: p.tau_min,
            tau_max: p.tau_max,
            prev_accepted_at_init: true,
        }
    }
}

/// `(prev && cur) ? min(gamma * tau, tau_max) : max(tau, tau_min)`.
pub(crate) fn adaptive_tau_bar(
    both: bool,
    tau: f64,
    gamma: f64,
    tau_min: f64,
    tau_max: f64,
) -> f64 {
    if both {
        (gamma * tau).min(tau_max)
    } else {
        tau.max(tau_min)
    }
}

impl StepSchedule for SelfAdaptiveStep {
    fn next_tau_bar(&mut self, _k: usize, tau_bar: f64, tau: f64) -> f64 {
        let cur = tau == tau_bar;
        let both = self.prev_accepted_at_init && cur;
        self.prev_accepted_at_init = cur;
        adaptive_tau_bar(both, tau, self.gamma, self.tau_min, self.tau_max)
    }
}

/// Relative slack used when checking a strategy's declared constants, which
/// are compared against quantities carrying rounding error.
const CONTRACT_RTOL: f64 = 1e-9;

pub(crate) struct Prepared<I> {
    pub inner: f64,
    pub w_norm: f64,
    pub d_norm: f64,
    #[allow(dead_code)]
    pub info: I,
}

/// Iteration bookkeeping shared by the NSM and SNSM drivers.
pub(crate) struct Driver<'a, O: Objective + ?Sized, S: ?Sized> {
    pub oracle: &'a O,
    pub strategy: &'a S,
    pub params: &'a SolverParams,
    pub armijo: ArmijoConfig,
    pub x: Vec<f64>,
    pub x_new: Vec<f64>,
    pub w: Vec<f64>,
    pub d: Vec<f64>,
    pub f: f64,
    pub window: MemoryWindow,
    trace: Vec<TraceRecord>,
    f_evals: usize,
    subgradient_evals: usize,
    started: Instant,
}

impl<'a, O, S> Driver<'a, O, S>
where
    O: Objective + ?Sized,
    S: DirectionStrategy<O::Info> + ?Sized,
{
    pub fn new(
        oracle: &'a O,
        strategy: &'a S,
        params: &'a SolverParams,
        x0: &[f64],
        strict: bool,
    ) -> Result<Self> {
        params.validate()?;
        let n = oracle.dim();
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("starting point must be finite".into()));
        }
        let armijo = ArmijoConfig {
            sigma: params.sigma,
            beta: params.beta,
            strict,
            max_backtracks: params.max_backtracks,
        };
        Ok(Self {
            oracle,
            strategy,
            params,
            armijo,
            x: x0.to_vec(),
            x_new: vec![0.0; n],
            w: vec![0.0; n],
            d: vec![0.0; n],
            f: f64::NAN,
            // replaced by the first subgradient evaluation
            window: MemoryWindow::new(params.mem_max, f64::NAN),
            trace: Vec::new(),
            f_evals: 0,
            subgradient_evals: 0,
            started: Instant::now(),
        })
    }

    /// Subgradient, zero test and direction for iteration `k`. Returns `None`
    /// when the subgradient is exactly zero.
    pub fn prepare(&mut self, k: usize) -> Result<Option<Prepared<O::Info>>> {
        let (f, info) = self.oracle.subgradient(&self.x, &mut self.w);
        self.subgradient_evals += 1;
        if k == 0 {
            self.f = f;
            self.window = MemoryWindow::new(self.params.mem_max, f);
        }
        if is_zero(&self.w) {
            return Ok(None);
        }
        self.strategy
            .direction(k, &self.x, &self.w, &info, &mut self.d);
        let inner = dot(&self.w, &self.d);
        if !(inner < 0.0) {
            return Err(Error::NonDescentDirection { iter: k, inner });
        }
        let w_norm = norm(&self.w);
        let d_norm = norm(&self.d);
        if let Some(a) = self.strategy.declared_a() {
            if inner > -a * d_norm * d_norm * (1.0 - CONTRACT_RTOL) {
                return Err(Error::StrategyContract {
                    iter: k,
                    constant: "a",
                });
            }
        }
        if let Some(b) = self.strategy.declared_b() {
            if w_norm > b * d_norm * (1.0 + CONTRACT_RTOL) {
                return Err(Error::StrategyContract {
                    iter: k,
                    constant: "b",
                });
            }
        }
        Ok(Some(Prepared {
            inner,
            w_norm,
            d_norm,
            info,
        }))
    }

    /// Runs the linesearch from `tau_bar` against `ref_value`, writing the
    /// accepted point into `x_new`.
    pub fn search(
        &mut self,
        k: usize,
        inner: f64,
        tau_bar: f64,
        ref_value: f64,
        first_probe: Option<f64>,
    ) -> Result<(f64, f64, usize)> {
        let res = search_into(
            self.oracle,
            &self.x,
            &self.d,
            inner,
            tau_bar,
            ref_value,
            &self.armijo,
            first_probe,
            &mut self.x_new,
        );
        match res {
            Ok((tau, f_new, backtracks)) => {
                self.f_evals += backtracks + usize::from(first_probe.is_none());
                Ok((tau, f_new, backtracks))
            }
            Err(stalled) => Err(Error::LinesearchStalled {
                iter: k,
                last_tau: stalled.last_tau,
                backtracks: stalled.backtracks,
            }),
        }
    }

    /// Evaluates the objective at `x + tau * d` into `x_new`, counting it.
    pub fn probe(&mut self, tau: f64) -> f64 {
        crate::vector::step_into(&mut self.x_new, &self.x, tau, &self.d);
        self.f_evals += 1;
        self.oracle.value(&self.x_new)
    }

    /// Records iteration `k`, advances the iterate and reports whether the
    /// stopping test fired.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &mut self,
        k: usize,
        prep: &Prepared<O::Info>,
        window_max: f64,
        tau_bar: f64,
        tau: f64,
        mem: usize,
        backtracks: usize,
        f_new: f64,
    ) -> Result<bool> {
        let rec = TraceRecord {
            iter: k,
            fval: f_new,
            window_max,
            tau_bar,
            tau,
            mem,
            backtracks,
            w_norm: prep.w_norm,
            d_norm: prep.d_norm,
            step_norm: dist(&self.x_new, &self.x),
        };
        if let Some(a) = self.strategy.declared_a() {
            if !verify::sufficient_decrease_holds(&rec, self.params.sigma, a) {
                return Err(Error::Internal(format!(
                    "sufficient decrease violated at iteration {k}"
                )));
            }
        }
        if k.is_multiple_of(self.params.trace_stride.max(1)) {
            self.trace.push(rec);
        }
        let stop = should_stop(&self.x, &self.x_new, self.f, f_new, self.params.tol);
        std::mem::swap(&mut self.x, &mut self.x_new);
        self.f = f_new;
        self.window.push(f_new);
        Ok(stop)
    }

    pub fn finish(self, termination: Termination, iterations: usize) -> RunResult {
        RunResult {
            params: self.params.clone(),
            termination,
            final_value: self.f,
            final_point: self.x,
            iterations,
            f_evals: self.f_evals,
            subgradient_evals: self.subgradient_evals,
            wall_time: self.started.elapsed().as_secs_f64(),
            trace: self.trace,
        }
    }
}

/// Runs the nonmonotone subgradient method from `x0`.
///
/// Iteration `k` takes a subgradient `w_k` (stopping if it is exactly zero),
/// a direction `d_k` from `strategy`, and backtracks from the scheduled trial
/// stepsize until `phi(x_k + tau d_k) <= max_{[k-m_k]^+ <= i <= k} phi(x_i) +
/// sigma tau <w_k, d_k>`. Iteration 0 uses `params.tau0` and `params.mem0`.
pub fn run_nsm<O, S, T, M>(
    oracle: &O,
    strategy: &S,
    params: &SolverParams,
    step: &mut T,
    memory: &mut M,
    x0: &[f64],
) -> Result<RunResult>
where
    O: Objective + ?Sized,
    S: DirectionStrategy<O::Info> + ?Sized,
    T: StepSchedule + ?Sized,
    M: MemorySchedule + ?Sized,
{
    let mut drv = Driver::new(oracle, strategy, params, x0, false)?;
    let mut tau_bar = params.tau0;
    let mut mem = params.mem0;
    for k in 0..params.max_iter {
        let Some(prep) = drv.prepare(k)? else {
            return Ok(drv.finish(Termination::ZeroSubgradient, k));
        };
        let window_max = drv.window.window_max(mem, k)?;
        let (tau, f_new, backtracks) = drv.search(k, prep.inner, tau_bar, window_max, None)?;
        if drv.advance(k, &prep, window_max, tau_bar, tau, mem, backtracks, f_new)? {
            return Ok(drv.finish(Termination::StopCriterion, k + 1));
        }
        let next_tau_bar = step.next_tau_bar(k, tau_bar, tau);
        if !(next_tau_bar >= params.tau_min) || !next_tau_bar.is_finite() {
            return Err(Error::InvalidParams(format!(
                "step schedule returned {next_tau_bar} < tau_min at iteration {}",
                k + 1
            )));
        }
        let next_mem = memory.next_mem(k, mem);
        let allowed = (mem + 1).min(params.mem_max);
        if next_mem > allowed {
            return Err(Error::InvalidSchedule {
                iter: k + 1,
                got: next_mem,
                max: allowed,
            });
        }
        tau_bar = next_tau_bar;
        mem = next_mem;
    }
    Ok(drv.finish(Termination::MaxIter, params.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FnObjective, Steepest};

    fn square() -> impl Objective<Info = ()> {
        FnObjective::new(
            1,
            |x: &[f64]| x[0] * x[0],
            |x: &[f64], w: &mut [f64]| w[0] = 2.0 * x[0],
        )
    }

    fn params(mem_max: usize) -> SolverParams {
        SolverParams {
            mem_max,
            ..SolverParams::default()
        }
    }

    #[test]
    fn quadratic_contracts_by_six_tenths() {
        let p = params(0);
        let res = run_nsm(
            &square(),
            &Steepest,
            &p,
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[1.0],
        )
        .unwrap();
        assert_eq!(res.termination, Termination::StopCriterion);
        let mut x = 1.0f64;
        for rec in &res.trace {
            let next = x + 0.2 * (-(2.0 * x));
            assert_eq!(rec.tau, 0.2);
            assert_eq!(rec.backtracks, 1);
            assert_eq!(rec.fval, next * next);
            x = next;
        }
        assert_eq!(res.final_point[0], x);
        assert_eq!(res.f_evals, 2 * res.iterations);
        assert_eq!(res.subgradient_evals, res.iterations);
    }

    #[test]
    fn zero_subgradient_at_start() {
        let res = run_nsm(
            &square(),
            &Steepest,
            &params(5),
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[0.0],
        )
        .unwrap();
        assert_eq!(res.termination, Termination::ZeroSubgradient);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.final_point, vec![0.0]);
        assert_eq!(res.final_value, 0.0);
        assert!(res.trace.is_empty());
    }

    #[test]
    fn max_iter_cap() {
        let p = SolverParams {
            max_iter: 3,
            tol: 1e-300,
            ..params(0)
        };
        let res = run_nsm(
            &square(),
            &Steepest,
            &p,
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[1.0],
        )
        .unwrap();
        assert_eq!(res.termination, Termination::MaxIter);
        assert_eq!(res.iterations, 3);
        assert_eq!(res.trace.len(), 3);
    }

    #[test]
    fn trace_stride_thins_records() {
        let p = SolverParams {
            max_iter: 10,
            tol: 1e-300,
            trace_stride: 3,
            ..params(0)
        };
        let res = run_nsm(
            &square(),
            &Steepest,
            &p,
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[1.0],
        )
        .unwrap();
        let iters: Vec<usize> = res.trace.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 3, 6, 9]);
    }

    #[test]
    fn ascent_strategy_is_rejected() {
        struct Uphill;
        impl DirectionStrategy<()> for Uphill {
            fn direction(&self, _: usize, _: &[f64], w: &[f64], _: &(), d: &mut [f64]) {
                d.copy_from_slice(w);
            }
            fn declared_a(&self) -> Option<f64> {
                None
            }
            fn declared_b(&self) -> Option<f64> {
                None
            }
        }
        let err = run_nsm(
            &square(),
            &Uphill,
            &params(0),
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDescentDirection { iter: 0, .. }));
    }

    #[test]
    fn overstated_constant_is_caught() {
        struct Liar;
        impl DirectionStrategy<()> for Liar {
            fn direction(&self, _: usize, _: &[f64], w: &[f64], _: &(), d: &mut [f64]) {
                d[0] = -w[0];
            }
            fn declared_a(&self) -> Option<f64> {
                Some(2.0)
            }
            fn declared_b(&self) -> Option<f64> {
                None
            }
        }
        let err = run_nsm(
            &square(),
            &Liar,
            &params(0),
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::StrategyContract { constant: "a", .. }));
    }

    #[test]
    fn memory_schedule_jumping_by_two_is_rejected() {
        let mut jump = |_k: usize, m: usize| m + 2;
        let p = SolverParams {
            tol: 1e-300,
            ..params(5)
        };
        let err = run_nsm(
            &square(),
            &Steepest,
            &p,
            &mut ConstantStep(1.0),
            &mut jump,
            &[1.0],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidSchedule {
                iter: 1,
                got: 2,
                max: 1
            }
        ));
    }

    #[test]
    fn step_schedule_below_tau_min_is_rejected() {
        let mut tiny = |_: usize, _: f64, _: f64| 1e-9;
        let err = run_nsm(
            &square(),
            &Steepest,
            &params(0),
            &mut tiny,
            &mut ConstantMemory(0),
            &[1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    #[test]
    fn dimension_mismatch() {
        let err = run_nsm(
            &square(),
            &Steepest,
            &params(0),
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 1,
                got: 2
            }
        ));
    }

    #[test]
    fn monotone_when_memory_is_zero() {
        // x^2 + y^2 - |y|: a minimum of two smooth pieces.
        let obj = FnObjective::new(
            2,
            |x: &[f64]| x[0] * x[0] + x[1] * x[1] - x[1].abs(),
            |x: &[f64], w: &mut [f64]| {
                w[0] = 2.0 * x[0];
                w[1] = 2.0 * x[1] - x[1].signum();
            },
        );
        let p = SolverParams {
            max_iter: 200,
            ..params(0)
        };
        let res = run_nsm(
            &obj,
            &Steepest,
            &p,
            &mut ConstantStep(1.0),
            &mut ConstantMemory(0),
            &[3.0, 0.7],
        )
        .unwrap();
        for pair in res.trace.windows(2) {
            assert!(pair[1].fval <= pair[0].fval);
        }
        assert!((res.final_value + 0.25).abs() < 1e-6);
    }

    #[test]
    fn adaptive_rule_branches() {
        assert_eq!(adaptive_tau_bar(true, 1.0, 4.0, 1e-4, 1e8), 4.0);
        assert_eq!(adaptive_tau_bar(true, 1e8, 4.0, 1e-4, 1e8), 1e8);
        assert_eq!(adaptive_tau_bar(false, 1e-6, 4.0, 1e-4, 1e8), 1e-4);
        let mut s = SelfAdaptiveStep::from_params(&SolverParams::default());
        assert_eq!(s.next_tau_bar(0, 1.0, 1.0), 4.0);
        assert_eq!(s.next_tau_bar(1, 4.0, 0.8), 0.8);
        assert_eq!(s.next_tau_bar(2, 0.8, 0.8), 0.8);
        assert_eq!(s.next_tau_bar(3, 0.8, 0.8), 3.2);
    }
}

//! Self-adaptive nonmonotone subgradient method.
//!
//! Compared with [`crate::nsm::run_nsm`], the trial stepsize and memory are
//! driven by the linesearch itself:
//!
//! * before backtracking, if the trial stepsize fails the test with the
//!   current memory, the memory grows by one (once per iteration);
//! * after two consecutive iterations that accepted their trial stepsize, the
//!   next trial is `gamma * tau` and the memory resets to zero; otherwise the
//!   next trial is `max(tau, tau_min)` and the memory becomes the smallest
//!   lag `j` whose value alone would have certified the accepted step.
//!
//! With `mem_max = 0` the method is monotone.

use crate::error::{Error, Result};
use crate::linesearch::MemoryWindow;
use crate::nsm::{adaptive_tau_bar, Driver};
use crate::oracle::{DirectionStrategy, Objective};
use crate::params::SolverParams;
use crate::trace::{RunResult, Termination};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveState {
    pub tau_bar: f64,
    pub mem: usize,
    /// Whether iteration `k - 1` accepted its trial stepsize.
    pub prev_accepted_at_init: bool,
    /// Whether iteration `k` accepted its trial stepsize.
    pub cur_accepted_at_init: bool,
}

impl AdaptiveState {
    pub fn initial(params: &SolverParams) -> Self {
        Self {
            tau_bar: params.tau0,
            mem: params.mem0,
            prev_accepted_at_init: true,
            cur_accepted_at_init: false,
        }
    }
}

pub fn pre_search_mem_bump(accepts_at_init: bool, mem: usize, mem_max: usize) -> usize {
    if accepts_at_init {
        mem
    } else {
        (mem + 1).min(mem_max)
    }
}

/// Trial stepsize and memory for iteration `k + 1`.
///
/// `history` must still end at iterate `k` (the new value `f_new` not pushed)
/// and cover `[k - state.mem]^+..=k`.
#[allow(clippy::too_many_arguments)]
pub fn post_step_update(
    state: &AdaptiveState,
    tau_k: f64,
    gamma: f64,
    tau_min: f64,
    tau_max: f64,
    history: &MemoryWindow,
    f_new: f64,
    sigma: f64,
    inner: f64,
    k: usize,
) -> Result<(f64, usize)> {
    let both = state.prev_accepted_at_init && state.cur_accepted_at_init;
    let tau_bar_next = adaptive_tau_bar(both, tau_k, gamma, tau_min, tau_max);
    if both {
        return Ok((tau_bar_next, 0));
    }
    let decrease = sigma * tau_k * inner;
    for j in 0..=state.mem.min(k) {
        let past = history.get(k - j).ok_or_else(|| {
            Error::Internal(format!("value of iterate {} no longer in memory", k - j))
        })?;
        if f_new < past + decrease {
            return Ok((tau_bar_next, j));
        }
    }
    Err(Error::Internal(format!(
        "no lag in 0..={} certifies the step taken at iteration {k}",
        state.mem
    )))
}

/// Runs the self-adaptive method from `x0`. The linesearch accepts only on
/// strict decrease below the window reference.
pub fn run_snsm<O, S>(
    oracle: &O,
    strategy: &S,
    params: &SolverParams,
    x0: &[f64],
) -> Result<RunResult>
where
    O: Objective + ?Sized,
    S: DirectionStrategy<O::Info> + ?Sized,
{
    let mut drv = Driver::new(oracle, strategy, params, x0, true)?;
    let mut state = AdaptiveState::initial(params);
    for k in 0..params.max_iter {
        let Some(prep) = drv.prepare(k)? else {
            return Ok(drv.finish(Termination::ZeroSubgradient, k));
        };
        let tau_bar = state.tau_bar;
        let mut window_max = drv.window.window_max(state.mem, k)?;
        let f_trial = drv.probe(tau_bar);
        let accepts = drv.armijo.accepts(f_trial, window_max, tau_bar, prep.inner);
        let bumped = pre_search_mem_bump(accepts, state.mem, params.mem_max);
        if bumped != state.mem {
            state.mem = bumped;
            window_max = drv.window.window_max(state.mem, k)?;
        }
        let (tau, f_new, backtracks) =
            drv.search(k, prep.inner, tau_bar, window_max, Some(f_trial))?;
        state.cur_accepted_at_init = backtracks == 0;
        let (next_tau_bar, next_mem) = post_step_update(
            &state,
            tau,
            params.gamma,
            params.tau_min,
            params.tau_max,
            &drv.window,
            f_new,
            params.sigma,
            prep.inner,
            k,
        )?;
        if drv.advance(
            k, &prep, window_max, tau_bar, tau, state.mem, backtracks, f_new,
        )? {
            return Ok(drv.finish(Termination::StopCriterion, k + 1));
        }
        state = AdaptiveState {
            tau_bar: next_tau_bar,
            mem: next_mem,
            prev_accepted_at_init: state.cur_accepted_at_init,
            cur_accepted_at_init: false,
        };
    }
    Ok(drv.finish(Termination::MaxIter, params.max_iter))
}

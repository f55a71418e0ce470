//! Nonmonotone Armijo backtracking against a sliding window maximum.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::oracle::Objective;
use crate::vector::{dot, step_into};

/// Objective values of the most recent iterates, `capacity = mem_max + 1`.
#[derive(Clone, Debug)]
pub struct MemoryWindow {
    capacity: usize,
    /// Iteration index of `values[0]`.
    first: usize,
    values: VecDeque<f64>,
}

impl MemoryWindow {
    /// Starts a window holding only `phi(x_0)`.
    pub fn new(mem_max: usize, f0: f64) -> Self {
        let mut values = VecDeque::with_capacity(mem_max + 1);
        values.push_back(f0);
        Self {
            capacity: mem_max + 1,
            first: 0,
            values,
        }
    }

    /// Builds a window whose entries are the values of iterates `0..values.len()`,
    /// keeping only the last `mem_max + 1`.
    pub fn from_history(mem_max: usize, history: &[f64]) -> Self {
        assert!(!history.is_empty(), "history must contain phi(x_0)");
        let mut w = Self::new(mem_max, history[0]);
        for &v in &history[1..] {
            w.push(v);
        }
        w
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Index of the most recent iterate stored.
    pub fn last_iter(&self) -> usize {
        self.first + self.values.len() - 1
    }

    /// Appends the value of the next iterate, evicting the oldest if full.
    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
            self.first += 1;
        }
        self.values.push_back(value);
    }

    pub fn get(&self, iter: usize) -> Option<f64> {
        iter.checked_sub(self.first)
            .and_then(|i| self.values.get(i).copied())
    }

    /// `max { phi(x_i) : [k - mem]^+ <= i <= k }`.
    pub fn window_max(&self, mem: usize, k: usize) -> Result<f64> {
        let lo = k.saturating_sub(mem);
        if k != self.last_iter() || lo < self.first {
            return Err(Error::Internal(format!(
                "window holds iterates {}..={}, asked for {lo}..={k}",
                self.first,
                self.last_iter()
            )));
        }
        Ok(self
            .values
            .range(lo - self.first..)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Free-function form of [`MemoryWindow::window_max`].
pub fn window_max(window: &MemoryWindow, mem: usize, k: usize) -> Result<f64> {
    window.window_max(mem, k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmijoConfig {
    pub sigma: f64,
    pub beta: f64,
    /// Accept only on strict decrease below the threshold.
    pub strict: bool,
    pub max_backtracks: usize,
}

impl ArmijoConfig {
    pub fn new(sigma: f64, beta: f64, strict: bool) -> Self {
        Self {
            sigma,
            beta,
            strict,
            max_backtracks: 100,
        }
    }

    /// Acceptance test `f_trial <= ref + sigma * tau * inner` (or `<` when strict).
    /// NaN trial values are rejected.
    #[inline]
    pub fn accepts(&self, f_trial: f64, ref_value: f64, tau: f64, inner: f64) -> bool {
        let threshold = ref_value + self.sigma * tau * inner;
        if self.strict {
            f_trial < threshold
        } else {
            f_trial <= threshold
        }
    }

    /// Trial stepsize after `backtracks` reductions.
    #[inline]
    pub fn tau_after(&self, tau_init: f64, backtracks: usize) -> f64 {
        tau_init * self.beta.powi(backtracks as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinesearchOutcome {
    pub tau: f64,
    pub x_new: Vec<f64>,
    pub f_new: f64,
    pub backtracks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stalled {
    pub last_tau: f64,
    pub backtracks: usize,
}

/// Backtracks geometrically from `tau_init` until the nonmonotone Armijo
/// condition holds against `ref_value`.
///
/// The oracle is called exactly `backtracks + 1` times.
#[allow(clippy::too_many_arguments)]
pub fn nonmonotone_armijo<O: Objective + ?Sized>(
    oracle: &O,
    x: &[f64],
    f_x: f64,
    w: &[f64],
    d: &[f64],
    tau_init: f64,
    ref_value: f64,
    config: &ArmijoConfig,
) -> std::result::Result<LinesearchOutcome, Stalled> {
    debug_assert!(ref_value >= f_x || ref_value.is_nan());
    let mut x_new = vec![0.0; x.len()];
    let inner = dot(w, d);
    let (tau, f_new, backtracks) = search_into(
        oracle, x, d, inner, tau_init, ref_value, config, None, &mut x_new,
    )?;
    Ok(LinesearchOutcome {
        tau,
        x_new,
        f_new,
        backtracks,
    })
}

/// Core loop writing the accepted point into `x_new`. `first_probe`, when
/// given, is the already-computed value at `x + tau_init * d` and replaces
/// the first oracle call.
#[allow(clippy::too_many_arguments)]
pub(crate) fn search_into<O: Objective + ?Sized>(
    oracle: &O,
    x: &[f64],
    d: &[f64],
    inner: f64,
    tau_init: f64,
    ref_value: f64,
    config: &ArmijoConfig,
    first_probe: Option<f64>,
    x_new: &mut [f64],
) -> std::result::Result<(f64, f64, usize), Stalled> {
    let mut backtracks = 0;
    let mut tau = tau_init;
    step_into(x_new, x, tau, d);
    let mut f_trial = match first_probe {
        Some(f) => f,
        None => oracle.value(x_new),
    };
    while !config.accepts(f_trial, ref_value, tau, inner) {
        if backtracks == config.max_backtracks {
            return Err(Stalled {
                last_tau: tau,
                backtracks,
            });
        }
        backtracks += 1;
        tau = config.tau_after(tau_init, backtracks);
        step_into(x_new, x, tau, d);
        f_trial = oracle.value(x_new);
    }
    Ok((tau, f_trial, backtracks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FnObjective;
    use proptest::prelude::*;
    use std::cell::Cell;

    fn square() -> impl Objective<Info = ()> {
        FnObjective::new(
            1,
            |x: &[f64]| x[0] * x[0],
            |x: &[f64], w: &mut [f64]| w[0] = 2.0 * x[0],
        )
    }

    #[test]
    fn window_max_examples() {
        let w = MemoryWindow::from_history(5, &[3.0, 1.0, 2.0]);
        assert_eq!(window_max(&w, 0, 2).unwrap(), 2.0);
        assert_eq!(window_max(&w, 1, 2).unwrap(), 2.0);
        assert_eq!(window_max(&w, 5, 2).unwrap(), 3.0);
    }

    #[test]
    fn window_evicts_and_reports_missing_indices() {
        let w = MemoryWindow::from_history(1, &[9.0, 1.0, 2.0, 0.5]);
        assert_eq!(w.last_iter(), 3);
        assert_eq!(w.get(2), Some(2.0));
        assert_eq!(w.get(1), None);
        assert_eq!(w.window_max(1, 3).unwrap(), 2.0);
        assert!(matches!(w.window_max(2, 3), Err(Error::Internal(_))));
        assert!(matches!(w.window_max(0, 2), Err(Error::Internal(_))));
    }

    #[test]
    fn window_matches_brute_force() {
        let hist: Vec<f64> = (0..40)
            .map(|i| ((i * 37) % 11) as f64 - 0.5 * i as f64)
            .collect();
        for mem_max in 0..6 {
            let mut w = MemoryWindow::new(mem_max, hist[0]);
            for k in 0..hist.len() {
                if k > 0 {
                    w.push(hist[k]);
                }
                for m in 0..=mem_max {
                    let lo = k.saturating_sub(m);
                    let brute = hist[lo..=k]
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(w.window_max(m, k).unwrap(), brute);
                }
            }
        }
    }

    #[test]
    fn monotone_example_backtracks_once() {
        let cfg = ArmijoConfig::new(0.2, 0.2, false);
        let out =
            nonmonotone_armijo(&square(), &[1.0], 1.0, &[2.0], &[-2.0], 1.0, 1.0, &cfg).unwrap();
        assert_eq!(out.tau, 0.2);
        assert_eq!(out.backtracks, 1);
        assert!((out.x_new[0] - 0.6).abs() < 1e-15);
        assert!((out.f_new - 0.36).abs() < 1e-15);
    }

    #[test]
    fn nonmonotone_reference_accepts_full_step() {
        let cfg = ArmijoConfig::new(0.2, 0.2, false);
        let out =
            nonmonotone_armijo(&square(), &[1.0], 1.0, &[2.0], &[-2.0], 1.0, 5.0, &cfg).unwrap();
        assert_eq!(
            (out.tau, out.x_new[0], out.f_new, out.backtracks),
            (1.0, -1.0, 1.0, 0)
        );
    }

    #[test]
    fn second_monotone_step() {
        let cfg = ArmijoConfig::new(0.2, 0.2, false);
        let out =
            nonmonotone_armijo(&square(), &[0.6], 0.36, &[1.2], &[-1.2], 1.0, 0.36, &cfg).unwrap();
        assert_eq!((out.tau, out.backtracks), (0.2, 1));
        assert!((out.x_new[0] - 0.36).abs() < 1e-15);
        assert!((out.f_new - 0.1296).abs() < 1e-15);
    }

    #[test]
    fn strict_flag_differs_only_on_ties() {
        // tau = 0.5 lands on x = 0 where phi = 0 equals the threshold 1 - 0.5 * 0.5 * 4.
        let loose = ArmijoConfig::new(0.5, 0.5, false);
        let strict = ArmijoConfig::new(0.5, 0.5, true);
        let a =
            nonmonotone_armijo(&square(), &[1.0], 1.0, &[2.0], &[-2.0], 0.5, 1.0, &loose).unwrap();
        let b =
            nonmonotone_armijo(&square(), &[1.0], 1.0, &[2.0], &[-2.0], 0.5, 1.0, &strict).unwrap();
        assert_eq!((a.tau, a.backtracks, a.f_new), (0.5, 0, 0.0));
        assert_eq!((b.tau, b.backtracks, b.f_new), (0.25, 1, 0.25));
    }

    #[test]
    fn evaluation_count_is_backtracks_plus_one() {
        let calls = Cell::new(0usize);
        let counted = FnObjective::new(
            1,
            |x: &[f64]| {
                calls.set(calls.get() + 1);
                x[0] * x[0]
            },
            |x: &[f64], w: &mut [f64]| w[0] = 2.0 * x[0],
        );
        let cfg = ArmijoConfig::new(0.2, 0.5, false);
        let out =
            nonmonotone_armijo(&counted, &[1.0], 1.0, &[2.0], &[-200.0], 1.0, 1.0, &cfg).unwrap();
        assert!(out.backtracks > 3);
        assert_eq!(calls.get(), out.backtracks + 1);
    }

    #[test]
    fn ascent_direction_stalls() {
        let cfg = ArmijoConfig {
            max_backtracks: 30,
            ..ArmijoConfig::new(0.2, 0.5, false)
        };
        let err =
            nonmonotone_armijo(&square(), &[1.0], 1.0, &[2.0], &[2.0], 1.0, 1.0, &cfg).unwrap_err();
        assert_eq!(err.backtracks, 30);
        assert_eq!(err.last_tau, 0.5f64.powi(30));
    }

    #[test]
    fn nan_trial_values_are_rejected() {
        let nan_far = FnObjective::new(
            1,
            |x: &[f64]| {
                if x[0].abs() > 0.5 {
                    f64::NAN
                } else {
                    x[0] * x[0]
                }
            },
            |x: &[f64], w: &mut [f64]| w[0] = 2.0 * x[0],
        );
        let cfg = ArmijoConfig::new(0.2, 0.5, false);
        let out =
            nonmonotone_armijo(&nan_far, &[0.4], 0.16, &[0.8], &[-0.8], 4.0, 0.16, &cfg).unwrap();
        assert!(out.f_new.is_finite());
        assert!(out.backtracks >= 3);
    }

    proptest! {
        #[test]
        fn accepted_step_satisfies_the_test_and_tau_has_no_drift(
            curv in 0.1f64..50.0, x0 in -10.0f64..10.0, lift in 0.0f64..5.0,
            tau_init in 0.01f64..100.0, strict in any::<bool>(),
        ) {
            prop_assume!(x0.abs() > 1e-6);
            let q = FnObjective::new(1, move |x: &[f64]| curv * x[0] * x[0], move |x: &[f64], w: &mut [f64]| w[0] = 2.0 * curv * x[0]);
            let f0 = curv * x0 * x0;
            let w = [2.0 * curv * x0];
            let d = [-w[0]];
            let cfg = ArmijoConfig::new(0.2, 0.2, strict);
            let out = nonmonotone_armijo(&q, &[x0], f0, &w, &d, tau_init, f0 + lift, &cfg).unwrap();
            prop_assert!(out.backtracks <= 30);
            prop_assert_eq!(out.tau.to_bits(), (tau_init * 0.2f64.powi(out.backtracks as i32)).to_bits());
            let mut rep = tau_init;
            for _ in 0..out.backtracks { rep *= 0.2; }
            prop_assert!((rep - out.tau).abs() <= 1e-14 * out.tau);
            let recomputed = q.value(&[x0 + out.tau * d[0]]);
            prop_assert_eq!(recomputed.to_bits(), out.f_new.to_bits());
            prop_assert!(cfg.accepts(recomputed, f0 + lift, out.tau, w[0] * d[0]));
        }

        #[test]
        fn larger_reference_never_shrinks_the_step(
            curv in 0.1f64..50.0, x0 in -10.0f64..10.0,
            lift in 0.0f64..5.0, extra in 0.0f64..5.0,
        ) {
            prop_assume!(x0.abs() > 1e-6);
            let q = FnObjective::new(1, move |x: &[f64]| curv * x[0] * x[0], move |x: &[f64], w: &mut [f64]| w[0] = 2.0 * curv * x[0]);
            let f0 = curv * x0 * x0;
            let w = [2.0 * curv * x0];
            let d = [-w[0]];
            let cfg = ArmijoConfig::new(0.2, 0.2, false);
            let lo = nonmonotone_armijo(&q, &[x0], f0, &w, &d, 1.0, f0 + lift, &cfg).unwrap();
            let hi = nonmonotone_armijo(&q, &[x0], f0, &w, &d, 1.0, f0 + lift + extra, &cfg).unwrap();
            prop_assert!(hi.tau >= lo.tau);
        }
    }
}

use crate::vector::{dist, norm};

/// Relative-change stopping test on two consecutive iterates:
/// `max(|x_cur - x_prev| / max(|x_prev|, 1), |f_cur - f_prev| / max(|f_prev|, 1)) <= tol`.
pub fn should_stop(x_prev: &[f64], x_cur: &[f64], f_prev: f64, f_cur: f64, tol: f64) -> bool {
    debug_assert_eq!(x_prev.len(), x_cur.len());
    let step = dist(x_cur, x_prev) / norm(x_prev).max(1.0);
    let fchange = (f_cur - f_prev).abs() / f_prev.abs().max(1.0);
    step.max(fchange) <= tol
}

//! Objective and direction abstractions shared by both drivers.

/// A real-valued objective that can report one Clarke subgradient per point.
///
/// Implementations must be deterministic: the same input bits give the same
/// output bits. `Info` carries backend side data (e.g. active indices) from
/// the subgradient evaluation to the direction strategy.
pub trait Objective {
    type Info;

    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes a subgradient at `x` into `w` and returns the objective value at `x`.
    fn subgradient(&self, x: &[f64], w: &mut [f64]) -> (f64, Self::Info);
}

/// Produces a descent direction `d` from an iterate and its subgradient.
///
/// `declared_a`, when present, promises `<w, d> <= -a |d|^2` on every call;
/// `declared_b` promises `|w| <= b |d|`. For `d = -B^{-1} w` with symmetric
/// positive definite `B`, these are the extreme eigenvalues of `B`.
pub trait DirectionStrategy<I> {
    fn direction(&self, iter: usize, x: &[f64], w: &[f64], info: &I, d: &mut [f64]);

    fn declared_a(&self) -> Option<f64>;

    fn declared_b(&self) -> Option<f64>;
}

/// Negative subgradient, `d = -w`. Satisfies both constants with `a = b = 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Steepest;

pub fn steepest_direction(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| -v).collect()
}

impl<I> DirectionStrategy<I> for Steepest {
    fn direction(&self, _iter: usize, _x: &[f64], w: &[f64], _info: &I, d: &mut [f64]) {
        for (di, wi) in d.iter_mut().zip(w) {
            *di = -wi;
        }
    }

    fn declared_a(&self) -> Option<f64> {
        Some(1.0)
    }

    fn declared_b(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Closure-backed objective, handy for small smooth test functions.
pub struct FnObjective<F, G> {
    dim: usize,
    value: F,
    grad: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    pub fn new(dim: usize, value: F, grad: G) -> Self {
        Self { dim, value, grad }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    type Info = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn subgradient(&self, x: &[f64], w: &mut [f64]) -> (f64, ()) {
        (self.grad)(x, w);
        ((self.value)(x), ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::{dot, norm, norm_sq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn steepest_negates() {
        assert_eq!(steepest_direction(&[2.0]), vec![-2.0]);
        assert_eq!(steepest_direction(&[1.0, -1.0]), vec![-1.0, 1.0]);
        let w = [0.2];
        let d = steepest_direction(&w);
        assert_eq!(d, vec![-0.2]);
        assert_eq!(dot(&w, &d), -norm_sq(&d));
        assert!((dot(&w, &d) + 0.04).abs() < 1e-17);
    }

    #[test]
    fn steepest_strategy_matches_free_function() {
        let w = [3.0, -0.5, 0.0];
        let mut d = [0.0; 3];
        DirectionStrategy::<()>::direction(&Steepest, 0, &[0.0; 3], &w, &(), &mut d);
        assert_eq!(d.to_vec(), steepest_direction(&w));
    }

    // d = -B^{-1} w for diagonal SPD B obeys <w,d> = -d'Bd <= -lmin |d|^2 and |w| <= lmax |d|.
    #[test]
    fn diagonal_spd_directions_obey_spectral_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.gen_range(1..8);
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..50.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let d: Vec<f64> = w.iter().zip(&diag).map(|(wi, bi)| -wi / bi).collect();
            let lmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let lmax = diag.iter().cloned().fold(0.0, f64::max);
            let inner = dot(&w, &d);
            let quad: f64 = d.iter().zip(&diag).map(|(di, bi)| bi * di * di).sum();
            assert!((inner + quad).abs() <= 1e-12 * quad.max(1.0));
            assert!(inner <= -lmin * norm_sq(&d) * (1.0 - 1e-12));
            assert!(norm(&w) <= lmax * norm(&d) * (1.0 + 1e-12));
            assert!(inner < 0.0);
        }
    }
}

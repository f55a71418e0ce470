//! Nonconvex quadratic programming over a union of balls, through the
//! forward-backward envelope.
//!
//! The problem is `min 0.5 x'Qx + b'x` subject to `x` lying in one of the
//! `(2g + 1)^n` balls of radius `r` centred at the integer points of
//! `[-g, g]^n` (`g = 4`). With `f(x) = 0.5 x'Qx + b'x` and `psi` the
//! indicator of that set `C`, the envelope is
//!
//! ```text
//! phi(x) = f(x) + <grad f(x), z - x> + |z - x|^2 / (2 lambda),
//! z = P_C(x - lambda grad f(x)),
//! ```
//!
//! and one subgradient is `(1/lambda) (I - lambda Q)(x - z)`. The balls are
//! never enumerated: the nearest centre is found coordinate by coordinate.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{DirectionStrategy, Objective};
use crate::vector::{dist, dot};
use crate::Point;

pub const GRID_BOUND: i32 = 4;
/// `lambda = LAMBDA_FACTOR / |Q|_2`.
pub const LAMBDA_FACTOR: f64 = 0.8;
const POWER_RTOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;
const SYMMETRY_RTOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QpProblem {
    n: usize,
    q: DMatrix<f64>,
    b: DVector<f64>,
    radius: f64,
    grid_bound: i32,
    lambda: f64,
    /// Convexifying shift; always zero for the subgradient methods.
    rho: f64,
    q_norm: f64,
}

impl QpProblem {
    /// Builds a problem with `lambda = 0.8 / |Q|_2`. `q` is row-major.
    pub fn new(q: Vec<f64>, b: Vec<f64>, radius: f64) -> Result<Self> {
        let n = b.len();
        let q = Self::check_matrix(q, n)?;
        let q_norm = spectral_norm(&q);
        if !(q_norm > 0.0) {
            return Err(Error::InvalidParams("Q must be nonzero".into()));
        }
        Self::assemble(q, b, radius, LAMBDA_FACTOR / q_norm, q_norm)
    }

    /// Builds a problem with an explicit `lambda`.
    pub fn with_lambda(q: Vec<f64>, b: Vec<f64>, radius: f64, lambda: f64) -> Result<Self> {
        let n = b.len();
        let q = Self::check_matrix(q, n)?;
        let q_norm = spectral_norm(&q);
        Self::assemble(q, b, radius, lambda, q_norm)
    }

    fn check_matrix(q: Vec<f64>, n: usize) -> Result<DMatrix<f64>> {
        if n == 0 || q.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: q.len(),
            });
        }
        let q = DMatrix::from_row_slice(n, n, &q);
        let scale = q.amax().max(f64::MIN_POSITIVE);
        if (&q - q.transpose()).amax() > SYMMETRY_RTOL * scale {
            return Err(Error::InvalidParams("Q must be symmetric".into()));
        }
        Ok(q)
    }

    fn assemble(
        q: DMatrix<f64>,
        b: Vec<f64>,
        radius: f64,
        lambda: f64,
        q_norm: f64,
    ) -> Result<Self> {
        let n = b.len();
        if !(radius > 0.0 && radius < 0.5 * (n as f64).sqrt()) {
            return Err(Error::InvalidParams(format!(
                "radius must lie in (0, sqrt(n)/2), got {radius}"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams("lambda must be positive".into()));
        }
        if q.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("Q and b must be finite".into()));
        }
        Ok(Self {
            n,
            q,
            b: DVector::from_vec(b),
            radius,
            grid_bound: GRID_BOUND,
            lambda,
            rho: 0.0,
            q_norm,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &[f64] {
        self.b.as_slice()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid_bound(&self) -> i32 {
        self.grid_bound
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn q_norm(&self) -> f64 {
        self.q_norm
    }

    /// `Q x` as a plain vector.
    pub fn q_times(&self, x: &[f64]) -> Point {
        let v = &self.q * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }

    /// `f(x) = 0.5 x'Qx + b'x`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.q_times(x)) + dot(self.b.as_slice(), x)
    }

    /// `grad f(x) = Qx + b`.
    pub fn gradient(&self, x: &[f64]) -> Point {
        let mut g = self.q_times(x);
        for (gi, bi) in g.iter_mut().zip(self.b.iter()) {
            *gi += bi;
        }
        g
    }

    /// Whether `x` lies in the union of balls (up to rounding).
    pub fn contains(&self, x: &[f64]) -> bool {
        let c = nearest_center(x, self.grid_bound);
        dist(x, &c) <= self.radius
    }
}

/// `|Q|_2` by power iteration on `Q^2`.
///
/// The Rayleigh quotient of `Q^2` increases monotonically towards `|Q|_2^2`;
/// iteration stops once the remaining error, extrapolated from the ratio of
/// successive changes, is below `1e-10` relative (or after 10 000 steps).
pub fn spectral_norm(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    // fixed, non-structured starting vector
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_5eed);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    v /= v.norm();
    let mut est = 0.0f64;
    let mut prev_change = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let qv = q * &v;
        let rayleigh = qv.norm_squared();
        let mut u = q * &qv;
        let un = u.norm();
        if un == 0.0 {
            return 0.0;
        }
        u /= un;
        v = u;
        let change = (rayleigh - est).abs();
        est = rayleigh;
        if change == 0.0 {
            break;
        }
        let ratio = change / prev_change;
        prev_change = change;
        if ratio < 1.0 {
            let remaining = change * ratio / (1.0 - ratio);
            if remaining <= POWER_RTOL * rayleigh && change <= POWER_RTOL * rayleigh {
                break;
            }
        }
    }
    est.sqrt()
}

/// Closest grid centre: round each coordinate to the nearest integer (ties
/// toward the smaller one) and clamp to `[-grid_bound, grid_bound]`.
pub fn nearest_center(y: &[f64], grid_bound: i32) -> Point {
    let g = grid_bound as f64;
    y.iter().map(|&v| (v - 0.5).ceil().clamp(-g, g)).collect()
}

/// Nearest point of the union of balls of radius `radius` around the grid.
pub fn project_onto_union(y: &[f64], radius: f64, grid_bound: i32) -> Point {
    let c = nearest_center(y, grid_bound);
    let r = dist(y, &c);
    if r <= radius {
        return y.to_vec();
    }
    let t = radius / r;
    c.iter().zip(y).map(|(ci, yi)| ci + t * (yi - ci)).collect()
}

pub fn project_onto_c(y: &[f64], prob: &QpProblem) -> Point {
    project_onto_union(y, prob.radius, prob.grid_bound)
}

/// Envelope value and the projected point `z`.
fn envelope(prob: &QpProblem, x: &[f64]) -> (f64, Point) {
    let g = prob.gradient(x);
    let f = 0.5 * dot(x, &prob.q_times(x)) + dot(prob.b.as_slice(), x);
    let y: Point = x
        .iter()
        .zip(&g)
        .map(|(xi, gi)| xi - prob.lambda * gi)
        .collect();
    let z = project_onto_c(&y, prob);
    let zx: Point = z.iter().zip(x).map(|(zi, xi)| zi - xi).collect();
    let value = f + dot(&g, &zx) + dot(&zx, &zx) / (2.0 * prob.lambda);
    (value, z)
}

pub fn fbe_value(prob: &QpProblem, x: &[f64]) -> f64 {
    envelope(prob, x).0
}

/// Value and subgradient `(1/lambda)(I - lambda Q)(x - P_C((I - lambda Q)x - lambda b))`.
pub fn fbe_subgradient(prob: &QpProblem, x: &[f64]) -> (f64, Point) {
    let (value, z) = envelope(prob, x);
    let r: Point = x.iter().zip(&z).map(|(xi, zi)| xi - zi).collect();
    let qr = prob.q_times(&r);
    let w = r
        .iter()
        .zip(&qr)
        .map(|(ri, qri)| ri / prob.lambda - qri)
        .collect();
    (value, w)
}

/// The envelope as an oracle for the drivers.
#[derive(Clone, Copy, Debug)]
pub struct FbeObjective<'a> {
    pub prob: &'a QpProblem,
}

impl<'a> FbeObjective<'a> {
    pub fn new(prob: &'a QpProblem) -> Self {
        Self { prob }
    }
}

impl Objective for FbeObjective<'_> {
    type Info = ();

    fn dim(&self) -> usize {
        self.prob.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        fbe_value(self.prob, x)
    }

    fn subgradient(&self, x: &[f64], w: &mut [f64]) -> (f64, ()) {
        let (v, g) = fbe_subgradient(self.prob, x);
        w.copy_from_slice(&g);
        (v, ())
    }
}

/// Newton direction of the smooth part, `d = -(Q + I/lambda)^{-1} w`, with the
/// factorization computed once per problem.
///
/// With `lambda |Q|_2 = 0.8` the eigenvalues of `Q + I/lambda` lie in
/// `[0.25 |Q|_2, 2.25 |Q|_2]`, which are the declared constants.
#[derive(Clone, Debug)]
pub struct QpDirection {
    chol: Cholesky<f64, Dyn>,
    a: f64,
    b: f64,
}

impl QpDirection {
    pub fn new(prob: &QpProblem) -> Result<Self> {
        let inv = 1.0 / prob.lambda;
        let a = inv - prob.q_norm;
        if !(a > 0.0) {
            return Err(Error::InvalidParams(
                "lambda * |Q|_2 must be below 1 for Q + I/lambda to be positive definite".into(),
            ));
        }
        let m = &prob.q + DMatrix::identity(prob.n, prob.n) * inv;
        let chol = Cholesky::new(m).ok_or(Error::Factorization)?;
        Ok(Self {
            chol,
            a,
            b: inv + prob.q_norm,
        })
    }

    pub fn solve(&self, w: &[f64]) -> Point {
        let mut d = self.chol.solve(&DVector::from_column_slice(w));
        d.neg_mut();
        d.as_slice().to_vec()
    }
}

/// Solves `(Q + I/lambda) d = -w`.
pub fn qp_direction(dir: &QpDirection, w: &[f64]) -> Point {
    dir.solve(w)
}

impl DirectionStrategy<()> for QpDirection {
    fn direction(&self, _iter: usize, _x: &[f64], w: &[f64], _info: &(), d: &mut [f64]) {
        d.copy_from_slice(&self.solve(w));
    }

    fn declared_a(&self) -> Option<f64> {
        Some(self.a)
    }

    fn declared_b(&self) -> Option<f64> {
        Some(self.b)
    }
}

/// Rounds to the nearest grid point and evaluates the quadratic there.
pub fn round_and_score(prob: &QpProblem, x: &[f64]) -> (Point, f64) {
    let z = nearest_center(x, prob.grid_bound);
    let v = prob.quadratic(&z);
    (z, v)
}

/// Best grid point by exhaustive enumeration of `[-g, g]^n`, the first in
/// lexicographic order on ties. Only sensible for very small `n`.
pub fn exhaustive_grid_optimum(prob: &QpProblem) -> (Point, f64) {
    let g = prob.grid_bound;
    let side = (2 * g + 1) as usize;
    let total = side.pow(prob.n as u32);
    let mut best = (Vec::new(), f64::INFINITY);
    let mut z = vec![0.0; prob.n];
    for idx in 0..total {
        let mut rest = idx;
        for i in (0..prob.n).rev() {
            z[i] = (rest % side) as f64 - g as f64;
            rest /= side;
        }
        let v = prob.quadratic(&z);
        if v < best.1 {
            best = (z.clone(), v);
        }
    }
    best
}

/// Random instance: `Q = (A + A')/2` and `b` with entries uniform on
/// `[-5, 5]`, radius `(c / 20) sqrt(n)`, from a ChaCha8 stream seeded by `seed`.
pub fn generate_problem(n: usize, c: u32, seed: u64) -> Result<QpProblem> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    if !(1..=9).contains(&c) {
        return Err(Error::InvalidParams(
            "radius factor c must be in 1..=9".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    QpProblem::new(q, b, radius_for(n, c))
}

pub fn radius_for(n: usize, c: u32) -> f64 {
    c as f64 / 20.0 * (n as f64).sqrt()
}

/// Starting point uniform on `[-g, g]^n`.
pub fn random_start(n: usize, grid_bound: i32, seed: u64) -> Point {
    let g = grid_bound as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-g..g)).collect()
}

/// JSON form of a generated instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpInstance {
    pub n: usize,
    pub seed: u64,
    pub c: u32,
    /// Row-major.
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    pub r: f64,
    pub lambda: f64,
}

impl QpInstance {
    pub fn from_problem(prob: &QpProblem, seed: u64, c: u32) -> Self {
        let n = prob.n;
        let q = (0..n * n).map(|k| prob.q[(k / n, k % n)]).collect();
        Self {
            n,
            seed,
            c,
            q,
            b: prob.b.as_slice().to_vec(),
            r: prob.radius,
            lambda: prob.lambda,
        }
    }

    pub fn to_problem(&self) -> Result<QpProblem> {
        QpProblem::with_lambda(self.q.clone(), self.b.clone(), self.r, self.lambda)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

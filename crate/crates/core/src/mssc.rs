//! Minimum sum-of-squares clustering backend.
//!
//! The objective is `phi(X) = (1/p) sum_j min_t |x^t - a^j|^2` over `ell`
//! centroids in `R^s`, stored block-wise in one flat point. A subgradient is
//! obtained by selecting, for each data point, the closest centroid (smallest
//! index on ties) and differentiating that quadratic. The direction scales
//! each centroid block by the inverse of a regularized block-diagonal
//! Hessian of the selected smooth model.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::{DirectionStrategy, Objective};
use crate::Point;

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const ALPHA_MIN: f64 = 1e-6;
pub const ALPHA_MAX: f64 = 1e3;

/// `p` data points in `R^s`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    values: Vec<f64>,
    p: usize,
    s: usize,
}

impl DataSet {
    pub fn new(values: Vec<f64>, s: usize) -> Result<Self> {
        if s == 0 || values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !values.len().is_multiple_of(s) {
            return Err(Error::InvalidParams(format!(
                "{} values do not split into rows of {s}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "dataset entries must be finite".into(),
            ));
        }
        Ok(Self {
            p: values.len() / s,
            values,
            s,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidParams("ragged rows".into()));
        }
        Self::new(rows.concat(), s)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.s..(j + 1) * self.s]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.s)
    }
}

#[derive(Clone, Debug)]
pub struct ClusteringProblem {
    pub data: DataSet,
    pub ell: usize,
    pub alpha: f64,
}

impl ClusteringProblem {
    pub fn new(data: DataSet, ell: usize, alpha: f64) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidParams("ell must be at least 1".into()));
        }
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&alpha) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in [{ALPHA_MIN:e}, {ALPHA_MAX:e}]"
            )));
        }
        Ok(Self { data, ell, alpha })
    }

    /// Length of a centroid point, `s * ell`.
    pub fn dim(&self) -> usize {
        self.data.s * self.ell
    }

    fn check_dim(&self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "centroid point has wrong dimension");
    }
}

/// Active centroid of every data point and the per-centroid tallies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSummary {
    pub active: Vec<usize>,
    pub counts: Vec<usize>,
}

/// Closest centroid to `a` (smallest index on ties) and its squared distance.
fn closest(x: &[f64], a: &[f64], s: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (t, c) in x.chunks_exact(s).enumerate() {
        let d2: f64 = c.iter().zip(a).map(|(ci, ai)| (ci - ai) * (ci - ai)).sum();
        if d2 < best.1 {
            best = (t, d2);
        }
    }
    best
}

pub fn mssc_value(x: &[f64], prob: &ClusteringProblem) -> f64 {
    prob.check_dim(x);
    let s = prob.data.s;
    let total: f64 = prob.data.rows().map(|a| closest(x, a, s).1).sum();
    total / prob.data.p as f64
}

/// Value, subgradient and active summary in one ascending pass over the data.
pub fn mssc_subgradient(x: &[f64], prob: &ClusteringProblem) -> (f64, Point, ActiveSummary) {
    let mut w = vec![0.0; prob.dim()];
    let (value, summary) = subgradient_into(x, prob, &mut w);
    (value, w, summary)
}

fn subgradient_into(x: &[f64], prob: &ClusteringProblem, w: &mut [f64]) -> (f64, ActiveSummary) {
    prob.check_dim(x);
    let s = prob.data.s;
    let p = prob.data.p;
    w.fill(0.0);
    let mut active = Vec::with_capacity(p);
    let mut counts = vec![0; prob.ell];
    let mut total = 0.0;
    for a in prob.data.rows() {
        let (t, d2) = closest(x, a, s);
        total += d2;
        active.push(t);
        counts[t] += 1;
        let block = t * s..(t + 1) * s;
        for ((wi, xi), ai) in w[block.clone()].iter_mut().zip(&x[block]).zip(a) {
            *wi += 2.0 * (xi - ai);
        }
    }
    let pf = p as f64;
    for wi in w.iter_mut() {
        *wi /= pf;
    }
    (total / pf, ActiveSummary { active, counts })
}

/// How the regularization enters the block scale of the direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HessianRegConvention {
    /// Block scale `p / (2 q_t + alpha)`.
    #[default]
    Componentwise,
    /// `(H + alpha I)^{-1}` with `H = blkdiag(2 q_t / p)`, i.e. block scale
    /// `p / (2 q_t + p alpha)`.
    Regularized,
}

impl HessianRegConvention {
    /// Multiplier of `w^t` (before negation) for a block with `q` active points.
    pub fn scale(self, q: usize, p: usize, alpha: f64) -> f64 {
        let pf = p as f64;
        match self {
            HessianRegConvention::Componentwise => pf / (2.0 * q as f64 + alpha),
            HessianRegConvention::Regularized => pf / (2.0 * q as f64 + pf * alpha),
        }
    }
}

/// `d^t = -(p / (2 q_t + alpha)) w^t` for every centroid block `t`.
pub fn mssc_direction(w: &[f64], summary: &ActiveSummary, p: usize, alpha: f64) -> Point {
    let mut d = vec![0.0; w.len()];
    direction_into(
        w,
        &summary.counts,
        p,
        alpha,
        HessianRegConvention::Componentwise,
        &mut d,
    );
    d
}

fn direction_into(
    w: &[f64],
    counts: &[usize],
    p: usize,
    alpha: f64,
    conv: HessianRegConvention,
    d: &mut [f64],
) {
    let s = w.len() / counts.len();
    for (t, &q) in counts.iter().enumerate() {
        let scale = conv.scale(q, p, alpha);
        for i in t * s..(t + 1) * s {
            d[i] = -scale * w[i];
        }
    }
}

/// Regularization weight, constant or chosen per iteration. Per-iteration
/// values are clamped to `[ALPHA_MIN, ALPHA_MAX]`.
#[derive(Clone)]
pub enum AlphaRule {
    Constant(f64),
    PerIteration(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for AlphaRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlphaRule::Constant(a) => write!(f, "Constant({a})"),
            AlphaRule::PerIteration(_) => f.write_str("PerIteration(..)"),
        }
    }
}

impl AlphaRule {
    pub fn at(&self, iter: usize) -> f64 {
        match self {
            AlphaRule::Constant(a) => *a,
            AlphaRule::PerIteration(f) => f(iter).clamp(ALPHA_MIN, ALPHA_MAX),
        }
    }

    fn lower_bound(&self) -> f64 {
        match self {
            AlphaRule::Constant(a) => *a,
            AlphaRule::PerIteration(_) => ALPHA_MIN,
        }
    }

    fn upper_bound(&self) -> f64 {
        match self {
            AlphaRule::Constant(a) => *a,
            AlphaRule::PerIteration(_) => ALPHA_MAX,
        }
    }
}

/// The clustering objective as an oracle for the drivers.
#[derive(Clone, Debug)]
pub struct MsscObjective<'a> {
    pub prob: &'a ClusteringProblem,
}

impl<'a> MsscObjective<'a> {
    pub fn new(prob: &'a ClusteringProblem) -> Self {
        Self { prob }
    }
}

impl Objective for MsscObjective<'_> {
    type Info = ActiveSummary;

    fn dim(&self) -> usize {
        self.prob.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        mssc_value(x, self.prob)
    }

    fn subgradient(&self, x: &[f64], w: &mut [f64]) -> (f64, ActiveSummary) {
        subgradient_into(x, self.prob, w)
    }
}

/// Regularized diagonal-Hessian direction `d = -B^{-1} w` with
/// `B = blkdiag((2 q_t + alpha) / p)` (or the `Regularized` convention).
///
/// The declared constants are the extreme eigenvalues of `B` over all
/// possible tallies, `a = alpha / p` and `b = (2p + alpha) / p` for the
/// componentwise convention.
#[derive(Clone, Debug)]
pub struct MsscDirection {
    pub p: usize,
    pub alpha: AlphaRule,
    pub convention: HessianRegConvention,
}

impl MsscDirection {
    pub fn new(prob: &ClusteringProblem) -> Self {
        Self {
            p: prob.data.p,
            alpha: AlphaRule::Constant(prob.alpha),
            convention: HessianRegConvention::Componentwise,
        }
    }

    pub fn with_convention(mut self, convention: HessianRegConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_alpha(mut self, alpha: AlphaRule) -> Self {
        self.alpha = alpha;
        self
    }
}

impl DirectionStrategy<ActiveSummary> for MsscDirection {
    fn direction(&self, iter: usize, _x: &[f64], w: &[f64], info: &ActiveSummary, d: &mut [f64]) {
        direction_into(
            w,
            &info.counts,
            self.p,
            self.alpha.at(iter),
            self.convention,
            d,
        );
    }

    fn declared_a(&self) -> Option<f64> {
        // smallest eigenvalue of B: an empty block
        Some(1.0 / self.convention.scale(0, self.p, self.alpha.lower_bound()))
    }

    fn declared_b(&self) -> Option<f64> {
        Some(
            1.0 / self
                .convention
                .scale(self.p, self.p, self.alpha.upper_bound()),
        )
    }
}

/// Centroids drawn uniformly from the bounding box of the data with a
/// ChaCha8 generator seeded by `seed`.
pub fn random_init(prob: &ClusteringProblem, seed: u64) -> Point {
    let s = prob.data.s;
    let mut lo = vec![f64::INFINITY; s];
    let mut hi = vec![f64::NEG_INFINITY; s];
    for a in prob.data.rows() {
        for i in 0..s {
            lo[i] = lo[i].min(a[i]);
            hi[i] = hi[i].max(a[i]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(prob.dim());
    for _ in 0..prob.ell {
        for i in 0..s {
            let u: f64 = rng.gen();
            x.push(lo[i] + u * (hi[i] - lo[i]));
        }
    }
    x
}

/// Reads comma-separated numeric rows. Blank lines are skipped.
pub fn load_csv(path: &Path, skip_header: bool) -> Result<DataSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, skip_header, path)
}

pub fn parse_csv(text: &str, skip_header: bool, origin: &Path) -> Result<DataSet> {
    let err = |line: u64, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line: line as usize,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut s = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line, format!("non-numeric field `{field}`")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite field `{field}`")));
            }
            values.push(v);
        }
        match s {
            None => s = Some(record.len()),
            Some(expected) if expected != record.len() => {
                return Err(err(
                    line,
                    format!("expected {expected} fields, got {}", record.len()),
                ));
            }
            _ => {}
        }
    }
    match s {
        Some(s) => DataSet::new(values, s),
        None => Err(err(1, "no data rows".into())),
    }
}

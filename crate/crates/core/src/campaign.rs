//! Seeded multi-start experiments and their CSV / JSON outputs.
//!
//! Every cell `(problem, start, method)` is independent. Its randomness comes
//! only from the base seed and its indices:
//!
//! ```text
//! start seed   = base ^ (problem * PROBLEM_SEED_MULT) ^ (start * START_SEED_MULT)
//! problem seed = base ^ (problem * PROBLEM_SEED_MULT) ^ PROBLEM_SALT
//! ```
//!
//! (wrapping multiplication), so any single cell can be rerun in isolation.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbe_qp::{self, FbeObjective, QpDirection, QpInstance, QpProblem};
use crate::mssc::{self, ClusteringProblem, HessianRegConvention, MsscDirection, MsscObjective};
use crate::nsm::{run_nsm, ConstantMemory, ConstantStep};
use crate::oracle::{DirectionStrategy, Objective, Steepest};
use crate::params::SolverParams;
use crate::snsm::run_snsm;
use crate::trace::{fmt_f64, write_trace_csv, RunResult};

pub const PROBLEM_SEED_MULT: u64 = 0x9E37_79B9_7F4A_7C15;
pub const START_SEED_MULT: u64 = 0xC2B2_AE3D_27D4_EB4F;
pub const PROBLEM_SALT: u64 = 0xD6E8_FEB8_6659_FD93;

/// Rounded objectives closer than this count as a tie.
pub const TIE_TOL: f64 = 1e-9;

pub fn start_seed(base: u64, problem: usize, start: usize) -> u64 {
    base ^ (problem as u64).wrapping_mul(PROBLEM_SEED_MULT)
        ^ (start as u64).wrapping_mul(START_SEED_MULT)
}

pub fn problem_seed(base: u64, problem: usize) -> u64 {
    base ^ (problem as u64).wrapping_mul(PROBLEM_SEED_MULT) ^ PROBLEM_SALT
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Self-adaptive method with the backend's direction.
    Snsm,
    /// Same with `mem_max = 0` (monotone).
    SnsmM0,
    /// Generic driver, negative subgradient, constant trial stepsize, zero memory.
    NsmSteepest,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Snsm, Method::SnsmM0, Method::NsmSteepest];

    pub fn name(self) -> &'static str {
        match self {
            Method::Snsm => "snsm",
            Method::SnsmM0 => "snsm-m0",
            Method::NsmSteepest => "nsm-steepest",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected snsm, snsm-m0 or nsm-steepest)"))
    }
}

/// Runs one method from `x0`.
pub fn solve<O, S>(
    method: Method,
    oracle: &O,
    strategy: &S,
    params: &SolverParams,
    x0: &[f64],
) -> Result<RunResult>
where
    O: Objective + ?Sized,
    S: DirectionStrategy<O::Info> + ?Sized,
{
    match method {
        Method::Snsm => run_snsm(oracle, strategy, params, x0),
        Method::SnsmM0 => {
            let p = SolverParams {
                mem0: 0,
                mem_max: 0,
                ..params.clone()
            };
            run_snsm(oracle, strategy, &p, x0)
        }
        Method::NsmSteepest => {
            let p = SolverParams {
                mem0: 0,
                ..params.clone()
            };
            run_nsm(
                oracle,
                &Steepest,
                &p,
                &mut ConstantStep(p.tau0),
                &mut ConstantMemory(0),
                x0,
            )
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub problem: usize,
    pub start: usize,
    pub problem_seed: u64,
    pub start_seed: u64,
    pub method: Method,
    pub result: std::result::Result<RunResult, String>,
    /// Rounded grid objective (QP campaigns only).
    pub rounded: Option<f64>,
}

impl CellOutcome {
    pub fn stem(&self) -> String {
        format!("{}_p{:03}_s{:03}", self.method, self.problem, self.start)
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// Clustering

#[derive(Clone, Debug)]
pub struct MsscCampaign {
    pub prob: ClusteringProblem,
    pub params: SolverParams,
    pub methods: Vec<Method>,
    pub starts: usize,
    pub seed: u64,
    pub convention: HessianRegConvention,
    pub jobs: usize,
}

/// One clustering cell, reproducible from its indices alone.
pub fn run_mssc_cell(
    prob: &ClusteringProblem,
    convention: HessianRegConvention,
    params: &SolverParams,
    method: Method,
    base_seed: u64,
    start: usize,
) -> CellOutcome {
    let seed = start_seed(base_seed, 0, start);
    let x0 = mssc::random_init(prob, seed);
    let oracle = MsscObjective::new(prob);
    let dir = MsscDirection::new(prob).with_convention(convention);
    let result = solve(method, &oracle, &dir, params, &x0).map_err(|e| e.to_string());
    CellOutcome {
        problem: 0,
        start,
        problem_seed: base_seed,
        start_seed: seed,
        method,
        result,
        rounded: None,
    }
}

impl MsscCampaign {
    pub fn run(&self) -> Result<Vec<CellOutcome>> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParams(
                "at least one method is required".into(),
            ));
        }
        self.params.validate()?;
        let cells: Vec<(usize, Method)> = (0..self.starts)
            .flat_map(|s| self.methods.iter().map(move |&m| (s, m)))
            .collect();
        let out = pool(self.jobs)?.install(|| {
            cells
                .par_iter()
                .map(|&(s, m)| {
                    run_mssc_cell(&self.prob, self.convention, &self.params, m, self.seed, s)
                })
                .collect()
        });
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean_iterations: f64,
    pub mean_f_evals: f64,
    pub mean_seconds: f64,
    pub mean_value: f64,
    pub best_value: f64,
}

/// Per-method means over successful runs, in the order methods first appear.
pub fn summarize(outcomes: &[CellOutcome]) -> Vec<MethodSummary> {
    let mut order: Vec<Method> = Vec::new();
    for o in outcomes {
        if !order.contains(&o.method) {
            order.push(o.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let ok: Vec<&RunResult> = outcomes
                .iter()
                .filter(|o| o.method == method)
                .filter_map(|o| o.result.as_ref().ok())
                .collect();
            let failures = outcomes
                .iter()
                .filter(|o| o.method == method && o.result.is_err())
                .count();
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&RunResult) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n
                }
            };
            MethodSummary {
                method,
                runs: ok.len(),
                failures,
                mean_iterations: mean(&|r| r.iterations as f64),
                mean_f_evals: mean(&|r| r.f_evals as f64),
                mean_seconds: mean(&|r| r.wall_time),
                mean_value: mean(&|r| r.final_value),
                best_value: ok
                    .iter()
                    .map(|r| r.final_value)
                    .fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Ball-constrained QP

#[derive(Clone, Debug)]
pub struct QpCampaign {
    pub n: usize,
    pub c: u32,
    pub problems: usize,
    pub starts: usize,
    pub params: SolverParams,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub jobs: usize,
}

pub struct GeneratedProblem {
    pub index: usize,
    pub seed: u64,
    pub problem: QpProblem,
    pub direction: QpDirection,
}

impl GeneratedProblem {
    pub fn new(n: usize, c: u32, base_seed: u64, index: usize) -> Result<Self> {
        let seed = problem_seed(base_seed, index);
        let problem = fbe_qp::generate_problem(n, c, seed)?;
        let direction = QpDirection::new(&problem)?;
        Ok(Self {
            index,
            seed,
            problem,
            direction,
        })
    }
}

pub fn run_qp_cell(
    gp: &GeneratedProblem,
    params: &SolverParams,
    method: Method,
    base_seed: u64,
    start: usize,
) -> CellOutcome {
    let seed = start_seed(base_seed, gp.index, start);
    let x0 = fbe_qp::random_start(gp.problem.n(), gp.problem.grid_bound(), seed);
    let oracle = FbeObjective::new(&gp.problem);
    let result = solve(method, &oracle, &gp.direction, params, &x0).map_err(|e| e.to_string());
    let rounded = result
        .as_ref()
        .ok()
        .map(|r| fbe_qp::round_and_score(&gp.problem, &r.final_point).1);
    CellOutcome {
        problem: gp.index,
        start,
        problem_seed: gp.seed,
        start_seed: seed,
        method,
        result,
        rounded,
    }
}

pub struct QpCampaignOutput {
    pub problems: Vec<GeneratedProblem>,
    pub outcomes: Vec<CellOutcome>,
}

impl QpCampaign {
    pub fn run(&self) -> Result<QpCampaignOutput> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParams(
                "at least one method is required".into(),
            ));
        }
        self.params.validate()?;
        let problems = (0..self.problems)
            .map(|i| GeneratedProblem::new(self.n, self.c, self.seed, i))
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<(usize, usize, Method)> = (0..self.problems)
            .flat_map(|p| {
                (0..self.starts).flat_map(move |s| self.methods.iter().map(move |&m| (p, s, m)))
            })
            .collect();
        let outcomes = pool(self.jobs)?.install(|| {
            cells
                .par_iter()
                .map(|&(p, s, m)| run_qp_cell(&problems[p], &self.params, m, self.seed, s))
                .collect()
        });
        Ok(QpCampaignOutput { problems, outcomes })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WinLoss {
    /// SNSM found a strictly lower rounded objective.
    pub snsm_lower: usize,
    /// SNSM found a strictly higher rounded objective.
    pub snsm_higher: usize,
    pub ties: usize,
    /// Cells where either run failed.
    pub skipped: usize,
}

/// Compares `snsm` against `other` cell by cell on rounded objectives.
pub fn win_loss(outcomes: &[CellOutcome], other: Method) -> WinLoss {
    let mut wl = WinLoss::default();
    for o in outcomes.iter().filter(|o| o.method == Method::Snsm) {
        let rival = outcomes
            .iter()
            .find(|r| r.method == other && r.problem == o.problem && r.start == o.start);
        let Some(rival) = rival else { continue };
        match (o.rounded, rival.rounded) {
            (Some(a), Some(b)) => {
                if (a - b).abs() <= TIE_TOL {
                    wl.ties += 1;
                } else if a < b {
                    wl.snsm_lower += 1;
                } else {
                    wl.snsm_higher += 1;
                }
            }
            _ => wl.skipped += 1,
        }
    }
    wl
}

/// Best rounded objective of `method` on problem `index`.
pub fn best_rounded(outcomes: &[CellOutcome], index: usize, method: Method) -> Option<f64> {
    outcomes
        .iter()
        .filter(|o| o.problem == index && o.method == method)
        .filter_map(|o| o.rounded)
        .reduce(f64::min)
}

// ---------------------------------------------------------------------------
// Output

#[derive(Clone, Debug)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Write wall times; when false, time columns hold `0.000` so outputs are
    /// byte-for-byte reproducible.
    pub timing: bool,
    pub traces: bool,
}

fn seconds(v: f64, timing: bool) -> String {
    if timing {
        format!("{v:.3}")
    } else {
        "0.000".to_string()
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_cells(outcomes: &[CellOutcome], opts: &OutputOptions) -> Result<()> {
    if !opts.traces {
        return Ok(());
    }
    let traces = opts.dir.join("traces");
    let results = opts.dir.join("results");
    ensure_dir(&traces)?;
    ensure_dir(&results)?;
    for o in outcomes {
        if let Ok(r) = &o.result {
            write_trace_csv(&traces.join(format!("{}.csv", o.stem())), &r.trace)?;
            let mut r = r.clone();
            if !opts.timing {
                r.wall_time = 0.0;
            }
            r.write_json(&results.join(format!("{}.json", o.stem())))?;
        }
    }
    Ok(())
}

pub const RUNS_HEADER: &str = "problem,start,problem_seed,start_seed,method,status,termination,final_value,rounded_value,iterations,f_evals,subgradient_evals,seconds";

pub fn runs_csv(outcomes: &[CellOutcome], timing: bool) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for o in outcomes {
        let rounded = o.rounded.map(fmt_f64).unwrap_or_default();
        match &o.result {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},ok,{},{},{},{},{},{},{}",
                    o.problem,
                    o.start,
                    o.problem_seed,
                    o.start_seed,
                    o.method,
                    r.termination,
                    fmt_f64(r.final_value),
                    rounded,
                    r.iterations,
                    r.f_evals,
                    r.subgradient_evals,
                    seconds(r.wall_time, timing),
                );
            }
            Err(e) => {
                let msg = e.replace([',', '\n'], ";");
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},error: {msg},,,,,,,",
                    o.problem, o.start, o.problem_seed, o.start_seed, o.method
                );
            }
        }
    }
    out
}

pub const AGGREGATE_HEADER: &str =
    "method,runs,failures,mean_iterations,mean_f_evals,mean_seconds,mean_final_value,best_final_value";

pub fn aggregate_csv(summaries: &[MethodSummary], timing: bool) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.method,
            s.runs,
            s.failures,
            fmt_f64(s.mean_iterations),
            fmt_f64(s.mean_f_evals),
            seconds(s.mean_seconds, timing),
            fmt_f64(s.mean_value),
            fmt_f64(s.best_value),
        );
    }
    out
}

pub fn write_mssc_outputs(
    outcomes: &[CellOutcome],
    opts: &OutputOptions,
) -> Result<Vec<MethodSummary>> {
    ensure_dir(&opts.dir)?;
    write_cells(outcomes, opts)?;
    write_file(&opts.dir.join("runs.csv"), &runs_csv(outcomes, opts.timing))?;
    let summaries = summarize(outcomes);
    write_file(
        &opts.dir.join("aggregate.csv"),
        &aggregate_csv(&summaries, opts.timing),
    )?;
    Ok(summaries)
}

pub const WINLOSS_HEADER: &str = "method,snsm_lower,snsm_higher,ties,skipped";

pub fn winloss_csv(outcomes: &[CellOutcome], methods: &[Method]) -> String {
    let mut out = String::from(WINLOSS_HEADER);
    out.push('\n');
    if !methods.contains(&Method::Snsm) {
        return out;
    }
    for &m in methods.iter().filter(|&&m| m != Method::Snsm) {
        let wl = win_loss(outcomes, m);
        let _ = writeln!(
            out,
            "{m},{},{},{},{}",
            wl.snsm_lower, wl.snsm_higher, wl.ties, wl.skipped
        );
    }
    out
}

/// Per-problem best rounded values, with the exhaustive grid optimum as a
/// reference column when `n <= 2`.
pub fn problems_csv(output: &QpCampaignOutput, methods: &[Method]) -> String {
    let mut out = String::from("problem,problem_seed,exhaustive_optimum");
    for m in methods {
        let _ = write!(out, ",best_{m}");
    }
    out.push('\n');
    for gp in &output.problems {
        let exhaustive = if gp.problem.n() <= 2 {
            fmt_f64(fbe_qp::exhaustive_grid_optimum(&gp.problem).1)
        } else {
            String::new()
        };
        let _ = write!(out, "{},{},{}", gp.index, gp.seed, exhaustive);
        for &m in methods {
            let best = best_rounded(&output.outcomes, gp.index, m)
                .map(fmt_f64)
                .unwrap_or_default();
            let _ = write!(out, ",{best}");
        }
        out.push('\n');
    }
    out
}

pub fn write_qp_outputs(
    campaign: &QpCampaign,
    output: &QpCampaignOutput,
    opts: &OutputOptions,
) -> Result<()> {
    ensure_dir(&opts.dir)?;
    let pdir = opts.dir.join("problems");
    ensure_dir(&pdir)?;
    for gp in &output.problems {
        QpInstance::from_problem(&gp.problem, gp.seed, campaign.c)
            .write_json(&pdir.join(format!("problem_{:03}.json", gp.index)))?;
    }
    write_cells(&output.outcomes, opts)?;
    write_file(
        &opts.dir.join("runs.csv"),
        &runs_csv(&output.outcomes, opts.timing),
    )?;
    write_file(
        &opts.dir.join("winloss.csv"),
        &winloss_csv(&output.outcomes, &campaign.methods),
    )?;
    write_file(
        &opts.dir.join("problems.csv"),
        &problems_csv(output, &campaign.methods),
    )?;
    Ok(())
}

//! `snsm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or parse error, 3 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snsm::campaign::{self, Method, MsscCampaign, OutputOptions, QpCampaign};
use snsm::mssc::{self, ClusteringProblem, HessianRegConvention, DEFAULT_ALPHA};
use snsm::trace::read_trace_csv;
use snsm::verify::{check_trace, CheckConfig};
use snsm::{Error, SolverParams};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "snsm",
    version,
    about = "Self-adaptive nonmonotone subgradient method"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multi-start clustering campaign on a CSV dataset.
    Mssc(MsscArgs),
    /// Random integer-ball-constrained QP campaign.
    Qp(QpArgs),
    /// Verify a trace CSV against the nonmonotone descent laws.
    TraceCheck(TraceCheckArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long)]
    mem0: Option<usize>,
    #[arg(long)]
    mem_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Keep every n-th trace row.
    #[arg(long)]
    trace_stride: Option<usize>,
}

impl SolverArgs {
    fn params(&self, seed: u64) -> SolverParams {
        let d = SolverParams::default();
        SolverParams {
            sigma: self.sigma.unwrap_or(d.sigma),
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.unwrap_or(d.gamma),
            tau0: self.tau0.unwrap_or(d.tau0),
            tau_min: self.tau_min.unwrap_or(d.tau_min),
            tau_max: self.tau_max.unwrap_or(d.tau_max),
            mem0: self.mem0.unwrap_or(d.mem0),
            mem_max: self.mem_max.unwrap_or(d.mem_max),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            trace_stride: self.trace_stride.unwrap_or(d.trace_stride),
            seed,
            ..d
        }
    }
}

#[derive(Args, Debug, Clone)]
struct CampaignArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "snsm-out")]
    output_dir: PathBuf,
    /// Method to run; repeat for several. Defaults to all three.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,
    /// Write zero wall times so output files are reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ConventionArg {
    Componentwise,
    Regularized,
}

#[derive(Args, Debug)]
struct MsscArgs {
    /// Numeric CSV, one point per row.
    dataset: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    ell: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    skip_header: bool,
    #[arg(long, value_enum, default_value = "componentwise")]
    hessian_reg_convention: ConventionArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    campaign: CampaignArgs,
}

#[derive(Args, Debug)]
struct QpArgs {
    /// Dimension.
    #[arg(long)]
    n: usize,
    /// Radius factor, 1..=9.
    #[arg(long)]
    c: u32,
    #[arg(long, default_value_t = 10)]
    problems: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    campaign: CampaignArgs,
}

#[derive(Args, Debug)]
struct TraceCheckArgs {
    trace: PathBuf,
    /// Strategy constant `a` of the run's direction.
    #[arg(long, default_value_t = 1.0)]
    declared_a: f64,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Memory cap; defaults to the largest `mem` in the trace.
    #[arg(long)]
    mem_max: Option<usize>,
    /// Stepsize cap for the rate diagnostic; defaults to the largest `tau`.
    #[arg(long)]
    tau_max: Option<f64>,
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
        _ => EXIT_IO,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(&e))
}

fn methods(args: &CampaignArgs) -> Vec<Method> {
    let mut m = if args.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        args.methods.clone()
    };
    m.sort();
    m.dedup();
    m
}

fn check_starts(args: &CampaignArgs) -> Result<(), Error> {
    if args.starts == 0 {
        return Err(Error::InvalidParams("--starts must be at least 1".into()));
    }
    Ok(())
}

fn output_options(args: &CampaignArgs) -> OutputOptions {
    OutputOptions {
        dir: args.output_dir.clone(),
        timing: !args.no_timing,
        traces: true,
    }
}

fn cmd_mssc(args: MsscArgs) -> Result<(), Error> {
    check_starts(&args.campaign)?;
    let data = mssc::load_csv(&args.dataset, args.skip_header)?;
    let prob = ClusteringProblem::new(data, args.ell, args.alpha)?;
    let convention = match args.hessian_reg_convention {
        ConventionArg::Componentwise => HessianRegConvention::Componentwise,
        ConventionArg::Regularized => HessianRegConvention::Regularized,
    };
    let camp = MsscCampaign {
        prob,
        params: args.solver.params(args.campaign.seed),
        methods: methods(&args.campaign),
        starts: args.campaign.starts,
        seed: args.campaign.seed,
        convention,
        jobs: args.campaign.jobs,
    };
    let outcomes = camp.run()?;
    let opts = output_options(&args.campaign);
    let summaries = campaign::write_mssc_outputs(&outcomes, &opts)?;
    print!("{}", campaign::aggregate_csv(&summaries, opts.timing));
    report_failures(&outcomes);
    Ok(())
}

fn cmd_qp(args: QpArgs) -> Result<(), Error> {
    check_starts(&args.campaign)?;
    let camp = QpCampaign {
        n: args.n,
        c: args.c,
        problems: args.problems,
        starts: args.campaign.starts,
        params: args.solver.params(args.campaign.seed),
        methods: methods(&args.campaign),
        seed: args.campaign.seed,
        jobs: args.campaign.jobs,
    };
    if camp.n == 0 || !(1..=9).contains(&camp.c) {
        return Err(Error::InvalidParams("need n >= 1 and c in 1..=9".into()));
    }
    let out = camp.run()?;
    let opts = output_options(&args.campaign);
    campaign::write_qp_outputs(&camp, &out, &opts)?;
    print!("{}", campaign::winloss_csv(&out.outcomes, &camp.methods));
    report_failures(&out.outcomes);
    Ok(())
}

fn report_failures(outcomes: &[campaign::CellOutcome]) {
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    if failed > 0 {
        eprintln!(
            "warning: {failed} of {} runs failed; see runs.csv",
            outcomes.len()
        );
    }
}

fn cmd_trace_check(args: TraceCheckArgs) -> ExitCode {
    let trace = match read_trace_csv(Path::new(&args.trace)) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let cfg = CheckConfig {
        sigma: args.sigma,
        declared_a: Some(args.declared_a),
        mem_max: args.mem_max,
        tau_max: args.tau_max,
    };
    match check_trace(&trace, &cfg) {
        Ok(report) => {
            println!(
                "ok: {} rows, rate constant {:.6e}",
                report.rows,
                report.rate_constant.unwrap_or(f64::NAN)
            );
            ExitCode::SUCCESS
        }
        Err(v) => {
            println!("FAIL: {v}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Mssc(a) => cmd_mssc(a),
        Command::Qp(a) => cmd_qp(a),
        Command::TraceCheck(a) => return cmd_trace_check(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

//! `ecp-se`: synthesize measurements, estimate, verify and benchmark.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecp_se::case_io::{
    parse_matpower, parse_measurements, parse_report, write_bench_report, write_measurements,
    write_report, CaseNetwork, MeasurementSet, Report,
};
use ecp_se::ecp::{PmuVoltageBounds, Problem};
use ecp_se::grid::build_bus_admittance;
use ecp_se::metrics::{benchmark, metrics, BenchOptions, Execution, MetricScope};
use ecp_se::powerflow::{solve_powerflow, DEFAULT_MAX_ITER, DEFAULT_TOL};
use ecp_se::solver::{estimate_with_admittance, InitMode, SolverConfig, Status};
use ecp_se::sosc::{check_sosc, ACTIVITY_THRESHOLD};
use ecp_se::synth::{
    synthesize_measurements, NoiseProfile, Placement, SynthOptions, DEFAULT_G_PMU,
};
use ecp_se::verify::{certify, Tolerances};
use ecp_se::Error;

const THREADS_VAR: &str = "ECP_SE_THREADS";

#[derive(Parser)]
#[command(
    name = "ecp-se",
    version,
    about = "Power-system state estimation as an equivalent circuit program"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power flow of a case and draw one noisy measurement set.
    Synth(SynthArgs),
    /// Estimate the state from a measurement document.
    Estimate(EstimateArgs),
    /// Check the optimality conditions at a reported state.
    Verify(VerifyArgs),
    /// Run repeated noisy estimates on a fixed placement.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PlacementArgs {
    /// Number of PMUs, placed on the highest-degree buses.
    #[arg(long, group = "pmus")]
    pmu_count: Option<usize>,
    /// PMUs as a fraction of all buses.
    #[arg(long, group = "pmus")]
    pmu_frac: Option<f64>,
    /// Explicit PMU bus ids, comma separated.
    #[arg(long, group = "pmus", value_delimiter = ',')]
    pmu_buses: Option<Vec<u32>>,
    /// Minimum fraction of buses that must be RTU-measured or zero-injection.
    #[arg(long, default_value_t = 0.9)]
    rtu_frac: f64,
    /// `table3`, `zero` or `custom:rtu_i=..,rtu_v=..,rtu_pf=..,pmu_i=..,pmu_v=..`.
    #[arg(long, default_value = "table3", value_parser = parse_profile)]
    profile: NoiseProfile,
    /// PMU mismatch conductance, per unit.
    #[arg(long, default_value_t = DEFAULT_G_PMU)]
    gpmu: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    placement: PlacementArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise stream; benchmark trial `t` uses stream `t`.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Flat,
    Seeded,
    Circuit,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundsArg {
    Limited,
    Multipliers,
}

#[derive(Args)]
struct SolverArgs {
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Barrier tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol_eps: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "circuit")]
    init: InitArg,
    /// Treatment of the PMU voltage boxes.
    #[arg(long, value_enum, default_value = "limited")]
    pmu_bounds: BoundsArg,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol_kkt: self.tol,
            tol_eps: self.tol_eps,
            max_iter: self.max_iter,
            init_mode: match self.init {
                InitArg::Flat => InitMode::Flat,
                InitArg::Seeded => InitMode::Seeded,
                InitArg::Circuit => InitMode::Circuit,
            },
            pmu_voltage_bounds: match self.pmu_bounds {
                BoundsArg::Limited => PmuVoltageBounds::Limited,
                BoundsArg::Multipliers => PmuVoltageBounds::Multipliers,
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    meas: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    meas: PathBuf,
    /// A report written by `estimate`.
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    placement: PlacementArgs,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the RTU admittances in the deviation metrics.
    #[arg(long)]
    include_admittance: bool,
    /// Run the trials one after another.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    report: PathBuf,
}

/// Why a command stopped; each maps to one exit code.
#[derive(Debug)]
enum Failure {
    Input(String),
    NotConverged(String),
    Singular(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::NotConverged(_) => 3,
            Self::Singular(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Input(m) | Self::NotConverged(m) | Self::Singular(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Singular(_) | Error::Unobservable(_) => Self::Singular(msg),
            Error::PowerFlowDiverged { .. } => Self::NotConverged(msg),
            _ => Self::Input(msg),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn load_case(path: &Path) -> Result<CaseNetwork, Failure> {
    Ok(parse_matpower(&read(path)?)?)
}

fn load_measurements(path: &Path) -> Result<MeasurementSet, Failure> {
    Ok(parse_measurements(&read(path)?)?)
}

fn parse_profile(s: &str) -> Result<NoiseProfile, String> {
    match s {
        "table3" => return Ok(NoiseProfile::TABLE3),
        "zero" => return Ok(NoiseProfile::ZERO),
        _ => {}
    }
    let body = s
        .strip_prefix("custom:")
        .ok_or_else(|| format!("unknown profile `{s}`; expected table3, zero or custom:..."))?;
    let mut p = NoiseProfile::TABLE3;
    for item in body.split(',').filter(|i| !i.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| format!("profile entry `{item}` is not key=value"))?;
        let value: f64 = value
            .parse()
            .map_err(|e| format!("profile entry `{item}`: {e}"))?;
        let slot = match key {
            "rtu_i" => &mut p.rtu_current_std,
            "rtu_v" => &mut p.rtu_voltage_std,
            "rtu_pf" => &mut p.rtu_pf_std,
            "pmu_i" => &mut p.pmu_current_std,
            "pmu_v" => &mut p.pmu_voltage_std,
            _ => return Err(format!("unknown profile key `{key}`")),
        };
        *slot = value;
    }
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn placement(net: &CaseNetwork, args: &PlacementArgs, seed: u64) -> Result<Placement, Failure> {
    let n = net.buses.len();
    let p = if let Some(buses) = &args.pmu_buses {
        Placement::with_pmus(net, buses.iter().copied().collect::<BTreeSet<_>>(), seed)
    } else {
        let count = match (args.pmu_count, args.pmu_frac) {
            (Some(c), _) => c,
            (None, Some(f)) if (0.0..=1.0).contains(&f) => ((f * n as f64).round() as usize).max(1),
            (None, Some(f)) => {
                return Err(Failure::Input(format!(
                    "--pmu-frac must lie in [0, 1], got {f}"
                )))
            }
            (None, None) => ((0.1 * n as f64).round() as usize).max(1),
        };
        Placement::by_degree(net, count, seed)
    };
    p.validate(net)?;
    p.check_rtu_fraction(net, args.rtu_frac)?;
    Ok(p)
}

fn synth(args: &SynthArgs) -> CmdResult {
    let net = load_case(&args.case)?;
    let pl = placement(&net, &args.placement, args.seed)?;
    let truth = solve_powerflow(&net, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    eprintln!(
        "power flow converged in {} iterations (mismatch {:.2e})",
        truth.iterations, truth.mismatch
    );
    let (np, nr, nz) = pl.coverage(&net);
    eprintln!("placement: {np} PMU, {nr} RTU, {nz} zero-injection buses");
    let opts = SynthOptions {
        g_pmu: args.placement.gpmu,
        stream: args.stream,
        ..SynthOptions::default()
    };
    let ms = synthesize_measurements(&net, &truth, &pl, &args.placement.profile, &opts)?;
    write(&args.out, &write_measurements(&ms))
}

fn estimate(args: &EstimateArgs) -> CmdResult {
    let net = load_case(&args.case)?;
    let ms = load_measurements(&args.meas)?;
    let config = args.solver.config();
    let y = build_bus_admittance(&net)?;
    let est = estimate_with_admittance(&y, &ms, &config)?;
    let r = &est.report;
    eprintln!(
        "{:?} after {} iterations: residual {:.2e}, epsilon {:.2e}, objective {:.6e}, {:.4} s",
        r.status, r.iterations, r.kkt_residual_inf, r.epsilon_final, r.objective_final, r.runtime_s
    );

    // deviations are taken against the power flow of the case, when it solves
    let m = match solve_powerflow(&net, DEFAULT_TOL, DEFAULT_MAX_ITER) {
        Ok(truth) => {
            let rtu: Vec<usize> = ms.rtu.iter().map(|m| y.bus_index[&m.bus]).collect();
            Some(metrics(
                &est.primal,
                &truth,
                &rtu,
                MetricScope::default(),
                r.runtime_s,
            )?)
        }
        Err(e) => {
            eprintln!("no reference state: {e}");
            None
        }
    };
    let sosc = if r.status == Status::Converged {
        let prob = Problem::new(&y, &ms, config.pmu_voltage_bounds)?;
        let x = prob.pack(&est.primal)?;
        let mut lam = prob.pack_dual(&est.dual)?;
        let mu = lam.split_off(2 * prob.layout.n);
        let v = check_sosc(
            &prob,
            &x,
            &lam,
            &mu,
            ACTIVITY_THRESHOLD,
            ecp_se::sosc::DEFAULT_TOL,
        )?;
        eprintln!(
            "second-order check: {:?} (min projected eigenvalue {:?})",
            v.status, v.min_projected_eig
        );
        Some(v)
    } else {
        None
    };
    let report = Report::new(
        &est,
        &y.bus_ids,
        &ms,
        m.as_ref(),
        sosc,
        config.pmu_voltage_bounds,
    );
    write(&args.report, &write_report(&report))?;
    match r.status {
        Status::Converged => Ok(()),
        Status::MaxIter => Err(Failure::NotConverged(format!(
            "no convergence in {} iterations (residual {:.2e})",
            r.iterations, r.kkt_residual_inf
        ))),
        Status::Singular => Err(Failure::Singular("Newton system became singular".into())),
    }
}

fn verify(args: &VerifyArgs) -> CmdResult {
    let net = load_case(&args.case)?;
    let ms = load_measurements(&args.meas)?;
    let report = parse_report(&read(&args.state)?)?;
    let y = build_bus_admittance(&net)?;
    if report.state.bus_ids != y.bus_ids {
        return Err(Failure::Input(
            "state bus order does not match the case".into(),
        ));
    }
    let prob = Problem::new(&y, &ms, report.pmu_voltage_bounds)?;
    let primal = report.state.to_primal(&ms)?;
    let tol = Tolerances {
        kkt: args.tol,
        ..Tolerances::default()
    };
    let c = certify(&prob, &primal, &report.dual, &tol)?;
    eprintln!(
        "stationarity {:.2e}, kcl {:.2e}, complementarity {:.2e}, bound violation {:.2e}, dual violation {:.2e}, epsilon {:.2e}",
        c.stationarity_inf, c.kcl_inf, c.complementarity_inf, c.bound_violation, c.dual_violation, c.epsilon
    );
    eprintln!(
        "second-order check: {:?} (min projected eigenvalue {:?})",
        c.sosc.status, c.sosc.min_projected_eig
    );
    if c.passed {
        eprintln!("certificate holds");
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "certificate fails: worst residual {:.2e}, second-order {:?}",
            c.worst_residual(),
            c.sosc.status
        )))
    }
}

fn bench(args: &BenchArgs) -> CmdResult {
    let net = load_case(&args.case)?;
    let pl = placement(&net, &args.placement, args.seed)?;
    let opts = BenchOptions {
        trials: args.trials,
        seed: args.seed,
        g_pmu: args.placement.gpmu,
        scope: MetricScope {
            include_admittance: args.include_admittance,
        },
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        ..BenchOptions::default()
    };
    let s = benchmark(
        &net,
        &pl,
        &args.placement.profile,
        &args.solver.config(),
        &opts,
    )?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
    eprintln!(
        "{} trials, {} failures: mean sigma_ss {}, mean sigma_max {}, mean runtime {} s",
        s.trials,
        s.failures,
        fmt(s.mean_sigma_ss),
        fmt(s.mean_sigma_max),
        fmt(s.mean_runtime_s)
    );
    write(&args.report, &write_bench_report(&s))?;
    if s.failures > 0 {
        return Err(Failure::NotConverged(format!(
            "{} of {} trials failed",
            s.failures, s.trials
        )));
    }
    Ok(())
}

fn configure_threads() -> CmdResult {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Failure::Input(format!(
            "{THREADS_VAR} must be a positive integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Input(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Estimate(a) => estimate(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use medforest::kit::{self, RandomKind};
use medforest::metric::consistency_check;
use medforest::oracle::{self, OracleObjective};
use medforest::pipeline::{self, Mode, SolveParams, SolveResult};
use medforest::search::{self, Objective};
use medforest::{DepotSet, Error, Instance, Parallelism, Which};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_GUARD: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "medforest", version, about = "k-median-forest depot selection and capacitated routing")]
struct Cli {
    /// Worker threads for data-parallel scans (default: all cores).
    #[arg(long, global = true, env = "MEDFOREST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose depots (and routes) for an instance.
    Solve(SolveArgs),
    /// Exhaustive optimum over all k-subsets.
    Oracle(OracleArgs),
    /// Re-check a solve result against its instance.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        result: PathBuf,
    },
    /// Write a generated instance.
    Gen(GenArgs),
    /// Locality-gap construction: local optimum `w` times worse than the optimum.
    GapDemo {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 100.0)]
        w: f64,
        #[arg(long = "M", default_value_t = 1e6)]
        m: f64,
        #[arg(long, default_value_t = 3)]
        t: usize,
    },
    /// Convert a TSPLIB CVRP file to the native JSON format.
    ImportTsplib {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Depot budget (default: VEHICLES, a `-kN` name suffix, or 1).
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeMetric {
    D,
    C,
}

impl From<TreeMetric> for Which {
    fn from(m: TreeMetric) -> Self {
        match m {
            TreeMetric::D => Which::D,
            TreeMetric::C => Which::C,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Locvrp,
    Kmf,
    Kmedian,
    Ktree,
    Bicriteria,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, default_value_t = 2)]
    t: usize,
    #[arg(long, default_value_t = 1e-7)]
    delta: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tree weight for kmf (default: the instance's `rho` annotation, else Q/2).
    #[arg(long)]
    rho: Option<f64>,
    /// Metric of the tree term for kmf and ktree (default: annotation, else d).
    #[arg(long, value_enum)]
    tree_metric: Option<TreeMetric>,
    /// Override the instance's depot budget.
    #[arg(long)]
    k: Option<usize>,
    /// Hard cap on accepted moves per restart.
    #[arg(long)]
    max_iters: Option<u64>,
    /// Write the winning restart's accepted moves as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Median,
    Ktree,
    Kmf,
    /// `max{Flow, Tree}`, the k-LocVRP lower bound.
    Bound,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    objective: OracleKind,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum)]
    tree_metric: Option<TreeMetric>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Appendix,
    Gap,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum RandomMetric {
    Euclidean,
    ShortestPath,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 10)]
    ell: u32,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 100.0)]
    w: f64,
    #[arg(long = "M", default_value_t = 1e6)]
    m: f64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: RandomMetric,
    /// Vehicle capacity to attach (random instances already carry one).
    #[arg(long = "Q")]
    capacity: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A command failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::UnsupportedEdgeWeightType(_) => EXIT_IO,
            Error::Guard { .. } => EXIT_GUARD,
            Error::BoundViolated { .. } => EXIT_VERIFY,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(Error::from)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load(path: &Path) -> Result<Instance, Failure> {
    kit::read_instance(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn tree_metric(inst: &Instance, flag: Option<TreeMetric>) -> Which {
    match flag {
        Some(m) => m.into(),
        None => match inst.annotations().get("tree_metric").and_then(|v| v.as_str()) {
            Some("c") => Which::C,
            _ => Which::D,
        },
    }
}

fn rho(inst: &Instance, flag: Option<f64>) -> Result<f64, Failure> {
    flag.or_else(|| inst.annotation_f64("rho"))
        .or_else(|| inst.capacity().map(|q| q / 2.0))
        .ok_or_else(|| usage("--rho is required: the instance has neither a rho annotation nor Q"))
}

fn with_budget(inst: Instance, k: Option<usize>) -> Result<Instance, Failure> {
    match k {
        Some(k) if k == 0 || k > inst.n() => Err(usage(format!("--k {k} outside 1..={}", inst.n()))),
        Some(k) => Ok(inst.with_k(k)),
        None => Ok(inst),
    }
}

fn parallelism(threads: Option<usize>) -> Parallelism {
    if threads == Some(1) {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

fn solve(args: SolveArgs, policy: Parallelism) -> CmdResult {
    let inst = with_budget(load(&args.instance)?, args.k)?;
    let params = SolveParams {
        t: args.t,
        delta: args.delta,
        restarts: args.restarts,
        seed: args.seed,
        max_iters: args.max_iters,
        parallelism: policy,
    };
    let (mode, obj) = match args.mode {
        ModeArg::Locvrp => (Mode::Locvrp, Objective::k_median()),
        ModeArg::Bicriteria => (Mode::Bicriteria, Objective::k_median()),
        ModeArg::Kmedian => (Mode::Kmedian, Objective::k_median()),
        ModeArg::Kmf => (
            Mode::Kmf,
            Objective::new(rho(&inst, args.rho)?, tree_metric(&inst, args.tree_metric)),
        ),
        ModeArg::Ktree => (
            Mode::Ktree,
            Objective::new(args.rho.unwrap_or(1.0), tree_metric(&inst, args.tree_metric)),
        ),
    };
    let mut result: SolveResult = pipeline::solve(&inst, mode, &obj, &params)?;
    if let (Some(path), Some(trace)) = (&args.trace, &result.trace) {
        let file = fs::File::create(path).map_err(Error::from)?;
        trace.write_jsonl(std::io::BufWriter::new(file))?;
        result.trace_file = Some(path.display().to_string());
    }
    emit(&result, args.out.as_deref())?;
    let labels: Vec<String> = result.depots.members().iter().map(|&v| inst.label(v)).collect();
    eprintln!("depots [{}], phi {}", labels.join(", "), result.report.phi);
    if let Some(plan) = &result.plan {
        eprint!("{} trips, cost {}", plan.trips.len(), plan.total_cost);
        match result.ratio {
            Some(r) => eprintln!(", lower bound {}, ratio {r:.6}", result.lb.unwrap_or(0.0)),
            None => eprintln!(),
        }
    }
    Ok(())
}

fn run_oracle(args: OracleArgs, policy: Parallelism) -> CmdResult {
    let inst = with_budget(load(&args.instance)?, args.k)?;
    let objective = match args.objective {
        OracleKind::Median => OracleObjective::Median,
        OracleKind::Ktree => OracleObjective::Ktree {
            metric: tree_metric(&inst, args.tree_metric),
        },
        OracleKind::Kmf => OracleObjective::Kmf(Objective::new(
            rho(&inst, args.rho)?,
            tree_metric(&inst, args.tree_metric),
        )),
        OracleKind::Bound => OracleObjective::FlowTreeBound,
    };
    let result = oracle::brute_subset_opt(&inst, inst.k(), &objective, policy)?;
    emit(&result, args.out.as_deref())?;
    eprintln!(
        "opt {} over {} subsets, {} argmin(s)",
        result.opt_value,
        result.subsets_scanned,
        result.argmins.len()
    );
    Ok(())
}

fn verify(instance: &Path, result: &Path, policy: Parallelism) -> CmdResult {
    let inst = load(instance)?;
    let text = fs::read_to_string(result).map_err(Error::from)?;
    let parsed: SolveResult = serde_json::from_str(&text).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", result.display()),
    })?;
    let report = pipeline::verify_result(&inst, &parsed, policy)?;
    emit(&report, None)?;
    match (report.total_cost, report.lb, report.ratio) {
        (Some(cost), Some(lb), Some(r)) => eprintln!("cost {cost}, lower bound {lb}, ratio {r:.6}"),
        (Some(cost), _, _) => eprintln!("cost {cost}"),
        _ => {}
    }
    if report.passed {
        eprintln!("verify: ok");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("verify: {} issue(s)", report.issues.len()),
        })
    }
}

fn generate(args: GenArgs) -> CmdResult {
    let mut inst = match args.kind {
        GenKind::Appendix => kit::gen_appendix(args.ell)?,
        GenKind::Gap => kit::gen_gap(args.k, args.w, args.m)?,
        GenKind::Random => {
            let kind = match args.metric {
                RandomMetric::Euclidean => RandomKind::Euclidean,
                RandomMetric::ShortestPath => RandomKind::ShortestPathCompletion,
            };
            kit::gen_random(args.n, args.k, args.seed, kind)?
        }
    };
    if let Some(q) = args.capacity {
        if q.is_nan() || q <= 0.0 {
            return Err(usage(format!("--Q {q} must be positive")));
        }
        inst = inst.with_capacity(q);
    }
    let json = kit::instance_to_json(&inst)?;
    match &args.out {
        Some(path) => fs::write(path, json).map_err(Error::from)?,
        None => print!("{json}"),
    }
    eprintln!("generated n = {}, k = {}", inst.n(), inst.k());
    Ok(())
}

#[derive(Serialize)]
struct GapReport {
    k: usize,
    w: f64,
    #[serde(rename = "M")]
    m: f64,
    t: usize,
    phi_local: f64,
    phi_opt: f64,
    phi_s_star: f64,
    ratio: f64,
    local_is_local_opt: bool,
    moves_checked: u128,
    s_star_is_optimal: bool,
    consistent: bool,
    witness: Option<medforest::metric::ConsistencyWitness>,
    local: Vec<String>,
    s_star: Vec<String>,
}

fn gap_demo(k: usize, w: f64, m: f64, t: usize, policy: Parallelism) -> CmdResult {
    let inst = kit::gen_gap(k, w, m)?;
    let obj = Objective::new(1.0, Which::C);
    let local = DepotSet::new((0..k).map(|i| 2 * i + 1).collect(), inst.n())?;
    let s_star = DepotSet::new((0..k).map(|i| 2 * i).collect(), inst.n())?;
    let check = search::is_local_opt(&inst, &obj, &local, t, policy)?;
    let phi_s_star = search::phi(&inst, &obj, &s_star)?;
    let opt = oracle::brute_subset_opt(&inst, k, &OracleObjective::Kmf(obj), policy)?;
    let witness = consistency_check(&inst)?;
    let names = |s: &DepotSet| s.members().iter().map(|&v| inst.label(v)).collect::<Vec<_>>();
    let ratio = check.phi / opt.opt_value;
    let report = GapReport {
        k,
        w,
        m,
        t,
        phi_local: check.phi,
        phi_opt: opt.opt_value,
        phi_s_star,
        ratio,
        local_is_local_opt: check.is_local_opt,
        moves_checked: check.moves_checked,
        s_star_is_optimal: opt.argmins.contains(&s_star),
        consistent: witness.is_none(),
        witness,
        local: names(&local),
        s_star: names(&s_star),
    };
    emit(&report, None)?;
    eprintln!(
        "phi(L) = {}, phi(S*) = {}, ratio {}, L local optimum for t <= {t}: {}",
        report.phi_local, report.phi_s_star, ratio, report.local_is_local_opt
    );
    let ratio_ok = (ratio - w).abs() <= 1e-9 * w.max(1.0);
    if ratio_ok && report.local_is_local_opt && report.s_star_is_optimal {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: "gap not reproduced".into(),
        })
    }
}

fn import(input: &Path, out: Option<&Path>, k: Option<usize>) -> CmdResult {
    let inst = with_budget(kit::import_tsplib_cvrp(input)?, k)?;
    let json = kit::instance_to_json(&inst)?;
    match out {
        Some(path) => fs::write(path, json).map_err(Error::from)?,
        None => print!("{json}"),
    }
    eprintln!("imported n = {}, k = {}, Q = {}", inst.n(), inst.k(), inst.capacity().unwrap_or(0.0));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let policy = parallelism(cli.threads);
    let outcome = match cli.command {
        Command::Solve(args) => solve(args, policy),
        Command::Oracle(args) => run_oracle(args, policy),
        Command::Verify { instance, result } => verify(&instance, &result, policy),
        Command::Gen(args) => generate(args),
        Command::GapDemo { k, w, m, t } => gap_demo(k, w, m, t, policy),
        Command::ImportTsplib { input, out, k } => import(&input, out.as_deref(), k),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

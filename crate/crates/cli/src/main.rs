//! Command-line experiments: simulation, analysis, transformation, and
//! concentration checks over erasure-network topology files, with
//! reproducible seeding and machine-readable output.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use erasure_delay::analytics::{coding_recursion, line_delay_bounds, SuccessDistribution};
use erasure_delay::concentration::{
    concentration_bounds, empirical_exceedance, ConcentrationParams,
};
use erasure_delay::engine::{
    completion_samples, monte_carlo, summarize, DelayEstimate, ErasureTrace, Strategy,
};
use erasure_delay::negbinmax::{
    growth_exponent_fit, negbin_max_closed, negbin_max_closed_rational, negbin_max_recursion,
    negbin_max_recursion_rational, NegBinMaxParams,
};
use erasure_delay::rational::{format_sig, rational_from_f64, rational_to_f64};
use erasure_delay::rng::stable_key;
use erasure_delay::topology::{min_cut_capacity, Topology};
use erasure_delay::transform::{build_ghat, decompose_max_flow_with};

const WORKERS_ENV: &str = "ERASURE_DELAY_WORKERS";

#[derive(Parser)]
#[command(
    name = "erasure-delay",
    version,
    about = "Block delay of coding vs. routing over erasure networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo delay estimate for one strategy (or both).
    Simulate(SimulateArgs),
    /// Paired coding/routing estimates across a list of block sizes.
    Compare(SweepArgs),
    /// Compare plus growth-exponent fits of both delay functions.
    Sweep(SweepArgs),
    /// Capacity, delay bound, and parallel-links recursion for a topology.
    Analyze(AnalyzeArgs),
    /// Expected maximum of two negative binomials, both routes.
    Negbinmax(NegbinmaxArgs),
    /// Max-flow decomposition and the correlated parallel-path rebuild.
    Transform(TransformArgs),
    /// Concentration window, bound, and empirical exceedance.
    Concentration(ConcentrationArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    CodingQueue,
    CodingMaxflow,
    Routing,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SimulateArgs {
    /// Topology JSON file.
    #[arg(long)]
    topology: PathBuf,
    /// Block size (number of packets).
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StrategyArg::CodingQueue)]
    strategy: StrategyArg,
    /// Write per-trial outcomes (trial, strategy, n, completion_slot) as CSV.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Dump trial 0's erasure trace (slot, link, success) as CSV.
    #[arg(long)]
    dump_trace: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Comma-separated strictly increasing block sizes, e.g. 5,20,80.
    #[arg(long)]
    n: String,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Horizon for the recursion values E[T_hat_n], n = 1..horizon.
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NegbinmaxArgs {
    #[arg(long)]
    i: u64,
    #[arg(long)]
    j: u64,
    #[arg(long)]
    q1: f64,
    #[arg(long)]
    q2: f64,
    /// Evaluate both routes in exact rational arithmetic (i + j <= 40).
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Where to write the constructed parallel-path topology.
    #[arg(long)]
    emit: PathBuf,
    /// Assert min-cut uniqueness on graphs too large to check exhaustively.
    #[arg(long)]
    assume_single_bottleneck: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConcentrationArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long, default_value_t = 0.25)]
    delta_prime: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<erasure_delay::Error> for CliError {
    fn from(err: erasure_delay::Error) -> Self {
        match err {
            erasure_delay::Error::HorizonExhausted(_) => CliError::Runtime(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: config: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: runtime: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Compare(args) => compare(args, false),
        Command::Sweep(args) => compare(args, true),
        Command::Analyze(args) => analyze(args),
        Command::Negbinmax(args) => negbinmax(args),
        Command::Transform(args) => transform(args),
        Command::Concentration(args) => concentration(args),
    }
}

fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1)
}

fn load_topology(path: &PathBuf) -> Result<(Topology, String), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let topology = Topology::from_json_str(&text)?;
    Ok((topology, text))
}

/// Stable hash of the full experiment configuration, stamped into every
/// output for reproducibility.
fn config_hash(parts: &[(&str, String)]) -> String {
    let mut canonical = String::new();
    for (key, value) in parts {
        let _ = write!(canonical, "{key}={value};");
    }
    format!("{:016x}", stable_key(&canonical))
}

/// A float rounded to 12 significant digits, as a JSON number.
fn num12(x: f64) -> Value {
    let rounded: f64 = format_sig(x, 12).parse().unwrap_or(x);
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn estimate_json(est: &DelayEstimate) -> Value {
    json!({
        "strategy": est.strategy.label(),
        "n": est.n,
        "trials": est.trials,
        "mean": num12(est.mean),
        "variance": num12(est.variance),
        "ci_halfwidth": num12(est.ci_halfwidth),
        "capacity": num12(est.capacity),
        "capacity_term": num12(est.capacity_term),
        "delay_function": num12(est.delay_function),
    })
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (topology, topo_text) = load_topology(&args.topology)?;
    let strategies: Vec<Strategy> = match args.strategy {
        StrategyArg::CodingQueue => vec![Strategy::CodingQueue],
        StrategyArg::CodingMaxflow => vec![Strategy::CodingMaxflow],
        StrategyArg::Routing => vec![Strategy::Routing],
        StrategyArg::Both => vec![Strategy::CodingQueue, Strategy::Routing],
    };
    let hash = config_hash(&[
        ("cmd", "simulate".into()),
        ("topology", format!("{:016x}", stable_key(&topo_text))),
        ("n", args.n.to_string()),
        ("trials", args.trials.to_string()),
        ("seed", args.seed.to_string()),
        ("strategy", strategies.iter().map(|s| s.label()).collect::<Vec<_>>().join("+")),
    ]);

    let capacity = min_cut_capacity(&topology).capacity_f64;
    let mut estimates = Vec::new();
    let mut outcome_rows = String::from("trial,strategy,n,completion_slot\n");
    for &strategy in &strategies {
        let samples =
            completion_samples(&topology, args.n, strategy, args.trials, args.seed, workers())?;
        if args.outcomes.is_some() {
            for (trial, slot) in samples.iter().enumerate() {
                let _ = writeln!(outcome_rows, "{trial},{},{},{slot}", strategy.label(), args.n);
            }
        }
        estimates.push(summarize(&samples, strategy, args.n, args.seed, capacity));
    }
    if let Some(path) = &args.outcomes {
        fs::write(path, &outcome_rows)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &args.dump_trace {
        let horizon = (4 * estimates[0].mean.ceil() as u64).max(16);
        let trace = ErasureTrace::generate(&topology, horizon, args.seed, 0);
        let mut rows = String::from("slot,link,success\n");
        for slot in 0..trace.horizon() {
            for (li, link) in topology.links().iter().enumerate() {
                let _ =
                    writeln!(rows, "{},{},{}", slot + 1, link.id, u8::from(trace.success(slot, li)));
            }
        }
        fs::write(path, rows)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }

    let mut doc = json!({
        "command": "simulate",
        "topology": args.topology.display().to_string(),
        "master_seed": args.seed,
        "config_hash": hash,
    });
    if estimates.len() == 1 {
        merge(&mut doc, estimate_json(&estimates[0]));
    } else {
        doc["coding"] = estimate_json(&estimates[0]);
        doc["routing"] = estimate_json(&estimates[1]);
    }
    emit(&args.out, serde_json::to_string_pretty(&doc).expect("serializable"))
}

fn merge(doc: &mut Value, extra: Value) {
    if let (Value::Object(base), Value::Object(more)) = (doc, extra) {
        for (k, v) in more {
            base.insert(k, v);
        }
    }
}

fn parse_n_list(text: &str) -> Result<Vec<u64>, CliError> {
    let ns: Vec<u64> = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("bad block size '{part}'")))
        })
        .collect::<Result<_, _>>()?;
    if ns.is_empty() {
        return Err(CliError::Config("empty block-size list".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("block sizes must be strictly increasing".into()));
    }
    Ok(ns)
}

struct CompareRow {
    n: u64,
    coding: DelayEstimate,
    routing: DelayEstimate,
}

fn compare(args: SweepArgs, with_fit: bool) -> Result<(), CliError> {
    let (topology, topo_text) = load_topology(&args.topology)?;
    let ns = parse_n_list(&args.n)?;
    let hash = config_hash(&[
        ("cmd", if with_fit { "sweep".into() } else { "compare".into() }),
        ("topology", format!("{:016x}", stable_key(&topo_text))),
        ("n", args.n.clone()),
        ("trials", args.trials.to_string()),
        ("seed", args.seed.to_string()),
    ]);

    let mut rows = Vec::new();
    for &n in &ns {
        let coding =
            monte_carlo(&topology, n, Strategy::CodingQueue, args.trials, args.seed, workers())?;
        let routing =
            monte_carlo(&topology, n, Strategy::Routing, args.trials, args.seed, workers())?;
        rows.push(CompareRow { n, coding, routing });
    }

    let fit = if with_fit {
        let fit_for = |values: Vec<f64>| -> Option<f64> {
            if values.iter().all(|&d| d > 0.0) {
                growth_exponent_fit(&ns, &values).ok()
            } else {
                None
            }
        };
        Some((
            fit_for(rows.iter().map(|r| r.coding.delay_function).collect()),
            fit_for(rows.iter().map(|r| r.routing.delay_function).collect()),
        ))
    } else {
        None
    };

    let text = match args.format {
        Format::Csv => {
            let mut out = String::new();
            let fit_header = if with_fit { ",coding_fit_slope,routing_fit_slope" } else { "" };
            let _ = writeln!(
                out,
                "n,capacity_term,coding_mean,coding_ci,routing_mean,routing_ci,delay_coding,delay_routing,master_seed,config_hash{fit_header}"
            );
            for row in &rows {
                let mut line = format!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    row.n,
                    format_sig(row.coding.capacity_term, 12),
                    format_sig(row.coding.mean, 12),
                    format_sig(row.coding.ci_halfwidth, 12),
                    format_sig(row.routing.mean, 12),
                    format_sig(row.routing.ci_halfwidth, 12),
                    format_sig(row.coding.delay_function, 12),
                    format_sig(row.routing.delay_function, 12),
                    args.seed,
                    hash,
                );
                if let Some((c, r)) = &fit {
                    let fmt = |s: &Option<f64>| s.map_or("na".to_string(), |v| format_sig(v, 12));
                    let _ = write!(line, ",{},{}", fmt(c), fmt(r));
                }
                let _ = writeln!(out, "{line}");
            }
            out
        }
        Format::Json => {
            let mut doc = json!({
                "command": if with_fit { "sweep" } else { "compare" },
                "topology": args.topology.display().to_string(),
                "master_seed": args.seed,
                "config_hash": hash,
                "rows": rows.iter().map(|row| json!({
                    "n": row.n,
                    "capacity_term": num12(row.coding.capacity_term),
                    "coding": estimate_json(&row.coding),
                    "routing": estimate_json(&row.routing),
                })).collect::<Vec<_>>(),
            });
            if let Some((c, r)) = &fit {
                doc["fit"] = json!({
                    "coding_slope": c.map_or(Value::Null, num12),
                    "routing_slope": r.map_or(Value::Null, num12),
                });
            }
            serde_json::to_string_pretty(&doc).expect("serializable")
        }
    };
    emit(&args.out, text)
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let (topology, topo_text) = load_topology(&args.topology)?;
    let report = min_cut_capacity(&topology);
    let hash = config_hash(&[
        ("cmd", "analyze".into()),
        ("topology", format!("{:016x}", stable_key(&topo_text))),
        ("horizon", args.horizon.to_string()),
    ]);

    let mut doc = json!({
        "command": "analyze",
        "topology": args.topology.display().to_string(),
        "kind": topology.kind().name(),
        "capacity": num12(report.capacity_f64),
        "config_hash": hash,
        "master_seed": Value::Null,
    });
    doc["paths"] = report
        .per_path
        .iter()
        .map(|w| {
            json!({
                "path": w.path,
                "worst_p": num12(w.worst_p),
                "worst_multiplicity": w.multiplicity,
            })
        })
        .collect::<Vec<_>>()
        .into();

    if let Some(worst) = topology.path_worst_p() {
        if worst.len() == 1 {
            let hops: Vec<f64> = topology.paths().unwrap()[0]
                .links
                .iter()
                .map(|&l| topology.link_p_f64(l))
                .collect();
            let bounds = line_delay_bounds(&hops)?;
            doc["unique_worst"] = bounds.unique_worst.into();
            doc["d_bar"] = bounds.d_bar.map_or(Value::Null, num12);
            doc["steady_state_limit"] = bounds.steady_state_limit.map_or(Value::Null, num12);
        }
        // Parallel-links recursion over the worst link of each path.
        let a = SuccessDistribution::from_independent(&worst)?;
        let solution = coding_recursion(&a, args.horizon)?;
        doc["recursion_values"] =
            solution.values.iter().map(|&v| num12(v)).collect::<Vec<_>>().into();
        doc["linear_coefficient"] = num12(solution.linear_coefficient);
        doc["roots"] = solution
            .roots
            .iter()
            .map(|r| json!({"re": num12(r.re), "im": num12(r.im)}))
            .collect::<Vec<_>>()
            .into();
    } else {
        doc["recursion_values"] = Value::Null;
        doc["roots"] = Value::Null;
    }
    emit(&args.out, serde_json::to_string_pretty(&doc).expect("serializable"))
}

fn negbinmax(args: NegbinmaxArgs) -> Result<(), CliError> {
    let hash = config_hash(&[
        ("cmd", "negbinmax".into()),
        ("i", args.i.to_string()),
        ("j", args.j.to_string()),
        ("q1", args.q1.to_string()),
        ("q2", args.q2.to_string()),
        ("exact", args.exact.to_string()),
    ]);
    let (closed, recursion, exact_equal) = if args.exact {
        if args.i + args.j > 40 {
            return Err(CliError::Config(
                "exact mode supports i + j <= 40; use the float route beyond".into(),
            ));
        }
        let q1 =
            rational_from_f64(args.q1).ok_or_else(|| CliError::Config("q1 is not finite".into()))?;
        let q2 =
            rational_from_f64(args.q2).ok_or_else(|| CliError::Config("q2 is not finite".into()))?;
        let closed = negbin_max_closed_rational(args.i, args.j, &q1, &q2)?;
        let recursion = negbin_max_recursion_rational(args.i, args.j, &q1, &q2)?;
        let equal = closed == recursion;
        (rational_to_f64(&closed), rational_to_f64(&recursion), Some(equal))
    } else {
        let closed = if args.q1 == 0.0 || args.q2 == 0.0 {
            negbin_max_recursion(args.i, args.j, args.q1, args.q2)?
        } else {
            negbin_max_closed(&NegBinMaxParams::new(args.i, args.j, args.q1, args.q2)?)?
        };
        let recursion = negbin_max_recursion(args.i, args.j, args.q1, args.q2)?;
        (closed, recursion, None)
    };
    let doc = json!({
        "command": "negbinmax",
        "i": args.i,
        "j": args.j,
        "q1": num12(args.q1),
        "q2": num12(args.q2),
        "mode": if args.exact { "rational" } else { "float" },
        "closed_form": num12(closed),
        "recursion": num12(recursion),
        "abs_difference": num12((closed - recursion).abs()),
        "rel_difference": num12(((closed - recursion) / recursion.max(1e-300)).abs()),
        "exact_equal": exact_equal.map_or(Value::Null, Value::Bool),
        "config_hash": hash,
        "master_seed": Value::Null,
    });
    emit(&args.out, serde_json::to_string_pretty(&doc).expect("serializable"))
}

fn transform(args: TransformArgs) -> Result<(), CliError> {
    let (topology, topo_text) = load_topology(&args.topology)?;
    let assume = args.assume_single_bottleneck.then_some(true);
    let decomposition = decompose_max_flow_with(&topology, assume)?;
    let ghat = build_ghat(&topology, &decomposition)?;
    let hash = config_hash(&[
        ("cmd", "transform".into()),
        ("topology", format!("{:016x}", stable_key(&topo_text))),
    ]);
    let ghat_json = serde_json::to_string_pretty(&ghat.to_json_value()).expect("serializable");
    fs::write(&args.emit, ghat_json)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", args.emit.display())))?;

    let doc = json!({
        "command": "transform",
        "topology": args.topology.display().to_string(),
        "emitted": args.emit.display().to_string(),
        "capacity": num12(rational_to_f64(&decomposition.capacity)),
        "single_bottleneck": decomposition.single_bottleneck,
        "refined": decomposition.refined,
        "flows": decomposition.flows.iter().map(|f| json!({
            "rate": num12(rational_to_f64(&f.rate)),
            "path": f.nodes.iter().map(|&v| topology.node_id(v)).collect::<Vec<_>>(),
            "links": f.links.iter().map(|&l| topology.links()[l].id.clone()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "config_hash": hash,
        "master_seed": Value::Null,
    });
    emit(&args.out, serde_json::to_string_pretty(&doc).expect("serializable"))
}

fn concentration(args: ConcentrationArgs) -> Result<(), CliError> {
    let (topology, topo_text) = load_topology(&args.topology)?;
    let capacity = min_cut_capacity(&topology).capacity_f64;
    let params = ConcentrationParams::new(
        args.n,
        capacity,
        topology.links().len(),
        args.delta,
        args.delta_prime,
    )?;
    let window = concentration_bounds(&params)?;
    let samples = completion_samples(
        &topology,
        args.n,
        Strategy::CodingQueue,
        args.trials,
        args.seed,
        workers(),
    )?;
    let report = empirical_exceedance(&samples, &params)?;
    let hash = config_hash(&[
        ("cmd", "concentration".into()),
        ("topology", format!("{:016x}", stable_key(&topo_text))),
        ("n", args.n.to_string()),
        ("trials", args.trials.to_string()),
        ("seed", args.seed.to_string()),
        ("delta", args.delta.to_string()),
        ("delta_prime", args.delta_prime.to_string()),
    ]);
    let doc = json!({
        "command": "concentration",
        "topology": args.topology.display().to_string(),
        "n": args.n,
        "capacity": num12(capacity),
        "delta": num12(args.delta),
        "delta_prime": num12(args.delta_prime),
        "epsilon_n": num12(report.epsilon_n),
        "t_l": num12(window.t_lower),
        "t_u": num12(window.t_upper),
        "bound": num12(window.exceedance_bound),
        "empirical_fraction": num12(report.fraction_exceeding),
        "standard_error": num12(report.standard_error),
        "sample_mean": num12(report.sample_mean),
        "trials": args.trials,
        "pass": report.pass,
        "master_seed": args.seed,
        "config_hash": hash,
    });
    emit(&args.out, serde_json::to_string_pretty(&doc).expect("serializable"))
}

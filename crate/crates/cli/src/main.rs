use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use anonpoll::estimate::{confidence_intervals, pair_estimate, Interval};
use anonpoll::io::{read_counts_csv, read_json, write_counts_csv, write_json, write_power_csv, write_sd_csv, write_table_csv, PowerTable};
use anonpoll::power::{detectable_bias, per_sample_variance};
use anonpoll::simulate::{allocate, simulate_design, stream_rng};
use anonpoll::tables::{all_rows, format_sig, Metric};
use anonpoll::{
    build_balanced_list_design, build_pair_design, estimate_general, list_jeopardy, list_privacy, monte_carlo_study,
    optimal_allocation, pair_jeopardy, pair_privacy, power_curve, sd_curve, Allocation, DesignFile, Error,
    EstimateResult, Execution, JeopardyReport, Method, PowerSpec, Preferences, PrivacyReport, Protocol, Scenario,
    SimulationConfig,
};

#[derive(Parser)]
#[command(name = "anonpoll", version, about = "Anonymised multiple-choice polls: pair and list methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a design as JSON.
    Design(DesignArgs),
    /// Estimate shares and their covariance from response counts.
    Estimate(EstimateArgs),
    /// Entropy and jeopardy measures for one method.
    Privacy(PrivacyArgs),
    /// Power of detecting bias in a direct poll, as CSV `b,power_pair,power_list`.
    Power(PowerArgs),
    /// Standard deviation against sample size, as CSV `n,sd_method,sd_pair,sd_binomial`.
    Sdcurve(SdArgs),
    /// Simulate a survey (counts CSV) or a Monte Carlo study (JSON summary).
    Simulate(SimulateArgs),
    /// Entropy, jeopardy and variance tables for a scenario.
    Tables(TablesArgs),
}

#[derive(Args, Clone)]
struct Population {
    /// Built-in scenario: uniform10 or sweden2014.
    #[arg(long, default_value = "uniform10")]
    scenario: String,
    /// Explicit shares, comma separated; overrides the scenario's.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
}

impl Population {
    fn preferences(&self) -> anonpoll::Result<Preferences> {
        match &self.p {
            Some(p) => Preferences::from_probs(p.clone()),
            None => Ok(Scenario::builtin(&self.scenario)?.preferences),
        }
    }
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn writer(&self) -> anonpoll::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?)),
            None => Box::new(BufWriter::new(io::stdout())),
        })
    }
}

#[derive(Args)]
struct DesignArgs {
    /// `pair`, `balanced`, or a design JSON file.
    #[arg(long, default_value = "pair")]
    design: String,
    /// Number of parties; defaults to the scenario's.
    #[arg(long)]
    parties: Option<usize>,
    #[command(flatten)]
    population: Population,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value = "pair")]
    design: String,
    #[arg(long)]
    parties: Option<usize>,
    /// Counts CSV with header `block_label,k_index,count`.
    #[arg(long)]
    counts: PathBuf,
    /// Confidence level for the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    population: Population,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pair,
    List,
}

#[derive(Args)]
struct PrivacyArgs {
    #[command(flatten)]
    population: Population,
    #[arg(long, value_enum, default_value = "pair")]
    method: MethodArg,
    /// List design (`balanced` or a JSON file) for the list method.
    #[arg(long, default_value = "balanced")]
    design: String,
    /// Sensitive party, 1-based.
    #[arg(long, default_value_t = 1)]
    sensitive: usize,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    population: Population,
    /// Party under test, 1-based.
    #[arg(long, default_value_t = 1)]
    party: usize,
    /// Total sample size over both surveys.
    #[arg(long, default_value_t = 15_000)]
    n: u64,
    /// `optimal`, or the anonymised survey's size for both methods.
    #[arg(long, default_value = "optimal")]
    alloc: String,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Largest bias on the grid, in proportion units.
    #[arg(long, default_value_t = 0.06)]
    b_max: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    /// List design (`balanced` or a JSON file).
    #[arg(long, default_value = "balanced")]
    design: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SdArgs {
    #[command(flatten)]
    population: Population,
    #[arg(long, default_value_t = 1)]
    party: usize,
    /// Method for the `sd_method` column.
    #[arg(long, value_enum, default_value = "list")]
    method: MethodArg,
    #[arg(long, default_value = "balanced")]
    design: String,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,6000,8000,10000,12000,14000,16000,18000,20000")]
    ns: Vec<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "pair")]
    design: String,
    #[command(flatten)]
    population: Population,
    /// Respondents per survey, split evenly over the design's blocks by weight.
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, env = "ANONPOLL_SEED", default_value_t = 1)]
    seed: u64,
    /// With more than one replication, run a Monte Carlo study instead.
    #[arg(long, default_value_t = 1)]
    replications: u64,
    /// Run replications on one thread.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Entropy,
    Jeopardy,
    Variance,
    All,
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long, default_value = "sweden2014")]
    scenario: String,
    #[arg(long, value_enum, default_value = "all")]
    metric: MetricArg,
    /// Sensitive party, 1-based.
    #[arg(long, default_value_t = 1)]
    sensitive: usize,
    /// Rounded, aligned output instead of CSV.
    #[arg(long)]
    human: bool,
    #[command(flatten)]
    output: Output,
}

fn io_err(path: &std::path::Path, e: io::Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

fn write_err(e: io::Error) -> Error {
    Error::InvalidArgument(format!("write failed: {e}"))
}

fn party_index(one_based: usize, n: usize) -> anonpoll::Result<usize> {
    if one_based == 0 || one_based > n {
        return Err(Error::PartyOutOfRange {
            index: one_based,
            n_parties: n,
        });
    }
    Ok(one_based - 1)
}

fn resolve_protocol(setup: &str, n_parties: usize) -> anonpoll::Result<Protocol> {
    match setup {
        "pair" => build_pair_design(n_parties).map(Protocol::Pair),
        "balanced" => build_balanced_list_design(n_parties).map(Protocol::List),
        path => {
            let f = File::open(path).map_err(|e| io_err(path.as_ref(), e))?;
            let file: DesignFile = read_json(BufReader::new(f))?;
            file.into_protocol()
        }
    }
}

fn resolve_list(setup: &str, n_parties: usize) -> anonpoll::Result<anonpoll::ListDesign> {
    match resolve_protocol(setup, n_parties)? {
        Protocol::List(d) => Ok(d),
        Protocol::Pair(_) => Err(Error::InvalidArgument(format!("'{setup}' is not a list design"))),
    }
}

fn n_parties(explicit: Option<usize>, population: &Population) -> anonpoll::Result<usize> {
    match explicit {
        Some(n) => Ok(n),
        None => Ok(population.preferences()?.len()),
    }
}

fn cmd_design(args: DesignArgs) -> anonpoll::Result<()> {
    let n = n_parties(args.parties, &args.population)?;
    let protocol = resolve_protocol(&args.design, n)?;
    let labels = args
        .population
        .preferences()
        .ok()
        .filter(|p| p.len() == protocol.n_parties())
        .map(|p| p.labels().to_vec());
    write_json(args.output.writer()?, &DesignFile::from_protocol(&protocol, labels))
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    result: EstimateResult,
    level: f64,
    intervals: Vec<Interval>,
}

fn cmd_estimate(args: EstimateArgs) -> anonpoll::Result<()> {
    let n = n_parties(args.parties, &args.population)?;
    let protocol = resolve_protocol(&args.design, n)?;
    let f = File::open(&args.counts).map_err(|e| io_err(&args.counts, e))?;
    let counts = read_counts_csv(BufReader::new(f), protocol.design())?;
    let result = match &protocol {
        Protocol::Pair(d) => pair_estimate(d.n_parties(), &counts.blocks()[0])?,
        Protocol::List(d) => estimate_general(d.design(), &counts)?,
    };
    let intervals = confidence_intervals(&result, args.level)?;
    write_json(
        args.output.writer()?,
        &EstimateOutput {
            result,
            level: args.level,
            intervals,
        },
    )
}

#[derive(Serialize)]
struct PrivacyOutput {
    method: &'static str,
    privacy: PrivacyReport,
    jeopardy: JeopardyReport,
}

fn cmd_privacy(args: PrivacyArgs) -> anonpoll::Result<()> {
    let p = args.population.preferences()?;
    let s = party_index(args.sensitive, p.len())?;
    let out = match args.method {
        MethodArg::Pair => PrivacyOutput {
            method: "pair",
            privacy: pair_privacy(&p, Some(s))?,
            jeopardy: pair_jeopardy(&p, s)?,
        },
        MethodArg::List => {
            let d = resolve_list(&args.design, p.len())?;
            PrivacyOutput {
                method: "list",
                privacy: list_privacy(&p, &d, Some(s))?,
                jeopardy: list_jeopardy(&p, &d, s)?,
            }
        }
    };
    let mut w = args.output.writer()?;
    if args.json {
        return write_json(w, &out);
    }
    let label = &p.labels()[s];
    let rows = [
        ("H[T]", out.privacy.h_t),
        ("H[R]", out.privacy.h_r),
        ("I[T;R]", out.privacy.i_tr),
        ("H[T|R]", out.privacy.h_t_given_r),
        (
            "worst-case retained",
            out.privacy.worst_case_retained.as_ref().map_or(f64::NAN, |w| w.bits),
        ),
        ("max J", out.jeopardy.max_j),
        ("mean J", out.jeopardy.mean_j),
        ("KL jeopardy", out.jeopardy.kl_j),
    ];
    writeln!(w, "method {}, sensitive party {} ({label})", out.method, s + 1).map_err(write_err)?;
    for (name, v) in rows {
        writeln!(w, "{name:<22}{:>10}", format_sig(v, 3)).map_err(write_err)?;
    }
    if !out.jeopardy.infinite_responses.is_empty() {
        let labels: Vec<&str> = out
            .jeopardy
            .infinite_responses
            .iter()
            .map(|&r| out.jeopardy.response_labels[r].as_str())
            .collect();
        writeln!(w, "full disclosure on: {}", labels.join(" ")).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

fn cmd_power(args: PowerArgs) -> anonpoll::Result<()> {
    let p = args.population.preferences()?;
    let party = party_index(args.party, p.len())?;
    let list = resolve_list(&args.design, p.len())?;
    if args.points < 2 {
        return Err(Error::InvalidArgument("need at least two grid points".into()));
    }
    let b_max = args.b_max.min(p.get(party));
    let grid: Vec<f64> = (0..args.points)
        .map(|k| b_max * k as f64 / (args.points - 1) as f64)
        .collect();
    let vb = per_sample_variance(&Method::Binomial, &p, party)?;
    let mut curves = Vec::new();
    for method in [Method::Pair, Method::List(list)] {
        let allocation = match args.alloc.as_str() {
            "optimal" => optimal_allocation(args.n, per_sample_variance(&method, &p, party)?, vb)?,
            fixed => {
                let n_method: u64 = fixed
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("--alloc expects 'optimal' or an integer, got '{fixed}'")))?;
                if n_method >= args.n {
                    return Err(Error::InvalidArgument(format!("--alloc {n_method} must be below --n {}", args.n)));
                }
                Allocation {
                    n_method,
                    n_binomial: args.n - n_method,
                }
            }
        };
        let setup = PowerSpec {
            p_true: p.clone(),
            party,
            bias_grid: grid.clone(),
            allocation,
            gamma: args.gamma,
            method,
        };
        let at90 = detectable_bias(&setup, 0.9)?;
        eprintln!(
            "{}: n_method {}, n_binomial {}, 90% power at b = {}",
            setup.method.name(),
            allocation.n_method,
            allocation.n_binomial,
            at90.map_or("n/a".to_string(), |b| format!("{b:.4}"))
        );
        curves.push(power_curve(&setup)?.power);
    }
    let table = PowerTable {
        b: grid,
        power_list: curves.pop().unwrap(),
        power_pair: curves.pop().unwrap(),
    };
    write_power_csv(args.output.writer()?, &table)
}

fn cmd_sdcurve(args: SdArgs) -> anonpoll::Result<()> {
    let p = args.population.preferences()?;
    let party = party_index(args.party, p.len())?;
    let method = match args.method {
        MethodArg::Pair => Method::Pair,
        MethodArg::List => Method::List(resolve_list(&args.design, p.len())?),
    };
    let points = sd_curve(&method, &p, party, &args.ns)?;
    write_sd_csv(args.output.writer()?, &points)
}

fn cmd_simulate(args: SimulateArgs) -> anonpoll::Result<()> {
    let p = args.population.preferences()?;
    let protocol = resolve_protocol(&args.design, p.len())?;
    let design = protocol.design().clone();
    let allocations = allocate(args.n, &design.weights());
    if args.replications <= 1 {
        let counts = simulate_design(&design, &p, &allocations, &mut stream_rng(args.seed, 0))?;
        return write_counts_csv(args.output.writer()?, &design, &counts);
    }
    let cfg = SimulationConfig {
        p_true: p,
        design,
        allocations,
        replications: args.replications,
        seed: args.seed,
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    write_json(args.output.writer()?, &monte_carlo_study(&cfg)?)
}

fn cmd_tables(args: TablesArgs) -> anonpoll::Result<()> {
    let mut scenario = Scenario::builtin(&args.scenario)?;
    scenario.sensitive = party_index(args.sensitive, scenario.n_parties())?;
    let metrics: Vec<Metric> = match args.metric {
        MetricArg::Entropy => vec![Metric::Entropy],
        MetricArg::Jeopardy => vec![Metric::Jeopardy],
        MetricArg::Variance => vec![Metric::Variance],
        MetricArg::All => Metric::ALL.to_vec(),
    };
    let rows = all_rows(&scenario, &metrics)?;
    let mut w = args.output.writer()?;
    if !args.human {
        return write_table_csv(w, &rows);
    }
    writeln!(w, "{} (sensitive party {})", scenario.name, args.sensitive).map_err(write_err)?;
    for r in &rows {
        writeln!(w, "{:<10}{:<10}{:<22}{:>10}", r.table, r.method, r.quantity, format_sig(r.value, 3)).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

fn run(cli: Cli) -> anonpoll::Result<()> {
    match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Privacy(a) => cmd_privacy(a),
        Command::Power(a) => cmd_power(a),
        Command::Sdcurve(a) => cmd_sdcurve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Tables(a) => cmd_tables(a),
    }
}

fn report(kind: &str, message: String, position: Option<(u64, usize)>) {
    let mut body = serde_json::json!({ "error": kind, "message": message });
    if let Some((line, column)) = position {
        body["line"] = line.into();
        body["column"] = column.into();
    }
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report("UsageError", e.to_string().trim().to_string(), None);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let position = match &e {
                Error::FileFormat { line, column, .. } => Some((*line, *column)),
                _ => None,
            };
            let code = match e {
                Error::FileFormat { .. } | Error::InvalidArgument(_) | Error::PartyOutOfRange { .. } => 2,
                _ => 1,
            };
            report(e.kind(), e.to_string(), position);
            ExitCode::from(code)
        }
    }
}

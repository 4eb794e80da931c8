//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, digest mismatch),
//! 2 parameter error, 3 size or memory refusal, 4 failed statistical verdict.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use alignperc::covdecay::{CovModel, LocalEvent};
use alignperc::experiments::LambdaCConfig;
use alignperc::manifest::{self, Job};
use alignperc::oracle::{incident_edge_probability, lattice_condition_gap, pattern_probability, EdgePattern};
use alignperc::renorm::{
    estimate_psi, halfline_cover, inductive_decay_check, ladder, lambda0_trigger, p0_trigger, recurrence_check,
    EventEstimate, EventFamily, RecurrenceConstants, ScaleLadder,
};
use alignperc::{Boundary, Error, RandomSource};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "alignperc", version, about = "Independent alignment percolation on Z^d")]
#[command(after_help = "Set ALIGNPERC_THREADS to cap worker threads; results do not depend on it.\n\
Exit codes: 0 ok, 1 runtime failure, 2 bad parameters, 3 size refused, 4 check failed.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one configuration and print its summary and open pairs as JSON.
    Simulate(SimulateArgs),
    /// Exact probabilities of edge patterns.
    Oracle(OracleArgs),
    /// Covariances of local events on two boxes a distance D apart.
    Covdecay(CovdecayArgs),
    /// Multiscale estimates, checks and triggers.
    #[command(subcommand)]
    Renorm(RenormCommand),
    /// Crossing threshold of the honeycomb embedding.
    Hex(HexArgs),
    /// Estimate the critical lambda at one p by torus wrapping.
    LambdaC(LambdaCArgs),
    /// Critical lambda over a grid of p, as CSV plus an SVG plot.
    PhaseDiagram(PhaseArgs),
    /// Rerun a recorded manifest and compare output digests.
    Replay {
        /// Manifest written next to a data file (`<out>.manifest.json`).
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct Output {
    /// Master seed of the run.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the data here and a manifest to `<out>.manifest.json`; prints to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Side length of the cubic box, in sites.
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// torus, closed or occupied_frame.
    #[arg(long, default_value = "torus")]
    boundary: Boundary,
    /// Site occupation probability, in (0, 1].
    #[arg(long)]
    p: f64,
    /// Pair opening probability, in [0, 1]; omit with --one-choice.
    #[arg(long, required_unless_present = "one_choice", conflicts_with = "one_choice")]
    lambda: Option<f64>,
    /// Each occupied site opens one incident pair chosen uniformly.
    #[arg(long)]
    one_choice: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OracleArgs {
    /// incident (origin star all open), gap (lattice-condition gap, d = 2) or pattern (needs --pattern).
    #[arg(long, default_value = "incident")]
    kind: String,
    /// Site occupation probability, in (0, 1].
    #[arg(long)]
    p: f64,
    /// Pair opening probability, in [0, 1].
    #[arg(long)]
    lambda: f64,
    /// Dimension for `incident`.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// JSON pattern: {"d": 2, "edges": [{"site": [0,0], "axis": 0, "state": "open"}]}.
    #[arg(long)]
    pattern: Option<PathBuf>,
}

#[derive(Args)]
struct CovdecayArgs {
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Box radius L, in lattice units.
    #[arg(long, alias = "L")]
    l: i64,
    /// Distance D between box centres along the first axis, in lattice units (D > 2L).
    #[arg(long, alias = "D")]
    dist: i64,
    /// Site occupation probability, in (0, 1].
    #[arg(long)]
    p: f64,
    /// Pair opening probability, in [0, 1]; omit with --one-choice.
    #[arg(long, required_unless_present = "one_choice", conflicts_with = "one_choice")]
    lambda: Option<f64>,
    /// Use the one-choice model.
    #[arg(long)]
    one_choice: bool,
    /// all_open, one_arm or crossing; repeat for several. Defaults to all three.
    #[arg(long = "event")]
    events: Vec<LocalEvent>,
    /// Number of samples.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand)]
enum RenormCommand {
    /// Estimate q_k at the given levels; JSON array of estimates.
    Qk(QkArgs),
    /// Recurrence and inductive-decay checks on a q_k file; exit 4 on failure.
    Check {
        /// Files written by `renorm qk`; together they must hold consecutive levels.
        #[arg(long = "in", alias = "input", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Base scale L_0 the estimates were made with.
        #[arg(long, alias = "L0", default_value_t = 4.0)]
        l0: f64,
    },
    /// Level k0 and the pair-opening threshold lambda_0 for given p (d = 2).
    TriggerLambda0 {
        /// Site occupation probability, in (0, 1).
        #[arg(long)]
        p: f64,
        /// Dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Base scale L_0, in lattice units.
        #[arg(long, alias = "L0", default_value_t = 4.0)]
        l0: f64,
    },
    /// Levels and site threshold p_0 for given lambda; psi is measured unless given.
    TriggerP0 {
        /// Pair opening probability, in [0, 1].
        #[arg(long)]
        lambda: f64,
        /// Dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Base scale L_0, in lattice units.
        #[arg(long, alias = "L0", default_value_t = 4.0)]
        l0: f64,
        /// One-arm decay rate of bond percolation at lambda, per lattice unit.
        #[arg(long)]
        psi: Option<f64>,
        /// Samples per radius when measuring psi.
        #[arg(long, default_value_t = 20_000)]
        psi_n: u64,
        /// Arm radii for the psi fit, in lattice units, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        psi_radii: Vec<i64>,
        /// Master seed for the psi measurement.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Box cover of the positive first axis by levels 0..=kmax.
    Halfline {
        /// Base scale L_0, in lattice units.
        #[arg(long, alias = "L0", default_value_t = 4.0)]
        l0: f64,
        /// Highest level of boxes.
        #[arg(long, default_value_t = 3)]
        kmax: usize,
    },
}

#[derive(Args)]
struct QkArgs {
    /// circuit_absent (d = 2) or one_arm.
    #[arg(long, default_value = "circuit_absent")]
    family: EventFamily,
    /// Base scale L_0, in lattice units.
    #[arg(long, alias = "L0", default_value_t = 4.0)]
    l0: f64,
    /// Levels k, comma separated.
    #[arg(long, alias = "k", value_delimiter = ',', default_value = "0")]
    levels: Vec<usize>,
    /// Site occupation probability, in (0, 1].
    #[arg(long)]
    p: f64,
    /// Pair opening probability, in [0, 1].
    #[arg(long)]
    lambda: f64,
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Number of samples per level.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    /// Box boundary around the event.
    #[arg(long, default_value = "occupied_frame")]
    boundary: Boundary,
    /// Sites beyond radius 10 L_k; defaults to ceil(2 L_k).
    #[arg(long)]
    margin: Option<i64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct HexArgs {
    /// Site occupation probabilities, comma separated, each in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
    p: Vec<f64>,
    /// Side of the honeycomb patch, in hexagons.
    #[arg(long, default_value_t = 64)]
    extent: usize,
    /// Number of samples per p.
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TorusArgs {
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Torus side, in sites.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Samples per replicate.
    #[arg(long, default_value_t = 64)]
    n: u64,
    /// Bisection tolerance in lambda.
    #[arg(long, default_value_t = 0.005)]
    tol: f64,
    /// Independent replicates (at least 2).
    #[arg(long, default_value_t = 5)]
    replicates: u64,
    /// Refuse tori whose single sample needs more than this many bytes.
    #[arg(long, default_value_t = 1 << 30)]
    memory_budget: u64,
}

impl TorusArgs {
    fn config(&self) -> LambdaCConfig {
        LambdaCConfig {
            d: self.d,
            size: self.size,
            n: self.n,
            tol: self.tol,
            replicates: self.replicates,
            memory_budget: self.memory_budget,
        }
    }
}

#[derive(Args)]
struct LambdaCArgs {
    /// Site occupation probability, in (0, 1].
    #[arg(long)]
    p: f64,
    #[command(flatten)]
    torus: TorusArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PhaseArgs {
    /// Values of p, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    grid: Vec<f64>,
    #[command(flatten)]
    torus: TorusArgs,
    #[command(flatten)]
    output: Output,
}

enum Failure {
    Error(Error),
    Verdict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

fn print_json<T: Serialize>(v: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    text.push('\n');
    write_stdout(text.as_bytes())
}

/// A closed pipe on stdout ends output quietly.
fn write_stdout(bytes: &[u8]) -> CliResult {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e).into()),
        _ => Ok(()),
    }
}

/// Runs the job; with `--out` records it, otherwise prints the data.
fn emit(job: Job, output: &Output) -> CliResult {
    match &output.out {
        Some(out) => {
            let m = manifest::record(&job, out)?;
            for o in &m.outputs {
                eprintln!("wrote {} (sha256 {})", o.path, o.sha256);
            }
            eprintln!("manifest {}", manifest::manifest_path(out).display());
        }
        None => {
            for a in job.run()? {
                if a.role == "data" {
                    write_stdout(&a.bytes)?;
                }
            }
        }
    }
    Ok(())
}

/// The longest ladder from `l0` whose levels are finite doubles.
fn usable_ladder(l0: f64) -> alignperc::Result<ScaleLadder> {
    match ladder(l0, 64) {
        Err(Error::Range { max_usable, .. }) => ladder(l0, max_usable),
        r => r,
    }
}

fn model(lambda: Option<f64>) -> CovModel {
    lambda.map_or(CovModel::OneChoice, |lambda| CovModel::Independent { lambda })
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => emit(
            Job::Simulate {
                d: a.d,
                size: a.size,
                boundary: a.boundary,
                p: a.p,
                lambda: a.lambda,
                seed: a.output.seed,
            },
            &a.output,
        ),
        Command::Oracle(a) => match a.kind.as_str() {
            "incident" => print_json(&serde_json::json!({
                "p": a.p, "lambda": a.lambda, "d": a.d,
                "probability": incident_edge_probability(a.p, a.lambda, a.d)?,
            })),
            "gap" => print_json(&lattice_condition_gap(a.p, a.lambda)?),
            "pattern" => {
                let path = a.pattern.ok_or_else(|| Error::param("--kind pattern needs --pattern FILE"))?;
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let pattern: EdgePattern = serde_json::from_str(&text).map_err(Error::from)?;
                print_json(&serde_json::json!({
                    "p": a.p, "lambda": a.lambda,
                    "probability": pattern_probability(&pattern, a.p, a.lambda)?,
                }))
            }
            other => Err(Error::param(format!("unknown oracle kind {other:?}; expected incident, gap or pattern")).into()),
        },
        Command::Covdecay(a) => emit(
            Job::Covdecay {
                d: a.d,
                l: a.l,
                dist: a.dist,
                p: a.p,
                model: model(a.lambda),
                events: if a.events.is_empty() { LocalEvent::ALL.to_vec() } else { a.events },
                n: a.n,
                seed: a.output.seed,
            },
            &a.output,
        ),
        Command::Renorm(r) => renorm(r),
        Command::Hex(a) => emit(
            Job::Hex {
                ps: a.p,
                extent: a.extent,
                n: a.n,
                seed: a.output.seed,
            },
            &a.output,
        ),
        Command::LambdaC(a) => emit(
            Job::LambdaC {
                p: a.p,
                config: a.torus.config(),
                seed: a.output.seed,
            },
            &a.output,
        ),
        Command::PhaseDiagram(a) => {
            if a.output.out.is_none() {
                return Err(Error::param("phase-diagram writes CSV and SVG files and needs --out").into());
            }
            emit(
                Job::PhaseDiagram {
                    grid: a.grid,
                    config: a.torus.config(),
                    seed: a.output.seed,
                },
                &a.output,
            )
        }
        Command::Replay { manifest: path } => {
            let rep = manifest::run_manifest(&path)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            for o in &rep.outputs {
                println!("ok {} {}", o.regenerated, o.path.display());
            }
            Ok(())
        }
    }
}

fn renorm(cmd: RenormCommand) -> CliResult {
    match cmd {
        RenormCommand::Qk(a) => emit(
            Job::Qk {
                family: a.family,
                l0: a.l0,
                levels: a.levels,
                p: a.p,
                lambda: a.lambda,
                d: a.d,
                n: a.n,
                boundary: a.boundary,
                margin: a.margin,
                seed: a.output.seed,
            },
            &a.output,
        ),
        RenormCommand::Check { inputs, l0 } => {
            let mut est = Vec::new();
            for path in &inputs {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<Vec<EventEstimate>>(&text) {
                    Ok(v) => est.extend(v),
                    Err(_) => est.push(serde_json::from_str::<EventEstimate>(&text).map_err(Error::from)?),
                }
            }
            est.sort_by_key(|e| e.k);
            let last = est.last().ok_or_else(|| Error::param("no estimates in input"))?;
            let d = last.d;
            let lad = ladder(l0, last.k + 1)?;
            let consts = RecurrenceConstants::derived(d)?;
            let recurrence = est
                .windows(2)
                .map(|w| recurrence_check(&w[0], &w[1], &consts, &lad))
                .collect::<alignperc::Result<Vec<_>>>()?;
            let inductive = inductive_decay_check(&est, &lad, d)?;
            let pass = recurrence.iter().all(|r| r.pass) && inductive.pass;
            print_json(&serde_json::json!({
                "recurrence": recurrence,
                "inductive": inductive,
                "pass": pass,
            }))?;
            if pass {
                Ok(())
            } else {
                Err(Failure::Verdict("renormalization checks failed".into()))
            }
        }
        RenormCommand::TriggerLambda0 { p, d, l0 } => {
            let lad = usable_ladder(l0)?;
            print_json(&lambda0_trigger(p, d, &lad, &RecurrenceConstants::derived(d)?)?)
        }
        RenormCommand::TriggerP0 { lambda, d, l0, psi, psi_n, psi_radii, seed } => {
            let psi_hat = match psi {
                Some(v) => v,
                None => {
                    let fit = estimate_psi(lambda, d, &psi_radii, psi_n, &RandomSource::from_seed(seed))?;
                    eprintln!("psi = {} (R^2 = {:.3})", fit.psi, fit.r_squared);
                    fit.psi
                }
            };
            let lad = usable_ladder(l0)?;
            print_json(&p0_trigger(lambda, d, &lad, &RecurrenceConstants::derived(d)?, psi_hat)?)
        }
        RenormCommand::Halfline { l0, kmax } => print_json(&halfline_cover(&ladder(l0, kmax + 1)?, kmax)?),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Size { .. } => 3,
        Error::Io { .. } | Error::DigestMismatch { .. } | Error::Internal(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("ALIGNPERC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("verdict: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `lcproj` — log-concave projection from the command line.
//!
//! Subcommands: `project` (MLE projection of a distribution file),
//! `distance` (Wasserstein-1 / Hellinger / square-root-CDF discrepancy),
//! `sweep` (config-driven experiments emitting CSV + JSON summary), and
//! `battery` (the exact-lemma property battery).
//!
//! Exit codes: 0 success (and sweep criterion passed), 1 usage or input
//! error, 2 domain error (projection undefined for a single-atom input),
//! 3 sweep ran but its criterion failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lcproj::experiments::{run_sweep, BatteryConfig, SweepConfig};
use lcproj::metrics::{delta_cdf, hellinger_sq, wasserstein1};
use lcproj::solver::{project, SolverOptions};
use lcproj::{DiscreteDistribution, Error as LcError, PiecewiseLogLinearDensity};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_DOMAIN: u8 = 2;
const EXIT_CRITERION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "lcproj",
    about = "Univariate log-concave projection, exact distances, and rate experiments",
    after_help = "Seed precedence: --seed overrides the config seed; deterministic \
subcommands warn and ignore it. Worker count: --jobs, then LCPROJ_JOBS, then all \
logical processors."
)]
struct Cli {
    /// Worker threads for experiment sweeps (fallback: LCPROJ_JOBS, then
    /// the number of logical processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed override; ignored (with a warning) by deterministic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the log-concave maximum-likelihood projection of a
    /// distribution JSON file.
    Project {
        /// Input distribution: {"atoms": [[location, weight], ...]}.
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the projection JSON here instead of standard output.
        #[arg(long = "out")]
        output: Option<PathBuf>,
        /// Optimality-residual tolerance.
        #[arg(long)]
        gradient_tol: Option<f64>,
        /// Iteration budget.
        #[arg(long)]
        max_iterations: Option<u32>,
    },
    /// Distance between two inputs: distributions for wasserstein and
    /// delta_cdf, densities for hellinger (squared distance is reported).
    Distance {
        kind: DistanceKind,
        input_a: PathBuf,
        input_b: PathBuf,
    },
    /// Run an experiment sweep from a JSON config; writes CSV and a JSON
    /// summary, prints the summary, and exits 3 if the pass criterion
    /// fails.
    Sweep {
        config: PathBuf,
        /// CSV destination (overrides the config; default <kind>.csv).
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Summary destination (overrides the config; default
        /// <kind>.summary.json).
        #[arg(long)]
        out_summary: Option<PathBuf>,
    },
    /// Run the exact-lemma property battery on a seeded random corpus.
    Battery {
        /// Corpus size.
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_summary: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceKind {
    Wasserstein,
    Hellinger,
    DeltaCdf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the error path too
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(EXIT_INPUT);
            }
            print!("{e}");
            return ExitCode::from(EXIT_OK);
        }
    };
    let jobs = match resolve_jobs(cli.jobs) {
        Ok(j) => j,
        Err(msg) => return input_error(&msg),
    };
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global();
    match cli.command {
        Command::Project {
            input,
            output,
            gradient_tol,
            max_iterations,
        } => cmd_project(&input, output.as_deref(), gradient_tol, max_iterations, cli.seed),
        Command::Distance {
            kind,
            input_a,
            input_b,
        } => cmd_distance(kind, &input_a, &input_b, cli.seed),
        Command::Sweep {
            config,
            out_csv,
            out_summary,
        } => cmd_sweep(&config, out_csv, out_summary, cli.seed),
        Command::Battery {
            count,
            out_csv,
            out_summary,
        } => cmd_battery(count, out_csv, out_summary, cli.seed),
    }
}

fn resolve_jobs(flag: Option<usize>) -> Result<usize, String> {
    let jobs = match flag {
        Some(j) => j,
        None => match std::env::var("LCPROJ_JOBS") {
            Ok(v) => v
                .parse()
                .map_err(|_| format!("LCPROJ_JOBS is not a valid thread count: {v:?}"))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if jobs == 0 {
        return Err("--jobs must be at least 1".into());
    }
    Ok(jobs)
}

fn input_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INPUT)
}

fn warn_seed_ignored(seed: Option<u64>, command: &str) {
    if seed.is_some() {
        eprintln!("warning: --seed has no effect on the deterministic `{command}` command");
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {what} {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("invalid {what} {}: {e}", path.display()))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), String> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_project(
    input: &Path,
    output: Option<&Path>,
    gradient_tol: Option<f64>,
    max_iterations: Option<u32>,
    seed: Option<u64>,
) -> ExitCode {
    warn_seed_ignored(seed, "project");
    let dist: DiscreteDistribution = match read_json(input, "distribution") {
        Ok(d) => d,
        Err(msg) => return input_error(&msg),
    };
    let mut opts = SolverOptions::default();
    if let Some(t) = gradient_tol {
        opts.gradient_tol = t;
    }
    if let Some(m) = max_iterations {
        opts.max_iterations = m;
    }
    match project(&dist, &opts) {
        Ok(result) => {
            let json = serde_json::to_string_pretty(&result).expect("serializable result");
            match emit(&json, output) {
                Ok(()) => ExitCode::from(EXIT_OK),
                Err(msg) => input_error(&msg),
            }
        }
        Err(LcError::NotInP1) => {
            println!("{}", serde_json::json!({"error": "NotInP1"}));
            ExitCode::from(EXIT_DOMAIN)
        }
        Err(e) => input_error(&e.to_string()),
    }
}

fn cmd_distance(kind: DistanceKind, a: &Path, b: &Path, seed: Option<u64>) -> ExitCode {
    warn_seed_ignored(seed, "distance");
    let computed: Result<(&str, f64), String> = match kind {
        DistanceKind::Wasserstein => {
            let pa: DiscreteDistribution = match read_json(a, "distribution") {
                Ok(v) => v,
                Err(m) => return input_error(&m),
            };
            let pb: DiscreteDistribution = match read_json(b, "distribution") {
                Ok(v) => v,
                Err(m) => return input_error(&m),
            };
            Ok(("wasserstein", wasserstein1(&pa, &pb)))
        }
        DistanceKind::DeltaCdf => {
            let pa: DiscreteDistribution = match read_json(a, "distribution") {
                Ok(v) => v,
                Err(m) => return input_error(&m),
            };
            let pb: DiscreteDistribution = match read_json(b, "distribution") {
                Ok(v) => v,
                Err(m) => return input_error(&m),
            };
            Ok(("delta_cdf", delta_cdf(&pa, &pb)))
        }
        DistanceKind::Hellinger => {
            let fa: PiecewiseLogLinearDensity = match read_json(a, "density") {
                Ok(v) => v,
                Err(m) => return input_error(&m),
            };
            let fb: PiecewiseLogLinearDensity = match read_json(b, "density") {
                Ok(v) => v,
                Err(m) => return input_error(&m),
            };
            hellinger_sq(&fa, &fb)
                .map(|v| ("hellinger_sq", v))
                .map_err(|e| e.to_string())
        }
    };
    match computed {
        Ok((name, value)) => {
            println!("{}", serde_json::json!({"kind": name, "value": value}));
            ExitCode::from(EXIT_OK)
        }
        Err(msg) => input_error(&msg),
    }
}

fn write_outputs(
    kind: &str,
    csv: &str,
    summary: &str,
    cfg_csv: Option<PathBuf>,
    cfg_summary: Option<PathBuf>,
    out_csv: Option<PathBuf>,
    out_summary: Option<PathBuf>,
) -> Result<(), String> {
    let csv_path = out_csv
        .or(cfg_csv)
        .unwrap_or_else(|| PathBuf::from(format!("{kind}.csv")));
    let summary_path = out_summary
        .or(cfg_summary)
        .unwrap_or_else(|| PathBuf::from(format!("{kind}.summary.json")));
    fs::write(&csv_path, csv).map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;
    fs::write(&summary_path, summary)
        .map_err(|e| format!("cannot write {}: {e}", summary_path.display()))?;
    println!("{summary}");
    Ok(())
}

fn cmd_sweep(
    config_path: &Path,
    out_csv: Option<PathBuf>,
    out_summary: Option<PathBuf>,
    seed: Option<u64>,
) -> ExitCode {
    let mut cfg: SweepConfig = match read_json(config_path, "sweep config") {
        Ok(c) => c,
        Err(m) => return input_error(&m),
    };
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let outcome = match run_sweep(&cfg) {
        Ok(o) => o,
        Err(LcError::NotInP1) => {
            println!("{}", serde_json::json!({"error": "NotInP1"}));
            return ExitCode::from(EXIT_DOMAIN);
        }
        Err(e) => return input_error(&e.to_string()),
    };
    let output = cfg.output().clone();
    if let Err(m) = write_outputs(
        cfg.kind(),
        outcome.csv(),
        &outcome.summary_json(),
        output.csv,
        output.summary,
        out_csv,
        out_summary,
    ) {
        return input_error(&m);
    }
    if outcome.pass() {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_CRITERION)
    }
}

fn cmd_battery(
    count: usize,
    out_csv: Option<PathBuf>,
    out_summary: Option<PathBuf>,
    seed: Option<u64>,
) -> ExitCode {
    let cfg = SweepConfig::PropertyBattery(BatteryConfig {
        count,
        seed: seed.unwrap_or(42),
        solver: SolverOptions::default(),
        output: Default::default(),
    });
    let outcome = match run_sweep(&cfg) {
        Ok(o) => o,
        Err(e) => return input_error(&e.to_string()),
    };
    if let Err(m) = write_outputs(
        cfg.kind(),
        outcome.csv(),
        &outcome.summary_json(),
        None,
        None,
        out_csv,
        out_summary,
    ) {
        return input_error(&m);
    }
    if outcome.pass() {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_CRITERION)
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcac_core::scenario::{compute_metrics, read_trace_csv, write_trace_csv, Metrics, Scenario};
use pcac_core::Error;

#[derive(Debug, Parser)]
#[command(name = "pcac", version, about = "Run adaptive autopilot scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one or more scenarios, writing `<name>.csv` and
    /// `<name>.metrics.toml` into the output directory.
    Run {
        /// Scenario file; repeat to run several scenarios in parallel.
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the dither seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Recompute metrics from a trace CSV.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// Scenario that produced the trace; enables constraint checks.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

/// Failure class mapped to the process exit code.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn invalid(path: &Path, e: Error) -> Failure {
    Failure::Validation(format!("{}: {e}", path.display()))
}

fn runtime(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{context}: {e}"))
}

fn load_scenario(path: &Path, steps: Option<usize>, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut scenario = Scenario::from_path(path).map_err(|e| invalid(path, e))?;
    if let Some(n) = steps {
        scenario.steps = n;
    }
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate().map_err(|e| invalid(path, e))?;
    Ok(scenario)
}

fn run_one(scenario: &Scenario, out: &Path) -> Result<Metrics, Failure> {
    let label = &scenario.name;
    let mut sim = scenario
        .build()
        .map_err(|e| Failure::Validation(format!("{label}: {e}")))?;
    let outcome = sim.run_to_end();
    let trace = sim.trace();

    // The trace is written even after a failure so the steps leading up to
    // it can be inspected.
    let csv_path = out.join(format!("{label}.csv"));
    let file = File::create(&csv_path).map_err(|e| runtime(csv_path.display(), e))?;
    let mut writer = BufWriter::new(file);
    write_trace_csv(trace, &mut writer).map_err(|e| runtime(csv_path.display(), e))?;
    writer.flush().map_err(|e| runtime(csv_path.display(), e))?;
    outcome.map_err(|e| runtime(label, e))?;

    let limits = scenario
        .limits()
        .map_err(|e| Failure::Validation(format!("{label}: {e}")))?;
    let metrics = compute_metrics(trace, Some(&limits)).map_err(|e| runtime(label, e))?;

    let metrics_path = out.join(format!("{label}.metrics.toml"));
    std::fs::write(&metrics_path, metrics.to_toml_string())
        .map_err(|e| runtime(metrics_path.display(), e))?;
    Ok(metrics)
}

fn run(
    paths: &[PathBuf],
    out: &Path,
    steps: Option<usize>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let scenarios = paths
        .iter()
        .map(|p| load_scenario(p, steps, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Failure::Validation(format!(
            "two scenarios share the name `{}` and would overwrite each other's output",
            w[0]
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| runtime(out.display(), e))?;

    let results: Vec<Result<Metrics, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| scope.spawn(move || run_one(s, out)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Failure::Runtime("worker panicked".into()))))
            .collect()
    });

    let mut failures = Vec::new();
    for (scenario, result) in scenarios.iter().zip(results) {
        match result {
            Ok(metrics) => {
                if scenarios.len() > 1 {
                    println!("# {}", scenario.name);
                }
                print!("{}", metrics.to_toml_string());
            }
            Err(f) => failures.push(f),
        }
    }
    // Report every failed scenario; the exit code follows the most severe one.
    match failures.iter().map(Failure::code).max() {
        None => Ok(()),
        Some(code) => {
            let text = failures
                .iter()
                .map(Failure::message)
                .collect::<Vec<_>>()
                .join("\nerror: ");
            Err(if code == 2 {
                Failure::Runtime(text)
            } else {
                Failure::Validation(text)
            })
        }
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(path, None, None)?;
    println!(
        "{}: ok ({} loops, {} steps)",
        scenario.name,
        scenario.loops.len(),
        scenario.steps
    );
    Ok(())
}

fn metrics(trace_path: &Path, scenario: Option<&Path>) -> Result<(), Failure> {
    let file = File::open(trace_path).map_err(|e| runtime(trace_path.display(), e))?;
    let trace = read_trace_csv(BufReader::new(file)).map_err(|e| invalid(trace_path, e))?;
    let limits = match scenario {
        Some(p) => Some(
            load_scenario(p, None, None)?
                .limits()
                .map_err(|e| invalid(p, e))?,
        ),
        None => None,
    };
    let metrics = compute_metrics(&trace, limits.as_deref()).map_err(|e| invalid(trace_path, e))?;
    print!("{}", metrics.to_toml_string());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            steps,
            seed,
        } => run(scenario, out, *steps, *seed),
        Command::Validate { scenario } => validate(scenario),
        Command::Metrics { trace, scenario } => metrics(trace, scenario.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

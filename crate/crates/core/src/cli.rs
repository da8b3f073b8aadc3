//! Command-line front end. Exit status 0 on success, 1 for usage and
//! configuration errors, 2 when an experiment fails at runtime.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::agents::Algorithm;
use crate::error::Error;
use crate::experiment::{run_batch, run_single, tune, ExperimentConfig, RunResult, TuneGrid};
use crate::market::{EquilibriumInfo, MarketVariant};
use crate::metrics::Label;
use crate::report::{self, Summary};

pub const WORKERS_ENV: &str = "DUOPOLY_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "duopoly",
    version,
    about = "Simulate learning agents setting prices in a duopoly"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Market with its default parameters; replaces the configured market.
    #[arg(long)]
    market: Option<MarketVariant>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    steps: Option<u64>,
    /// Override any configuration field, e.g. `--set tql.alpha=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct WorkerArgs {
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

impl WorkerArgs {
    fn count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the symmetric Nash and monopoly outcomes of a market.
    Equilibrium {
        #[arg(long, default_value = "logit")]
        market: MarketVariant,
        /// Take the market from this configuration instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run one seed.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run every configured seed and summarize.
    Batch {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Use seeds 0..N instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Search learning rate and discount against an opponent fixed at the Nash price.
    Tune {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Recompute the metrics of stored runs from their traces.
    Report {
        /// Directory written by `run` or `batch`.
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Every algorithm on every market with the full seed set. Takes many hours.
    Replicate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        /// Override every algorithm's run length.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<Algorithm>>,
        #[arg(long, value_delimiter = ',')]
        markets: Option<Vec<MarketVariant>>,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage<T>(r: crate::Result<T>) -> Outcome<T> {
    r.map_err(Failure::Usage)
}

fn runtime<T>(r: crate::Result<T>) -> Outcome<T> {
    r.map_err(Failure::Runtime)
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &f;
            eprintln!("duopoly: {e}");
            f.code()
        }
    }
}

fn build_config(args: &ExperimentArgs) -> Outcome<ExperimentConfig> {
    let mut config = match (&args.config, args.algorithm) {
        (Some(path), _) => usage(ExperimentConfig::load(path))?,
        (None, Some(alg)) => ExperimentConfig::new(
            args.market.unwrap_or(MarketVariant::Logit).default_model(),
            alg,
        ),
        (None, None) => {
            return Err(Failure::Usage(Error::Usage(
                "either --config or --algorithm is required".into(),
            )))
        }
    };
    if let Some(m) = args.market {
        if m != config.market.variant() {
            config.market = m.default_model();
        }
    }
    if let Some(a) = args.algorithm {
        config.algorithm = a;
    }
    if let Some(s) = args.steps {
        config.steps = Some(s);
    }
    for o in &args.overrides {
        usage(config.set(o))?;
    }
    usage(config.validate())?;
    Ok(config)
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Failure::Runtime(Error::io("<stdout>", e)))
        }
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let text = runtime(serde_json::to_string_pretty(value).map_err(Error::from))?;
    emit(&(text + "\n"))
}

fn print_csv(header: &str, rows: impl IntoIterator<Item = String>) -> Outcome {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    emit(&text)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct EquilibriumOutput {
    market: MarketVariant,
    #[serde(flatten)]
    info: EquilibriumInfo,
}

fn result_row(r: &RunResult) -> String {
    let c = r.classification;
    let a = r.agents;
    let status = if r.is_completed() {
        "completed"
    } else {
        "failed"
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.seed,
        r.algorithm.label(),
        r.market.name(),
        status,
        c.map(|c| c.label.to_string()).unwrap_or_default(),
        opt(c.map(|c| c.eta)),
        opt(c.and_then(|c| c.kappa)),
        opt(a.map(|a| a.rpdi[0])),
        opt(a.map(|a| a.rpdi[1])),
        opt(a.map(|a| a.delta[0])),
        opt(a.map(|a| a.delta[1])),
        r.clamped_actions,
        r.trace_digest
    )
}

const RESULT_HEADER: &str =
    "seed,algorithm,market,status,label,eta,kappa,rpdi0,rpdi1,delta0,delta1,clamped,trace_digest";

fn print_summary(summary: &Summary, format: Format) -> Outcome {
    match format {
        Format::Json => print_json(summary),
        Format::Csv => print_csv(
            "label,count,percent",
            Label::ALL
                .iter()
                .map(|l| format!("{l},{},{}", summary.counts[l], summary.percentages[l])),
        ),
    }
}

fn execute(command: Command) -> Outcome {
    match command {
        Command::Equilibrium {
            market,
            config,
            overrides,
            format,
        } => {
            let mut model = match &config {
                Some(path) => usage(ExperimentConfig::load(path))?.market,
                None => market.default_model(),
            };
            if !overrides.is_empty() {
                let mut c = ExperimentConfig::new(model, Algorithm::Tql);
                for o in &overrides {
                    usage(c.set(o))?;
                }
                model = c.market;
            }
            usage(model.validate())?;
            let info = runtime(model.equilibrium_info())?;
            match format {
                Format::Json => print_json(&EquilibriumOutput {
                    market: model.variant(),
                    info,
                }),
                Format::Csv => print_csv(
                    "market,nash_price,monopoly_price,nash_profit,monopoly_profit",
                    [format!(
                        "{},{},{},{},{}",
                        model.variant().name(),
                        info.nash_price,
                        info.monopoly_price,
                        info.nash_profit,
                        info.monopoly_profit
                    )],
                ),
            }
        }
        Command::Run {
            experiment,
            seed,
            out,
            format,
        } => {
            let mut config = build_config(&experiment)?;
            let seed = seed.unwrap_or(config.seeds[0]);
            config.seeds = vec![seed];
            let result = runtime(run_single(&config, seed))?;
            if let Some(dir) = &out {
                runtime(report::write_runs(
                    dir,
                    &config,
                    std::slice::from_ref(&result),
                ))?;
            }
            match format {
                Format::Json => print_json(&result)?,
                Format::Csv => print_csv(RESULT_HEADER, [result_row(&result)])?,
            }
            failed_runs(std::slice::from_ref(&result))
        }
        Command::Batch {
            experiment,
            seeds,
            workers,
            out,
            format,
        } => {
            let mut config = build_config(&experiment)?;
            if let Some(n) = seeds {
                if n == 0 {
                    return Err(Failure::Usage(Error::Usage(
                        "--seeds must be positive".into(),
                    )));
                }
                config.seeds = (0..n).collect();
            }
            let results = runtime(run_batch(&config, workers.count()))?;
            let summary = match &out {
                Some(dir) => runtime(report::write_batch(dir, &config, &results))?,
                None => runtime(Summary::from_results(&results))?,
            };
            match format {
                Format::Json => print_summary(&summary, format),
                Format::Csv => print_csv(RESULT_HEADER, results.iter().map(result_row)),
            }
        }
        Command::Tune {
            experiment,
            alphas,
            gammas,
            repetitions,
            workers,
            out,
            format,
        } => {
            let config = build_config(&experiment)?;
            let mut grid = TuneGrid::default();
            if let Some(a) = alphas {
                grid.alphas = a;
            }
            if let Some(g) = gammas {
                grid.gammas = g;
            }
            if let Some(r) = repetitions {
                grid.repetitions = r;
            }
            if config.seeds.len() < grid.repetitions {
                return Err(Failure::Usage(Error::Usage(format!(
                    "{} repetitions need at least as many configured seeds",
                    grid.repetitions
                ))));
            }
            let entries = usage(tune(&config, &grid, workers.count()))?;
            if let Some(dir) = &out {
                runtime(std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)))?;
                runtime(config.save(&dir.join(report::CONFIG_FILE)))?;
                let path = dir.join("tune.json");
                let text = runtime(serde_json::to_string_pretty(&entries).map_err(Error::from))?;
                runtime(std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e)))?;
            }
            match format {
                Format::Json => print_json(&entries),
                Format::Csv => print_csv(
                    "alpha,gamma,converged,mean_step",
                    entries.iter().map(|e| {
                        format!("{},{},{},{}", e.alpha, e.gamma, e.converged, e.mean_step)
                    }),
                ),
            }
        }
        Command::Report { dir, format } => {
            if !dir.join(report::CONFIG_FILE).is_file() {
                return Err(Failure::Usage(Error::Usage(format!(
                    "{} holds no {}",
                    dir.display(),
                    report::CONFIG_FILE
                ))));
            }
            let analysis = runtime(report::reanalyze(&dir))?;
            match format {
                Format::Json => print_json(&analysis)?,
                Format::Csv => print_csv(
                    "seed,stored,recomputed,matches",
                    analysis.runs.iter().map(|r| {
                        let l = |c: Option<crate::metrics::RunClassification>| {
                            c.map(|c| c.label.to_string()).unwrap_or_default()
                        };
                        format!(
                            "{},{},{},{}",
                            r.seed,
                            l(r.stored),
                            l(r.recomputed),
                            r.matches
                        )
                    }),
                )?,
            }
            if analysis.all_match() {
                Ok(())
            } else {
                Err(Failure::Runtime(Error::Config(
                    "recomputed metrics differ from the stored results".into(),
                )))
            }
        }
        Command::Replicate {
            out,
            seeds,
            steps,
            algorithms,
            markets,
            workers,
            format,
        } => {
            if seeds == 0 {
                return Err(Failure::Usage(Error::Usage(
                    "--seeds must be positive".into(),
                )));
            }
            let algorithms = algorithms.unwrap_or_else(|| Algorithm::ALL.to_vec());
            let markets = markets.unwrap_or_else(|| MarketVariant::ALL.to_vec());
            let mut configs = Vec::new();
            for &alg in &algorithms {
                for &m in &markets {
                    let mut c = ExperimentConfig::new(m.default_model(), alg);
                    c.steps = steps;
                    c.seeds = (0..seeds).collect();
                    usage(c.validate())?;
                    configs.push(c);
                }
            }
            let workers = workers.count();
            let mut summaries = Vec::new();
            for c in &configs {
                let dir = out.join(format!(
                    "{}_{}",
                    c.algorithm.label().to_lowercase(),
                    c.market.variant().name()
                ));
                eprintln!(
                    "duopoly: {} on {} ({} seeds)",
                    c.algorithm.label(),
                    c.market.variant().name(),
                    seeds
                );
                let results = runtime(run_batch(c, workers))?;
                summaries.push(runtime(report::write_batch(&dir, c, &results))?);
            }
            runtime(report::write_tables(&out, &summaries))?;
            match format {
                Format::Json => print_json(&summaries),
                Format::Csv => {
                    let path = out.join(report::DISTRIBUTION_FILE);
                    let text =
                        runtime(std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e)))?;
                    emit(&text)
                }
            }
        }
    }
}

/// A run that stopped on a numerical failure is reported and then turned into
/// a runtime exit status.
fn failed_runs(results: &[RunResult]) -> Outcome {
    match results.iter().find(|r| !r.is_completed()) {
        None => Ok(()),
        Some(r) => Err(Failure::Runtime(Error::Config(format!(
            "run for seed {} failed",
            r.seed
        )))),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ossir::eigen::Strategy;
use ossir::error::{OssirError, Result};
use ossir::harness::{self, Method, RunConfig};

#[derive(Parser)]
#[command(name = "ossir", version, about = "Online sparse sliced inverse regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated observations and the true directions.
    Simulate(Opts),
    /// Fit one stream read from a CSV file.
    Fit(Opts),
    /// Compare methods over replicated simulations.
    Benchmark(Opts),
    /// Grid search over gamma, gravity and theta.
    Sweep(Opts),
}

#[derive(Args)]
struct Opts {
    /// Simulation models, comma separated (1, 2, 3).
    #[arg(long, default_value = "1")]
    model: String,
    /// Dimensions, comma separated.
    #[arg(long, default_value = "20")]
    p: String,
    /// Observations per data set.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of slices.
    #[arg(long = "H", default_value_t = 10)]
    slices: usize,
    /// Number of directions; defaults to the model's true rank.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = "ccipca")]
    tracker: String,
    /// Methods, comma separated (M1..M8).
    #[arg(long, default_value = "M3")]
    methods: String,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Learning rates, comma separated; omitted means scaled to the warmup covariance.
    #[arg(long)]
    gamma: Option<String>,
    /// Gravity values, comma separated; omitted means 4 sqrt(ln p / n).
    #[arg(long)]
    gravity: Option<String>,
    /// Truncation thresholds, comma separated; "inf" allowed.
    #[arg(long, default_value = "inf")]
    theta: String,
    #[arg(long, default_value_t = 10)]
    period: u64,
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Input CSV for `fit`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Response column of the input CSV.
    #[arg(long, default_value = "y")]
    target: String,
    /// Diagnostics interval for `fit`.
    #[arg(long, default_value_t = 100)]
    checkpoint: u64,
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| OssirError::InvalidConfig(format!("cannot parse {what} value '{v}'")))
        })
        .collect()
}

impl Opts {
    fn into_config(self) -> Result<RunConfig> {
        let tracker: Strategy = self.tracker.parse()?;
        Ok(RunConfig {
            models: list(&self.model, "model")?,
            dims: list(&self.p, "p")?,
            n: self.n,
            slices: self.slices,
            rank: self.d,
            tracker,
            methods: Method::parse_list(&self.methods)?,
            reps: self.reps,
            seed: self.seed,
            gammas: self.gamma.as_deref().map_or(Ok(Vec::new()), |g| list(g, "gamma"))?,
            gravities: self.gravity.as_deref().map_or(Ok(Vec::new()), |g| list(g, "gravity"))?,
            thetas: list(&self.theta, "theta")?,
            period: self.period,
            warmup: self.warmup,
            out: self.out,
            input: self.input,
            target: self.target,
            checkpoint_every: self.checkpoint,
            ..RunConfig::default()
        })
    }
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(o) => {
            let files = harness::simulate(&o.into_config()?)?;
            Ok(format!("wrote {} files", files.len()))
        }
        Command::Fit(o) => {
            let cfg = o.into_config()?;
            let s = harness::fit(&cfg)?;
            Ok(format!(
                "fitted {} observations, results in {}",
                s.observations,
                cfg.out.display()
            ))
        }
        Command::Benchmark(o) => {
            let cfg = o.into_config()?;
            harness::benchmark(&cfg)?;
            std::fs::read_to_string(cfg.out.join("summary.txt")).map_err(Into::into)
        }
        Command::Sweep(o) => {
            let cfg = o.into_config()?;
            harness::sweep(&cfg)?;
            std::fs::read_to_string(cfg.out.join("summary.txt")).map_err(Into::into)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}

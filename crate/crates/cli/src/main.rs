mod reproduce;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use smoothprice::benchmark::{run_benchmark, BenchmarkConfig};
use smoothprice::config::PipelineConfig;
use smoothprice::engine::{persist_run, read_price_csv, risk_reports, run_pipeline, unix_millis, RunManifest};
use smoothprice::io::{read_to_string, write_atomic};

use reproduce::Variant;

#[derive(Debug, Parser)]
#[command(name = "smoothprice", version, about = "Option prices on physical scenarios by smoothing risk-neutral values")]
struct Cli {
    /// JSON config document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, a positive count or `auto`.
    #[arg(long, global = true, default_value = "auto")]
    threads: Threads,
    /// Only print results and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the built-in worked example and compare with its published values.
    ReproducePaper {
        #[arg(value_enum)]
        variant: Variant,
    },
    /// Run the pricing pipeline from `--config`.
    Price,
    /// Time the pipeline against nested Monte Carlo.
    Benchmark,
    /// VaR, CVaR and standard deviation per time step of a price table.
    Risk {
        /// Price table CSV as written by `price`.
        table: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Reference price; defaults to the mean price at the first time step.
        #[arg(long)]
        base: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy)]
struct Threads(Option<usize>);

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Threads(None));
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads(Some(n))),
            _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<smoothprice::Error> for Failure {
    fn from(e: smoothprice::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match &cli.command {
        Command::ReproducePaper { variant } => reproduce_paper(&cli, *variant),
        Command::Price => price(&cli),
        Command::Benchmark => benchmark(&cli),
        Command::Risk { table, level, base } => risk(table, *level, *base),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn reproduce_paper(cli: &Cli, variant: Variant) -> Outcome {
    let report = reproduce::run(variant)?;
    print!("{}", report.render(cli.quiet));
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Usage("this command needs --config <path>".into()))?;
    let mut config = PipelineConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn price(cli: &Cli) -> Outcome {
    let config = load_config(cli)?;
    let dir = match (&cli.out, &config.output.dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => config.resolve(dir),
        (None, None) => return Err(Failure::Usage("no output directory: pass --out or set output.dir".into())),
    };
    let started = unix_millis();
    let run = run_pipeline(&config)?;
    persist_run(&dir, &run, &RunManifest::for_run(&run, started))?;
    if !cli.quiet {
        let meta = &run.prices.metadata;
        eprintln!(
            "priced {} scenarios at {} times into {}",
            run.prices.n_scenarios,
            run.prices.times.len(),
            dir.display()
        );
        if meta.extrapolated_cells > 0 {
            eprintln!("warning: {} cells lie outside the fitted sample range", meta.extrapolated_cells);
        }
        for d in &meta.fit_diagnostics {
            if let (Some(ti), Some(rank)) = (d.time_index, d.rank) {
                if rank < d.basis_size {
                    eprintln!("warning: fit at time index {ti} has rank {rank} of {}", d.basis_size);
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn benchmark(cli: &Cli) -> Outcome {
    let mut config = match &cli.config {
        Some(path) => BenchmarkConfig::from_document(&read_to_string(path)?)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let report = run_benchmark(&config)?;
    let json = serde_json::to_string_pretty(&report).map_err(json_failure)?;
    if let Some(dir) = &cli.out {
        write_output(dir, "benchmark.json", &json)?;
    }
    println!("{json}");
    if !cli.quiet {
        for flag in &report.flags {
            eprintln!("flag: {flag}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn risk(table: &Path, level: f64, base: Option<f64>) -> Outcome {
    if !(level > 0.0 && level < 1.0) {
        return Err(Failure::Usage(format!("--level must lie in (0, 1), got {level}")));
    }
    if base.is_some_and(|b| !b.is_finite()) {
        return Err(Failure::Usage("--base must be finite".into()));
    }
    let file = std::fs::File::open(table).map_err(|e| Failure::Usage(format!("{}: {e}", table.display())))?;
    let prices = read_price_csv(file)?;
    let reports = risk_reports(&prices, level, base)?;
    println!("{}", serde_json::to_string_pretty(&reports).map_err(json_failure)?);
    Ok(ExitCode::SUCCESS)
}

fn json_failure(e: serde_json::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write_output(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    write_atomic(&dir.join(name), text.as_bytes())?;
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use kodlab::config::{load, Overrides};
use kodlab::verify::{criterion_name, run_suite, Suite, Tolerances};
use kodlab::{experiments, output};
use kodlab_core::LabError;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "kodlab", version, about = "Bergman kernel and random section experiments")]
struct Cli {
    /// Master seed; replaces the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; replaces the config's `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; replaces the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the acceptance battery: `fast` or `full`.
    Verify {
        suite: String,
        /// Restrict to these criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// Override a tolerance, as `name=value`.
        #[arg(long = "tolerance")]
        tolerances: Vec<String>,
    },
}

fn init_pool(workers: Option<usize>) -> Result<(), String> {
    match workers {
        Some(0) => Err("--workers must be positive".into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}")),
        None => Ok(()),
    }
}

fn exit_code_for(e: &LabError) -> u8 {
    match e {
        LabError::Rejected(_) | LabError::Unsupported { .. } => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn run(cli: &Cli, path: &PathBuf) -> ExitCode {
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
    };
    let config = match load(path, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = init_pool(config.workers) {
        eprintln!("{e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let start = Instant::now();
    let record = match experiments::run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", config.experiment.name());
            return ExitCode::from(exit_code_for(&e));
        }
    };
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    match output::write(&record, &out, start.elapsed().as_secs_f64()) {
        Ok((csv, json)) => {
            for (name, value) in &record.metrics {
                println!("{name} = {value:.6e}");
            }
            println!("wrote {} and {}", csv.display(), json.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn verify(cli: &Cli, suite: &str, only: &[u32], overrides: &[String]) -> ExitCode {
    let Some(suite) = Suite::from_name(suite) else {
        eprintln!("unknown suite `{suite}` (fast or full)");
        return ExitCode::from(EXIT_CONFIG);
    };
    let mut tol = Tolerances::default();
    for o in overrides {
        if let Err(e) = tol.set(o) {
            eprintln!("--tolerance: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    if let Some(bad) = only.iter().find(|id| criterion_name(**id).is_none()) {
        eprintln!("--only: no criterion {bad}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = init_pool(cli.workers) {
        eprintln!("{e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let ids: Vec<u32> = suite
        .criteria()
        .into_iter()
        .filter(|id| only.is_empty() || only.contains(id))
        .collect();
    let mut lines = Vec::new();
    let outcomes = run_suite(&ids, &tol, cli.seed.unwrap_or(1), |o| {
        let mut block = vec![o.summary()];
        block.extend(o.checks.iter().map(|c| format!("    {c}")));
        for line in &block {
            println!("{line}");
        }
        lines.extend(block);
    });
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    let tally = format!("{passed}/{} criteria passed", outcomes.len());
    println!("{tally}");
    lines.push(tally);
    if let Some(dir) = &cli.out {
        let path = dir.join("verify.txt");
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, lines.join("\n") + "\n")) {
            eprintln!("writing {}: {e}", path.display());
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Verify {
            suite,
            only,
            tolerances,
        } => verify(&cli, suite, only, tolerances),
    }
}

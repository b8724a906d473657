//! `vvm-bench`: runs the benchmark applications on one or more engines and
//! prints a CSV report.
//!
//! ```text
//! vvm-bench stencil --size 1024x256 --iters 10 --engine simple,score,mcore --blocks 1,4,16
//! ```
//!
//! Exit status is 0 on success, 1 on usage or runtime errors and 2 when
//! engines disagree on a result.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;
use log::LevelFilter;

use vvm_core::apps::{batches_to_asm, report, run_bench, AppError, BenchName, BenchSpec, RunOptions, Workload};
use vvm_core::bridge::parse_batch_limit;
use vvm_core::config::{self, EngineKind, EngineOverrides, EngineSpec};

#[derive(Debug, Parser)]
#[command(name = "vvm-bench", version, about = "Benchmarks for the vector bytecode runtime")]
struct Cli {
    /// jacobi, knn, shallow_water or stencil
    bench: BenchName,
    /// Problem size: `N`, or `ROWSxCOLS` for stencil
    #[arg(long)]
    size: Size,
    /// Iterations or time steps
    #[arg(long)]
    iters: Option<usize>,
    /// Comma-separated engines: simple, score, mcore
    #[arg(long, value_delimiter = ',')]
    engine: Vec<EngineKind>,
    /// Comma-separated block counts
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    blocks: Vec<u64>,
    /// Comma-separated thread counts (mcore only)
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    threads: Vec<u64>,
    /// Repetitions per configuration
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// kNN query count (default: size / 10)
    #[arg(long)]
    queries: Option<usize>,
    /// kNN neighbour count
    #[arg(long, default_value_t = 8)]
    neighbors: usize,
    /// Instructions per batch, or `unlimited`
    #[arg(long)]
    batch_limit: Option<String>,
    /// Component configuration; defaults to $VVM_CONFIG
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report here
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the bytecode of the first run here
    #[arg(long)]
    emit_asm: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Size {
    rows: usize,
    cols: Option<usize>,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let number = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("invalid size `{s}`"));
        match s.split_once(['x', 'X']) {
            Some((r, c)) => Ok(Size { rows: number(r)?, cols: Some(number(c)?) }),
            None => Ok(Size { rows: number(s)?, cols: None }),
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Correctness(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Runtime(_) => 1,
            Failure::Correctness(_) => 2,
        }
    }
}

impl From<AppError> for Failure {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Parameter(_) => Failure::Usage(e.to_string()),
            AppError::Nondeterministic { .. } => Failure::Correctness(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn workload(cli: &Cli) -> Result<Workload, Failure> {
    let Size { rows, cols } = cli.size;
    if cols.is_some() && cli.bench != BenchName::Stencil {
        return Err(Failure::Usage(format!("{} takes a single size", cli.bench)));
    }
    let iters = |default: usize| cli.iters.unwrap_or(default);
    Ok(match cli.bench {
        BenchName::Jacobi => Workload::Jacobi { n: rows, iters: iters(4) },
        BenchName::Knn => {
            if cli.iters.is_some() {
                return Err(Failure::Usage("knn does not iterate".into()));
            }
            Workload::Knn { n: rows, queries: cli.queries.unwrap_or((rows / 10).max(1)), k: cli.neighbors }
        }
        BenchName::ShallowWater => Workload::ShallowWater { n: rows, steps: iters(120) },
        BenchName::Stencil => Workload::Stencil { rows, cols: cols.unwrap_or(rows), steps: iters(10) },
    })
}

/// Every engine configuration to run, in sweep order, without duplicates.
fn engine_specs(cli: &Cli, file: Option<EngineSpec>, env: EngineOverrides) -> Vec<EngineSpec> {
    let kinds = match (cli.engine.is_empty(), file) {
        (false, _) => cli.engine.clone(),
        (true, Some(spec)) => vec![spec.kind],
        (true, None) => vec![EngineKind::Simple],
    };
    let sweep = |given: &[u64], fallback: Option<usize>| -> Vec<Option<usize>> {
        if given.is_empty() {
            vec![fallback]
        } else {
            given.iter().map(|&v| Some(v as usize)).collect()
        }
    };
    let fallback = env.or(EngineOverrides { blocks: file.map(|f| f.blocks), threads: file.map(|f| f.threads) });
    let mut specs = Vec::new();
    for kind in kinds {
        for blocks in sweep(&cli.blocks, fallback.blocks) {
            for threads in sweep(&cli.threads, fallback.threads) {
                let spec = EngineSpec::resolve(kind, EngineOverrides { blocks, threads });
                if !specs.contains(&spec) {
                    specs.push(spec);
                }
            }
        }
    }
    specs
}

fn init_logging(debug: bool) {
    let mut builder = env_logger::Builder::from_default_env();
    if debug {
        builder.filter(Some("vvm::batch"), LevelFilter::Debug);
    }
    let _ = builder.try_init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => Some(config::load(path)),
        None => config::load_from_env().transpose(),
    }
    .transpose()
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let debug = config.as_ref().is_some_and(|c| c.debug);
    init_logging(debug);

    let env = EngineOverrides::from_env().map_err(|e| Failure::Usage(e.to_string()))?;
    let file = config.as_ref().map(|c| c.engine_spec(EngineOverrides::default())).transpose().map_err(|e| Failure::Usage(e.to_string()))?;
    let batch_limit = cli.batch_limit.as_deref().map(parse_batch_limit).transpose().map_err(|e| Failure::Usage(e.to_string()))?;
    let workload = workload(&cli)?;

    let mut results = Vec::new();
    for (i, engine) in engine_specs(&cli, file, env).into_iter().enumerate() {
        let spec = BenchSpec { workload, engine, reps: cli.reps as usize };
        let options = RunOptions { batch_limit, debug, capture: i == 0 && cli.emit_asm.is_some() };
        let (result, batches) = run_bench(&spec, options)?;
        eprintln!(
            "{} {} on {}(B={},T={}): {:.4} s mean over {} runs",
            workload.name(),
            workload.size_label(),
            engine.kind,
            engine.blocks,
            engine.threads,
            result.mean_seconds(),
            result.seconds.len()
        );
        if let (Some(path), true) = (&cli.emit_asm, i == 0) {
            fs::write(path, batches_to_asm(&batches)).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        }
        results.push(result);
    }

    let csv = report(&results).map_err(|e| Failure::Correctness(e.to_string()))?;
    print!("{csv}");
    if let Some(path) = &cli.csv {
        fs::write(path, &csv).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Correctness(m) => eprintln!("correctness failure: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

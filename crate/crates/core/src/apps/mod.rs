//! Benchmark applications written against the bridge API, plus timing and
//! CSV reporting.

mod five_point;
mod knn;
mod report;
mod shallow_water;

pub use five_point::{jacobi, stencil};
pub use knn::{knn, knn_select, KNN_DIMS, KNN_POINT_SEED, KNN_QUERY_SEED};
pub use report::{report, ReportError, CSV_HEADER};
pub use shallow_water::{droplet, shallow_water, GRAVITY, GRID_SPACING, TIME_STEP};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::bridge::{BridgeError, Runtime};
use crate::bytecode::{emit_asm, Batch};
use crate::config::{ConfigError, EngineSpec};
use crate::model::{Buffer, DenseArray};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AppError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("repetition {rep} of {bench} produced checksum {found}, expected {expected}")]
    Nondeterministic { bench: String, rep: usize, expected: Checksum, found: Checksum },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchName {
    Jacobi,
    Knn,
    ShallowWater,
    Stencil,
}

impl BenchName {
    pub const ALL: [BenchName; 4] = [BenchName::Jacobi, BenchName::Knn, BenchName::ShallowWater, BenchName::Stencil];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchName::Jacobi => "jacobi",
            BenchName::Knn => "knn",
            BenchName::ShallowWater => "shallow_water",
            BenchName::Stencil => "stencil",
        }
    }
}

impl fmt::Display for BenchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchName {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchName::ALL
            .into_iter()
            .find(|b| b.as_str() == s || (s == "shallow-water" && *b == BenchName::ShallowWater))
            .ok_or_else(|| AppError::Parameter(format!("unknown benchmark `{s}`")))
    }
}

/// A benchmark with its problem size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workload {
    Jacobi { n: usize, iters: usize },
    Knn { n: usize, queries: usize, k: usize },
    ShallowWater { n: usize, steps: usize },
    Stencil { rows: usize, cols: usize, steps: usize },
}

impl Workload {
    pub fn name(&self) -> BenchName {
        match self {
            Workload::Jacobi { .. } => BenchName::Jacobi,
            Workload::Knn { .. } => BenchName::Knn,
            Workload::ShallowWater { .. } => BenchName::ShallowWater,
            Workload::Stencil { .. } => BenchName::Stencil,
        }
    }

    /// The size column of the report.
    pub fn size_label(&self) -> String {
        match *self {
            Workload::Jacobi { n, .. } | Workload::ShallowWater { n, .. } => n.to_string(),
            Workload::Knn { n, queries, k } => format!("{n}x{queries}k{k}"),
            Workload::Stencil { rows, cols, .. } => format!("{rows}x{cols}"),
        }
    }

    pub fn iterations(&self) -> usize {
        match *self {
            Workload::Jacobi { iters, .. } => iters,
            Workload::Knn { .. } => 1,
            Workload::ShallowWater { steps, .. } | Workload::Stencil { steps, .. } => steps,
        }
    }

    /// Runs the workload on `rt` and returns its output array.
    pub fn run(&self, rt: &Runtime) -> Result<DenseArray, AppError> {
        match *self {
            Workload::Jacobi { n, iters } => jacobi(rt, n, iters),
            Workload::Knn { n, queries, k } => knn(rt, n, queries, k),
            Workload::ShallowWater { n, steps } => shallow_water(rt, n, steps),
            Workload::Stencil { rows, cols, steps } => stencil(rt, rows, cols, steps),
        }
    }
}

/// Sum of all elements in row-major order, in the array's own type.
#[derive(Debug, Clone, Copy)]
pub enum Checksum {
    Float(f64),
    Int(i64),
}

impl PartialEq for Checksum {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Checksum::Float(a), Checksum::Float(b)) => a.to_bits() == b.to_bits(),
            (Checksum::Int(a), Checksum::Int(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Checksum {}

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Checksum::Float(v) => write!(f, "{v:?}"),
            Checksum::Int(v) => write!(f, "{v}"),
        }
    }
}

pub fn checksum(values: &DenseArray) -> Checksum {
    match values.data() {
        Buffer::Float64(d) => Checksum::Float(d.iter().fold(0.0, |acc, &x| acc + x)),
        Buffer::Float32(d) => Checksum::Float(f64::from(d.iter().fold(0.0f32, |acc, &x| acc + x))),
        Buffer::Int64(d) => Checksum::Int(d.iter().fold(0i64, |acc, &x| acc.wrapping_add(x))),
        Buffer::Bool(d) => Checksum::Int(d.iter().filter(|&&x| x).count() as i64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSpec {
    pub workload: Workload,
    pub engine: EngineSpec,
    pub reps: usize,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub spec: BenchSpec,
    /// Wall time of each repetition.
    pub seconds: Vec<f64>,
    pub checksum: Checksum,
    pub output: DenseArray,
}

impl BenchResult {
    pub fn mean_seconds(&self) -> f64 {
        self.seconds.iter().sum::<f64>() / self.seconds.len() as f64
    }
}

/// Options for [`run_bench`] beyond the [`BenchSpec`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub batch_limit: Option<usize>,
    pub debug: bool,
    /// Keep the batches of the first repetition.
    pub capture: bool,
}

/// Runs every repetition on a fresh runtime. Time covers recording, execution
/// and the final read; it excludes building the engine.
pub fn run_bench(spec: &BenchSpec, options: RunOptions) -> Result<(BenchResult, Vec<Batch>), AppError> {
    if spec.reps == 0 {
        return Err(AppError::Parameter("repetitions must be at least 1".into()));
    }
    let mut seconds = Vec::with_capacity(spec.reps);
    let mut first: Option<(Checksum, DenseArray)> = None;
    let mut batches = Vec::new();
    for rep in 0..spec.reps {
        let rt = Runtime::with_engine(spec.engine.build()?)?;
        if let Some(limit) = options.batch_limit {
            rt.set_batch_limit(limit);
        }
        rt.set_debug(options.debug);
        if options.capture && rep == 0 {
            rt.capture_batches();
        }
        let start = Instant::now();
        let output = spec.workload.run(&rt)?;
        rt.finalize()?;
        seconds.push(start.elapsed().as_secs_f64());
        if rep == 0 {
            batches = rt.take_captured();
        }
        let sum = checksum(&output);
        match &first {
            None => first = Some((sum, output)),
            Some((expected, _)) if *expected != sum => {
                return Err(AppError::Nondeterministic {
                    bench: spec.workload.name().to_string(),
                    rep,
                    expected: *expected,
                    found: sum,
                })
            }
            Some(_) => {}
        }
    }
    let (checksum, output) = first.expect("at least one repetition");
    Ok((BenchResult { spec: *spec, seconds, checksum, output }, batches))
}

/// Text form of captured batches, one block per flush.
pub fn batches_to_asm(batches: &[Batch]) -> String {
    batches.iter().map(emit_asm).collect::<Vec<_>>().join("\n")
}

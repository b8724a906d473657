use std::fmt::Write;

use thiserror::Error;

use super::{BenchResult, Checksum, Workload};
use crate::config::{EngineKind, EngineSpec};

pub const CSV_HEADER: &str = "bench,engine,B,T,size,iters,rep,seconds,checksum,speedup";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error(
        "{} {}: {} checksum {found} differs from {} checksum {expected}",
        workload.name(), workload.size_label(), engine_label(engine), engine_label(baseline)
    )]
    ChecksumMismatch { workload: Workload, baseline: EngineSpec, engine: EngineSpec, expected: Checksum, found: Checksum },
}

fn engine_rank(kind: EngineKind) -> usize {
    EngineKind::ALL.iter().position(|k| *k == kind).unwrap_or(usize::MAX)
}

fn sort_key(r: &BenchResult) -> (String, String, usize, usize, usize, usize) {
    let w = &r.spec.workload;
    let e = &r.spec.engine;
    (w.name().to_string(), w.size_label(), w.iterations(), engine_rank(e.kind), e.blocks, e.threads)
}

fn engine_label(e: &EngineSpec) -> String {
    format!("{}(B={},T={})", e.kind, e.blocks, e.threads)
}

/// One CSV row per repetition. Results of the same workload must carry equal
/// checksums. Speedup is the baseline's mean time over the row's mean time,
/// where the baseline is the `simple` result of that workload if present and
/// otherwise its first result in report order.
pub fn report(results: &[BenchResult]) -> Result<String, ReportError> {
    let mut ordered: Vec<&BenchResult> = results.iter().collect();
    ordered.sort_by_key(|r| sort_key(r));

    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut start = 0;
    while start < ordered.len() {
        let workload: Workload = ordered[start].spec.workload;
        let end = start + ordered[start..].iter().take_while(|r| r.spec.workload == workload).count();
        let group = &ordered[start..end];
        let baseline = group.iter().find(|r| r.spec.engine.kind == EngineKind::Simple).unwrap_or(&group[0]);
        for r in group {
            if r.checksum != baseline.checksum {
                return Err(ReportError::ChecksumMismatch {
                    workload,
                    baseline: baseline.spec.engine,
                    engine: r.spec.engine,
                    expected: baseline.checksum,
                    found: r.checksum,
                });
            }
            let speedup = baseline.mean_seconds() / r.mean_seconds();
            let e = &r.spec.engine;
            for (rep, seconds) in r.seconds.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:.6},{},{:.3}",
                    workload.name(),
                    e.kind,
                    e.blocks,
                    e.threads,
                    workload.size_label(),
                    workload.iterations(),
                    rep,
                    seconds,
                    r.checksum,
                    speedup
                )
                .expect("writing to a String");
            }
        }
        start = end;
    }
    Ok(out)
}

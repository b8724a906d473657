//! Engine configurations shared by the criterion benchmarks.

use vvm_core::config::{EngineKind, EngineOverrides, EngineSpec};

/// `simple`, `score` at each block count, and `mcore` at each block count
/// with every available core.
pub fn engine_matrix(blocks: &[usize]) -> Vec<EngineSpec> {
    let mut specs = vec![EngineSpec::resolve(EngineKind::Simple, EngineOverrides::default())];
    for kind in [EngineKind::Score, EngineKind::Mcore] {
        specs.extend(blocks.iter().map(|&b| EngineSpec::resolve(kind, EngineOverrides { blocks: Some(b), threads: None })));
    }
    specs
}

pub fn label(spec: &EngineSpec) -> String {
    match spec.kind {
        EngineKind::Simple => spec.kind.to_string(),
        _ => format!("{}/B{}/T{}", spec.kind, spec.blocks, spec.threads),
    }
}

//! Brute-force dependence checks on enumerated element sets.

use std::collections::BTreeSet;

use vvm_core::bytecode::{Batch, Instruction, OpKind};
use vvm_core::engine::Segment;
use vvm_core::model::ArrayView;

use super::reference::{element, row_major_index};

pub fn footprint(view: &ArrayView) -> BTreeSet<usize> {
    (0..view.len()).map(|flat| element(view, &row_major_index(flat, view.shape()))).collect()
}

pub fn same_descriptor(a: &ArrayView, b: &ArrayView) -> bool {
    a.base_id() == b.base_id() && a.offset() == b.offset() && a.shape() == b.shape() && a.strides() == b.strides()
}

/// The two views may be scheduled independently: either they describe exactly
/// the same elements in the same order, or they touch no common element.
pub fn independent(a: &ArrayView, b: &ArrayView) -> bool {
    if same_descriptor(a, b) || a.base_id() != b.base_id() {
        return true;
    }
    footprint(a).is_disjoint(&footprint(b))
}

pub fn self_conflicting(instr: &Instruction) -> bool {
    let Some(out) = &instr.out else { return false };
    footprint(out).len() < out.len() || instr.input_views().any(|v| !independent(out, v))
}

pub fn fusible(instr: &Instruction) -> bool {
    matches!(instr.kind(), OpKind::Elementwise | OpKind::Generator) && !self_conflicting(instr)
}

/// `next` may follow `earlier` inside one kernel.
pub fn pair_ok(earlier: &Instruction, next: &Instruction) -> bool {
    let (Some(a_out), Some(n_out)) = (&earlier.out, &next.out) else { return false };
    next.input_views().all(|v| independent(v, a_out)) && earlier.views().all(|v| independent(n_out, v))
}

/// Checks that `segments` re-concatenate to `batch`, that every kernel is
/// legal pair by pair, and that every kernel ends only where the next
/// instruction could not have joined it.
pub fn check_segments(batch: &Batch, segments: &[Segment<'_>]) -> Result<(), String> {
    let mut next_index = 0;
    let mut previous_kernel: Option<&[Instruction]> = None;
    for seg in segments {
        let instrs = seg.instructions();
        let start = match seg {
            Segment::Kernel(k) => k.start,
            Segment::Single { index, .. } => *index,
        };
        if start != next_index {
            return Err(format!("segment starts at {start}, expected {next_index}"));
        }
        for (k, instr) in instrs.iter().enumerate() {
            if *instr != batch.instructions[start + k] {
                return Err(format!("instruction {} reordered", start + k));
            }
        }
        match seg {
            Segment::Kernel(k) => {
                if let Some(i) = instrs.iter().position(|i| !fusible(i)) {
                    return Err(format!("kernel at {} holds non-fusible instruction {}", k.start, k.start + i));
                }
                for j in 0..instrs.len() {
                    for i in 0..j {
                        if !pair_ok(&instrs[i], &instrs[j]) {
                            return Err(format!("kernel at {}: {} depends on {}", k.start, k.start + j, k.start + i));
                        }
                    }
                }
                if let Some(prev) = previous_kernel {
                    if prev.iter().all(|a| pair_ok(a, &instrs[0])) {
                        return Err(format!("kernel boundary before {} is not needed", k.start));
                    }
                }
                previous_kernel = Some(instrs);
            }
            Segment::Single { index, instruction } => {
                if fusible(instruction) {
                    return Err(format!("fusible instruction {index} ran alone"));
                }
                previous_kernel = None;
            }
        }
        next_index = start + instrs.len();
    }
    if next_index != batch.len() {
        return Err(format!("segments cover {next_index} of {} instructions", batch.len()));
    }
    Ok(())
}

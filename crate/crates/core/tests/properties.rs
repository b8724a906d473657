mod common;

use std::collections::BTreeSet;

use common::footprint::footprint;
use common::programs::generate;
use common::reference::{element, row_major_index};
use proptest::prelude::*;
use vvm_core::bytecode::{emit_asm, parse_asm, Instruction, Opcode};
use vvm_core::model::{may_share_data, ArrayBase, ArrayView, Constant, DType, SliceArg};

/// Positions selected by a Python slice on an axis of length `len`, by
/// walking the normalized range one step at a time.
fn slice_positions(len: usize, start: Option<isize>, stop: Option<isize>, step: isize) -> Vec<usize> {
    let n = len as isize;
    let clamp = |v: isize, lo: isize, hi: isize| v.max(lo).min(hi);
    let wrap = |v: isize| if v < 0 { v + n } else { v };
    let (first, end) = if step > 0 {
        (start.map_or(0, |s| clamp(wrap(s), 0, n)), stop.map_or(n, |s| clamp(wrap(s), 0, n)))
    } else {
        (start.map_or(n - 1, |s| clamp(wrap(s), -1, n - 1)), stop.map_or(-1, |s| clamp(wrap(s), -1, n - 1)))
    };
    let mut out = Vec::new();
    let mut i = first;
    while (step > 0 && i < end) || (step < 0 && i > end) {
        out.push(i as usize);
        i += step;
    }
    out
}

fn arg() -> impl Strategy<Value = (Option<isize>, Option<isize>, isize)> {
    (
        proptest::option::of(-9isize..9),
        proptest::option::of(-9isize..9),
        prop_oneof![1isize..4, -3isize..0],
    )
}

proptest! {
    #[test]
    fn slicing_selects_the_python_positions(
        rows in 1usize..7,
        cols in 1usize..7,
        a in arg(),
        b in arg(),
    ) {
        let base = ArrayBase::new(DType::Float64, rows * cols + 3);
        let parent = ArrayView::new(base, 3, &[rows, cols], &[cols as isize, 1]).unwrap();
        let view = parent
            .slice(&[SliceArg::Range { start: a.0, stop: a.1, step: a.2 }, SliceArg::Range { start: b.0, stop: b.1, step: b.2 }])
            .unwrap();
        let rs = slice_positions(rows, a.0, a.1, a.2);
        let cs = slice_positions(cols, b.0, b.1, b.2);
        prop_assert_eq!(view.shape(), &[rs.len(), cs.len()][..]);
        for (i, &r) in rs.iter().enumerate() {
            for (j, &c) in cs.iter().enumerate() {
                prop_assert_eq!(element(&view, &[i, j]), 3 + r * cols + c);
            }
        }
    }

    #[test]
    fn integer_index_drops_the_axis(rows in 1usize..7, cols in 1usize..7, pick in -7isize..7) {
        let base = ArrayBase::new(DType::Int64, rows * cols);
        let parent = ArrayView::contiguous(base, &[rows, cols]).unwrap();
        let pos = if pick < 0 { pick + rows as isize } else { pick };
        let result = parent.slice(&[SliceArg::Index(pick)]);
        if (0..rows as isize).contains(&pos) {
            let row = result.unwrap();
            prop_assert_eq!(row.shape(), &[cols][..]);
            let expected: Vec<usize> = (0..cols).map(|c| pos as usize * cols + c).collect();
            prop_assert_eq!(footprint(&row).into_iter().collect::<Vec<_>>(), expected);
        } else {
            prop_assert!(result.is_err());
        }
    }

    #[test]
    fn overlap_test_matches_enumerated_elements(
        len in 8usize..200,
        s1 in prop::collection::vec(-4isize..5, 1..3),
        s2 in prop::collection::vec(-4isize..5, 1..3),
        e1 in prop::collection::vec(1usize..6, 2),
        e2 in prop::collection::vec(1usize..6, 2),
        o1 in 0usize..200,
        o2 in 0usize..200,
    ) {
        let base = ArrayBase::new(DType::Float64, len);
        let make = |strides: &[isize], extents: &[usize], offset: usize| {
            let shape = &extents[..strides.len()];
            ArrayView::new(base.clone(), offset % len, shape, strides).ok()
        };
        if let (Some(a), Some(b)) = (make(&s1, &e1, o1), make(&s2, &e2, o2)) {
            let shared = !footprint(&a).is_disjoint(&footprint(&b));
            prop_assert_eq!(may_share_data(&a, &b), shared);
        }
    }

    #[test]
    fn broadcast_repeats_the_source(rows in 1usize..6, cols in 1usize..6, lead in 1usize..4, row_vector in any::<bool>()) {
        let src_shape = if row_vector { vec![1, cols] } else { vec![rows, 1] };
        let base = ArrayBase::new(DType::Float64, src_shape[0] * src_shape[1]);
        let src = ArrayView::contiguous(base, &src_shape).unwrap();
        let view = src.broadcast(&[lead, rows, cols]).unwrap();
        for flat in 0..view.len() {
            let idx = row_major_index(flat, view.shape());
            let source = if row_vector { [0, idx[2]] } else { [idx[1], 0] };
            prop_assert_eq!(element(&view, &idx), element(&src, &source));
        }
        let touched: BTreeSet<usize> = footprint(&view);
        prop_assert_eq!(touched, footprint(&src));
    }

    #[test]
    fn generated_programs_survive_assembly(seed in any::<u64>()) {
        let built = generate(seed).build();
        let text = emit_asm(&built.batch);
        let parsed = parse_asm(&text).unwrap();
        prop_assert_eq!(&parsed, &built.batch);
        prop_assert_eq!(emit_asm(&parsed), text);
    }

    #[test]
    fn float_constants_keep_their_bits(bits in any::<u64>(), narrow in any::<bool>()) {
        let base = ArrayBase::new(if narrow { DType::Float32 } else { DType::Float64 }, 4);
        let view = ArrayView::flat(base);
        let constant = if narrow { Constant::Float32(f32::from_bits(bits as u32)) } else { Constant::Float64(f64::from_bits(bits)) };
        let batch = vec![Instruction::binary(Opcode::Add, &view, &view, constant)].into();
        prop_assert_eq!(parse_asm(&emit_asm(&batch)).unwrap(), batch);
    }
}

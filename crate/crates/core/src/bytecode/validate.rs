use thiserror::Error;

use super::{Attr, Instruction, OpKind, Opcode, Operand};
use crate::model::DType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("{opcode} takes {expected} operands, got {found}")]
    ArityMismatch { opcode: Opcode, expected: usize, found: usize },
    #[error("{opcode}: operand shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch { opcode: Opcode, expected: Vec<usize>, found: Vec<usize> },
    #[error("{opcode}: dtype {found} where {expected} was expected")]
    DTypeMismatch { opcode: Opcode, expected: DType, found: DType },
    #[error("{opcode} is not defined for {dtype}")]
    UnsupportedDType { opcode: Opcode, dtype: DType },
    #[error("{opcode}: axis {axis} out of range for {ndim} dimensions")]
    AxisOutOfRange { opcode: Opcode, axis: usize, ndim: usize },
    #[error("{opcode}: reduction over an empty axis has no identity")]
    EmptyReduction { opcode: Opcode },
    #[error("{opcode}: missing or wrong attribute")]
    BadAttribute { opcode: Opcode },
    #[error("{opcode}: operand {index} must be a view")]
    ExpectedView { opcode: Opcode, index: usize },
}

fn supports(opcode: Opcode, dtype: DType) -> bool {
    use Opcode::*;
    match opcode {
        Identity | Equal | Random | Sync | Discard | Free | UserFunc => true,
        Sqrt => dtype.is_float(),
        _ => dtype.is_numeric(),
    }
}

/// Checks arity, shapes, dtypes and attributes of a single instruction.
pub fn validate(instr: &Instruction) -> Result<(), ValidationError> {
    let opcode = instr.opcode;
    let found = instr.operand_count();
    if let Some(expected) = opcode.arity() {
        if found != expected {
            return Err(ValidationError::ArityMismatch { opcode, expected, found });
        }
    } else if instr.out.is_none() {
        return Err(ValidationError::ArityMismatch { opcode, expected: 1, found });
    }
    match opcode.kind() {
        OpKind::System => {
            if instr.out.is_some() || instr.inputs.len() != 1 {
                return Err(ValidationError::ArityMismatch { opcode, expected: 1, found });
            }
            if instr.inputs[0].view().is_none() {
                return Err(ValidationError::ExpectedView { opcode, index: 0 });
            }
            Ok(())
        }
        OpKind::Elementwise => validate_elementwise(instr),
        OpKind::Reduction => validate_reduction(instr),
        OpKind::Generator => {
            out_view(instr)?;
            if !matches!(instr.attr, Some(Attr::Seed(_))) {
                return Err(ValidationError::BadAttribute { opcode });
            }
            Ok(())
        }
        OpKind::UserFunc => {
            out_view(instr)?;
            if !matches!(instr.attr, Some(Attr::Func(_))) {
                return Err(ValidationError::BadAttribute { opcode });
            }
            Ok(())
        }
    }
}

fn out_view(instr: &Instruction) -> Result<&crate::model::ArrayView, ValidationError> {
    instr.out.as_ref().ok_or(ValidationError::ArityMismatch {
        opcode: instr.opcode,
        expected: instr.opcode.arity().unwrap_or(1),
        found: instr.operand_count(),
    })
}

fn validate_elementwise(instr: &Instruction) -> Result<(), ValidationError> {
    let opcode = instr.opcode;
    let out = out_view(instr)?;
    if instr.attr.is_some() {
        return Err(ValidationError::BadAttribute { opcode });
    }
    let in_dtype = instr.inputs[0].dtype();
    for input in &instr.inputs {
        if input.dtype() != in_dtype {
            return Err(ValidationError::DTypeMismatch { opcode, expected: in_dtype, found: input.dtype() });
        }
        if let Operand::View(v) = input {
            if v.shape() != out.shape() {
                return Err(ValidationError::ShapeMismatch {
                    opcode,
                    expected: out.shape().to_vec(),
                    found: v.shape().to_vec(),
                });
            }
        }
    }
    if !supports(opcode, in_dtype) {
        return Err(ValidationError::UnsupportedDType { opcode, dtype: in_dtype });
    }
    let out_dtype = if opcode.is_comparison() { DType::Bool } else { in_dtype };
    if out.dtype() != out_dtype {
        return Err(ValidationError::DTypeMismatch { opcode, expected: out_dtype, found: out.dtype() });
    }
    Ok(())
}

/// Output shape of a reduction: the input shape with `axis` removed, or `[1]`
/// when nothing remains.
pub(crate) fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.iter().enumerate().filter(|&(d, _)| d != axis).map(|(_, &e)| e).collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn validate_reduction(instr: &Instruction) -> Result<(), ValidationError> {
    let opcode = instr.opcode;
    let out = out_view(instr)?;
    let Some(Operand::View(input)) = instr.inputs.first() else {
        return Err(ValidationError::ExpectedView { opcode, index: 1 });
    };
    let Some(Attr::Axis(axis)) = instr.attr else {
        return Err(ValidationError::BadAttribute { opcode });
    };
    if axis >= input.ndim() {
        return Err(ValidationError::AxisOutOfRange { opcode, axis, ndim: input.ndim() });
    }
    let expected = reduced_shape(input.shape(), axis);
    if out.shape() != expected.as_slice() {
        return Err(ValidationError::ShapeMismatch { opcode, expected, found: out.shape().to_vec() });
    }
    if !supports(opcode, input.dtype()) {
        return Err(ValidationError::UnsupportedDType { opcode, dtype: input.dtype() });
    }
    if out.dtype() != input.dtype() {
        return Err(ValidationError::DTypeMismatch { opcode, expected: input.dtype(), found: out.dtype() });
    }
    if opcode != Opcode::AddReduce && input.shape()[axis] == 0 && !out.is_empty() {
        return Err(ValidationError::EmptyReduction { opcode });
    }
    Ok(())
}

//! Array model: element types, bases, strided views and the aliasing queries
//! used by kernel formation.

mod dense;
mod dtype;
mod overlap;
mod view;

pub use dense::DenseArray;
pub use dtype::{Buffer, Constant, DType};
pub use overlap::{may_share_data, views_identical, EXACT_OVERLAP_LIMIT};
pub use view::{ArrayBase, ArrayView, BaseId, SliceArg};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    OutOfBounds { index: Vec<usize>, shape: Vec<usize> },
    #[error("invalid slice on axis {axis}: {reason}")]
    InvalidSlice { axis: usize, reason: &'static str },
    #[error("cannot broadcast shape {from:?} to {to:?}")]
    Broadcast { from: Vec<usize>, to: Vec<usize> },
    #[error("view does not fit base {base} of {nelem} elements")]
    ViewOutsideBase { base: BaseId, nelem: usize },
    #[error("malformed view: {0}")]
    Malformed(&'static str),
    #[error("unknown dtype `{0}`")]
    UnknownDType(String),
}

/// Number of elements addressed by `shape`.
pub fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major unravel of a flat index into `out`.
pub fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for d in (0..shape.len()).rev() {
        let extent = shape[d].max(1);
        out[d] = flat % extent;
        flat /= extent;
    }
}

/// Broadcast result of several shapes under right-aligned stretching rules.
pub fn broadcast_shapes<'a, I>(shapes: I) -> Result<Vec<usize>, ModelError>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut result: Vec<usize> = Vec::new();
    for shape in shapes {
        if shape.len() > result.len() {
            let mut padded = vec![1; shape.len() - result.len()];
            padded.extend_from_slice(&result);
            result = padded;
        }
        let lead = result.len() - shape.len();
        for (d, &extent) in shape.iter().enumerate() {
            let slot = &mut result[lead + d];
            if *slot == extent || extent == 1 {
                continue;
            }
            if *slot == 1 {
                *slot = extent;
            } else {
                return Err(ModelError::Broadcast { from: shape.to_vec(), to: result.clone() });
            }
        }
    }
    Ok(result)
}

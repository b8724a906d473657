use super::{shape_len, unravel, ArrayView, Buffer, Constant, DType, ModelError};

/// Row-major values with a shape, as handed to callers and user functions.
#[derive(Debug, Clone)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Buffer,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Buffer) -> Result<DenseArray, ModelError> {
        if shape.is_empty() {
            return Err(ModelError::Malformed("arrays need at least one dimension"));
        }
        if shape_len(&shape) != data.len() {
            return Err(ModelError::Malformed("data length does not match shape"));
        }
        Ok(DenseArray { shape, data })
    }

    pub fn zeros(shape: Vec<usize>, dtype: DType) -> DenseArray {
        let n = shape_len(&shape);
        DenseArray { shape, data: Buffer::zeros(dtype, n) }
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<DenseArray, ModelError> {
        DenseArray::new(shape, Buffer::Float64(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Buffer {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Buffer {
        &mut self.data
    }

    pub fn into_data(self) -> Buffer {
        self.data
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        self.data.as_f64()
    }

    pub fn get(&self, idx: &[usize]) -> Option<Constant> {
        if idx.len() != self.shape.len() || idx.iter().zip(&self.shape).any(|(i, e)| i >= e) {
            return None;
        }
        let flat = idx.iter().zip(&self.shape).fold(0, |acc, (i, e)| acc * e + i);
        self.data.get(flat)
    }

    /// Copies the elements `view` addresses in `source` (a whole base) into a new
    /// row-major array.
    pub fn gather(view: &ArrayView, source: &Buffer) -> DenseArray {
        let positions: Vec<usize> = view.footprint().collect();
        let data = match source {
            Buffer::Float64(s) => Buffer::Float64(positions.iter().map(|&p| s[p]).collect()),
            Buffer::Float32(s) => Buffer::Float32(positions.iter().map(|&p| s[p]).collect()),
            Buffer::Int64(s) => Buffer::Int64(positions.iter().map(|&p| s[p]).collect()),
            Buffer::Bool(s) => Buffer::Bool(positions.iter().map(|&p| s[p]).collect()),
        };
        DenseArray { shape: view.shape().to_vec(), data }
    }

    /// Writes this array's values through `view` into `target` (a whole base).
    /// Positions are written in row-major order.
    pub fn scatter(&self, view: &ArrayView, target: &mut Buffer) -> Result<(), ModelError> {
        if self.shape != view.shape() || self.dtype() != target.dtype() {
            return Err(ModelError::Malformed("scatter shape or dtype mismatch"));
        }
        match (&self.data, target) {
            (Buffer::Float64(s), Buffer::Float64(t)) => view.footprint().zip(s).for_each(|(p, &x)| t[p] = x),
            (Buffer::Float32(s), Buffer::Float32(t)) => view.footprint().zip(s).for_each(|(p, &x)| t[p] = x),
            (Buffer::Int64(s), Buffer::Int64(t)) => view.footprint().zip(s).for_each(|(p, &x)| t[p] = x),
            (Buffer::Bool(s), Buffer::Bool(t)) => view.footprint().zip(s).for_each(|(p, &x)| t[p] = x),
            _ => unreachable!("dtype checked above"),
        }
        Ok(())
    }

    /// Multi-index of a flat row-major position.
    pub fn index_of(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        unravel(flat, &self.shape, &mut idx);
        idx
    }
}

impl PartialEq for DenseArray {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data.bit_eq(&other.data)
    }
}

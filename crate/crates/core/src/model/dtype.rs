use std::fmt;
use std::str::FromStr;

use super::ModelError;

/// Element type of a base. The set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    Float64,
    Float32,
    Int64,
    Bool,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::Float64, DType::Float32, DType::Int64, DType::Bool];

    pub fn element_size(self) -> usize {
        match self {
            DType::Float64 | DType::Int64 => 8,
            DType::Float32 => 4,
            DType::Bool => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::Float64 => "float64",
            DType::Float32 => "float32",
            DType::Int64 => "int64",
            DType::Bool => "bool",
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DType::Float64 | DType::Float32)
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, DType::Bool)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "float64" | "f64" => Ok(DType::Float64),
            "float32" | "f32" => Ok(DType::Float32),
            "int64" | "i64" => Ok(DType::Int64),
            "bool" | "boolean" => Ok(DType::Bool),
            other => Err(ModelError::UnknownDType(other.to_string())),
        }
    }
}

/// A scalar operand embedded directly in an instruction.
#[derive(Debug, Clone, Copy)]
pub enum Constant {
    Float64(f64),
    Float32(f32),
    Int64(i64),
    Bool(bool),
}

impl Constant {
    pub fn dtype(&self) -> DType {
        match self {
            Constant::Float64(_) => DType::Float64,
            Constant::Float32(_) => DType::Float32,
            Constant::Int64(_) => DType::Int64,
            Constant::Bool(_) => DType::Bool,
        }
    }

    /// Converts with `as`-cast semantics; booleans map to 0/1 and back via `!= 0`.
    pub fn cast(self, dtype: DType) -> Constant {
        let (f, i, b) = match self {
            Constant::Float64(v) => (v, v as i64, v != 0.0),
            Constant::Float32(v) => (v as f64, v as i64, v != 0.0),
            Constant::Int64(v) => (v as f64, v, v != 0),
            Constant::Bool(v) => (v as i64 as f64, v as i64, v),
        };
        match (self, dtype) {
            (Constant::Float32(v), DType::Float32) => Constant::Float32(v),
            (_, DType::Float64) => Constant::Float64(f),
            (_, DType::Float32) => Constant::Float32(f as f32),
            (_, DType::Int64) => Constant::Int64(i),
            (_, DType::Bool) => Constant::Bool(b),
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Constant::Float64(v) => v,
            Constant::Float32(v) => v as f64,
            Constant::Int64(v) => v as f64,
            Constant::Bool(v) => v as u8 as f64,
        }
    }

    pub fn zero(dtype: DType) -> Constant {
        Constant::Int64(0).cast(dtype)
    }
}

// Bitwise equality so NaN constants compare equal to themselves after a round trip.
impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Constant::Float64(a), Constant::Float64(b)) => a.to_bits() == b.to_bits(),
            (Constant::Float32(a), Constant::Float32(b)) => a.to_bits() == b.to_bits(),
            (Constant::Int64(a), Constant::Int64(b)) => a == b,
            (Constant::Bool(a), Constant::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl From<f64> for Constant {
    fn from(v: f64) -> Self {
        Constant::Float64(v)
    }
}

impl From<f32> for Constant {
    fn from(v: f32) -> Self {
        Constant::Float32(v)
    }
}

impl From<i64> for Constant {
    fn from(v: i64) -> Self {
        Constant::Int64(v)
    }
}

impl From<bool> for Constant {
    fn from(v: bool) -> Self {
        Constant::Bool(v)
    }
}

/// Contiguous typed element storage.
#[derive(Debug, Clone)]
pub enum Buffer {
    Float64(Vec<f64>),
    Float32(Vec<f32>),
    Int64(Vec<i64>),
    Bool(Vec<bool>),
}

impl Buffer {
    pub fn zeros(dtype: DType, len: usize) -> Buffer {
        match dtype {
            DType::Float64 => Buffer::Float64(vec![0.0; len]),
            DType::Float32 => Buffer::Float32(vec![0.0; len]),
            DType::Int64 => Buffer::Int64(vec![0; len]),
            DType::Bool => Buffer::Bool(vec![false; len]),
        }
    }

    pub fn filled(value: Constant, len: usize) -> Buffer {
        match value {
            Constant::Float64(v) => Buffer::Float64(vec![v; len]),
            Constant::Float32(v) => Buffer::Float32(vec![v; len]),
            Constant::Int64(v) => Buffer::Int64(vec![v; len]),
            Constant::Bool(v) => Buffer::Bool(vec![v; len]),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            Buffer::Float64(_) => DType::Float64,
            Buffer::Float32(_) => DType::Float32,
            Buffer::Int64(_) => DType::Int64,
            Buffer::Bool(_) => DType::Bool,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::Float64(v) => v.len(),
            Buffer::Float32(v) => v.len(),
            Buffer::Int64(v) => v.len(),
            Buffer::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Option<Constant> {
        match self {
            Buffer::Float64(v) => v.get(index).map(|&x| Constant::Float64(x)),
            Buffer::Float32(v) => v.get(index).map(|&x| Constant::Float32(x)),
            Buffer::Int64(v) => v.get(index).map(|&x| Constant::Int64(x)),
            Buffer::Bool(v) => v.get(index).map(|&x| Constant::Bool(x)),
        }
    }

    /// Stores `value` cast to the buffer's dtype.
    pub fn set(&mut self, index: usize, value: Constant) {
        match (self, value) {
            (Buffer::Float64(v), c) => v[index] = c.to_f64(),
            (Buffer::Float32(v), c) => v[index] = c.to_f64() as f32,
            (Buffer::Int64(v), c) => {
                if let Constant::Int64(x) = c.cast(DType::Int64) {
                    v[index] = x;
                }
            }
            (Buffer::Bool(v), c) => {
                if let Constant::Bool(x) = c.cast(DType::Bool) {
                    v[index] = x;
                }
            }
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            Buffer::Float64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match self {
            Buffer::Int64(v) => Some(v),
            _ => None,
        }
    }

    /// Elementwise conversion to f64, used by checksums and reports.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            Buffer::Float64(v) => v.clone(),
            Buffer::Float32(v) => v.iter().map(|&x| x as f64).collect(),
            Buffer::Int64(v) => v.iter().map(|&x| x as f64).collect(),
            Buffer::Bool(v) => v.iter().map(|&x| x as u8 as f64).collect(),
        }
    }

    /// Bitwise equality, treating identical NaN payloads as equal.
    pub fn bit_eq(&self, other: &Buffer) -> bool {
        match (self, other) {
            (Buffer::Float64(a), Buffer::Float64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::Float32(a), Buffer::Float32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::Int64(a), Buffer::Int64(b)) => a == b,
            (Buffer::Bool(a), Buffer::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl From<Vec<f64>> for Buffer {
    fn from(v: Vec<f64>) -> Self {
        Buffer::Float64(v)
    }
}

impl From<Vec<f32>> for Buffer {
    fn from(v: Vec<f32>) -> Self {
        Buffer::Float32(v)
    }
}

impl From<Vec<i64>> for Buffer {
    fn from(v: Vec<i64>) -> Self {
        Buffer::Int64(v)
    }
}

impl From<Vec<bool>> for Buffer {
    fn from(v: Vec<bool>) -> Self {
        Buffer::Bool(v)
    }
}

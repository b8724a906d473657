//! Host implementations of operations the bytecode does not cover. Sorting
//! works along the last axis; NaN orders after every number and ties keep
//! their original order.

use std::cmp::Ordering;

use super::BridgeError;
use crate::model::{shape_len, Buffer, Constant, DType, DenseArray};

/// Names accepted by [`super::Runtime::fallback`].
pub const FALLBACK_OPS: &[&str] = &["sort", "argsort", "argpartition", "sum"];

pub(crate) enum NativeArg {
    Array(DenseArray),
    Scalar(Constant),
}

fn float_order<T: PartialOrd + Copy>(is_nan: fn(T) -> bool) -> impl Fn(&T, &T) -> Ordering {
    move |a, b| match (is_nan(*a), is_nan(*b)) {
        (false, false) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
        (x, y) => x.cmp(&y),
    }
}

/// Stable order of each of `rows` rows of length `width`.
fn row_orders<T: Copy>(data: &[T], rows: usize, width: usize, cmp: impl Fn(&T, &T) -> Ordering) -> Vec<Vec<usize>> {
    (0..rows)
        .map(|r| {
            let row = &data[r * width..(r + 1) * width];
            let mut idx: Vec<usize> = (0..width).collect();
            idx.sort_by(|&i, &j| cmp(&row[i], &row[j]));
            idx
        })
        .collect()
}

fn orders(values: &DenseArray) -> Vec<Vec<usize>> {
    let (lead, last) = values.shape().split_at(values.shape().len() - 1);
    let (rows, width) = (shape_len(lead), last[0]);
    match values.data() {
        Buffer::Float64(d) => row_orders(d, rows, width, float_order(f64::is_nan)),
        Buffer::Float32(d) => row_orders(d, rows, width, float_order(f32::is_nan)),
        Buffer::Int64(d) => row_orders(d, rows, width, i64::cmp),
        Buffer::Bool(d) => row_orders(d, rows, width, bool::cmp),
    }
}

fn permute(data: &Buffer, width: usize, orders: &[Vec<usize>]) -> Buffer {
    fn apply<T: Copy>(d: &[T], width: usize, orders: &[Vec<usize>]) -> Vec<T> {
        orders.iter().enumerate().flat_map(|(r, o)| o.iter().map(move |&i| d[r * width + i])).collect()
    }
    match data {
        Buffer::Float64(d) => Buffer::Float64(apply(d, width, orders)),
        Buffer::Float32(d) => Buffer::Float32(apply(d, width, orders)),
        Buffer::Int64(d) => Buffer::Int64(apply(d, width, orders)),
        Buffer::Bool(d) => Buffer::Bool(apply(d, width, orders)),
    }
}

fn single_array<'a>(op: &str, args: &'a [NativeArg]) -> Result<&'a DenseArray, BridgeError> {
    match args {
        [NativeArg::Array(a), ..] => Ok(a),
        _ => Err(BridgeError::BadArgument(format!("{op} needs an array as its first argument"))),
    }
}

pub(crate) fn evaluate(op: &str, args: &[NativeArg]) -> Result<DenseArray, BridgeError> {
    let values = single_array(op, args)?;
    let width = *values.shape().last().expect("at least one dimension");
    match op {
        "sort" => {
            let data = permute(values.data(), width, &orders(values));
            Ok(DenseArray::new(values.shape().to_vec(), data)?)
        }
        "argsort" => {
            let idx: Vec<i64> = orders(values).into_iter().flatten().map(|i| i as i64).collect();
            Ok(DenseArray::new(values.shape().to_vec(), Buffer::Int64(idx))?)
        }
        "argpartition" => {
            let k = match args.get(1) {
                Some(NativeArg::Scalar(c)) => match c.cast(DType::Int64) {
                    Constant::Int64(k) if k >= 0 => k as usize,
                    _ => return Err(BridgeError::BadArgument("k must be non-negative".into())),
                },
                _ => return Err(BridgeError::BadArgument("argpartition needs a scalar k".into())),
            };
            if k > width {
                return Err(BridgeError::BadArgument(format!("k = {k} exceeds axis length {width}")));
            }
            let idx: Vec<i64> = orders(values).into_iter().flat_map(|o| o.into_iter().take(k)).map(|i| i as i64).collect();
            let mut shape = values.shape().to_vec();
            *shape.last_mut().expect("at least one dimension") = k;
            Ok(DenseArray::new(shape, Buffer::Int64(idx))?)
        }
        "sum" => {
            let data = match values.data() {
                Buffer::Float64(d) => Buffer::Float64(vec![d.iter().fold(0.0, |a, &x| a + x)]),
                Buffer::Float32(d) => Buffer::Float32(vec![d.iter().fold(0.0, |a, &x| a + x)]),
                Buffer::Int64(d) => Buffer::Int64(vec![d.iter().fold(0i64, |a, &x| a.wrapping_add(x))]),
                Buffer::Bool(d) => Buffer::Int64(vec![d.iter().filter(|&&x| x).count() as i64]),
            };
            Ok(DenseArray::new(vec![1], data)?)
        }
        other => Err(BridgeError::UnsupportedOperation(other.to_string())),
    }
}

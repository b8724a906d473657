//! Naive k-nearest-neighbour search. Squared distances between every query
//! and every point are computed in the managed space by broadcasting; the
//! selection of the k smallest runs natively. Equal distances resolve to the
//! lower point index.

use super::AppError;
use crate::bridge::{Arg, ManagedArray, Runtime};
use crate::model::{DType, DenseArray};

/// Coordinates per point in [`knn`].
pub const KNN_DIMS: usize = 3;

pub const KNN_POINT_SEED: u64 = 0x6b6e_6e5f_7074;
pub const KNN_QUERY_SEED: u64 = 0x6b6e_6e5f_7179;

/// Indices of the `k` nearest `points` (shape `[n, d]`) for each query
/// (shape `[q, d]`), nearest first. Returns a `[q, k]` Int64 array.
pub fn knn_select(points: &ManagedArray, queries: &ManagedArray, k: usize) -> Result<DenseArray, AppError> {
    let (n, dims) = match points.shape() {
        &[n, d] => (n, d),
        other => return Err(AppError::Parameter(format!("points must be two-dimensional, got {other:?}"))),
    };
    if queries.ndim() != 2 || queries.shape()[1] != dims {
        return Err(AppError::Parameter(format!("queries {:?} do not match points {:?}", queries.shape(), points.shape())));
    }
    if k > n {
        return Err(AppError::Parameter(format!("k = {k} exceeds the {n} available points")));
    }
    let diff = points.insert_axis(0)?.sub(&queries.insert_axis(1)?)?;
    let distances = diff.mul(&diff)?.sum_axis(2)?;
    let rt = points.runtime();
    let nearest = rt.fallback("argpartition", &[Arg::from(&distances), Arg::from(k as i64)])?;
    Ok(nearest.read()?)
}

/// `q` random queries against `n` random points in the unit cube.
pub fn knn(rt: &Runtime, n: usize, q: usize, k: usize) -> Result<DenseArray, AppError> {
    if n == 0 || q == 0 {
        return Err(AppError::Parameter("knn needs at least one point and one query".into()));
    }
    if k > n {
        return Err(AppError::Parameter(format!("k = {k} exceeds the {n} available points")));
    }
    let points = rt.random(&[n, KNN_DIMS], DType::Float64, KNN_POINT_SEED)?;
    let queries = rt.random(&[q, KNN_DIMS], DType::Float64, KNN_QUERY_SEED)?;
    knn_select(&points, &queries, k)
}

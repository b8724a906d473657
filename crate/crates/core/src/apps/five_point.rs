//! Five-point stencil sweeps. The grid has its border fixed at 1 and its
//! interior starting at 0; each step runs
//!
//! ```text
//! work[:] = center
//! work += 0.2 * (up + down + left + right)
//! center[:] = work
//! ```

use super::AppError;
use crate::bridge::{ManagedArray, Runtime};
use crate::model::{DType, DenseArray};
use crate::s;

struct Grid {
    full: ManagedArray,
    center: ManagedArray,
    up: ManagedArray,
    down: ManagedArray,
    left: ManagedArray,
    right: ManagedArray,
    work: ManagedArray,
}

impl Grid {
    fn new(rt: &Runtime, rows: usize, cols: usize) -> Result<Grid, AppError> {
        if rows < 3 || cols < 3 {
            return Err(AppError::Parameter(format!("grid {rows}x{cols} needs at least 3 rows and 3 columns")));
        }
        let full = rt.zeros(&[rows, cols], DType::Float64)?;
        for edge in [s![0, ..], s![-1, ..], s![.., 0], s![.., -1]] {
            full.slice(&edge)?.assign(1.0)?;
        }
        Ok(Grid {
            center: full.slice(&s![1..-1, 1..-1])?,
            up: full.slice(&s![0..-2, 1..-1])?,
            down: full.slice(&s![2.., 1..-1])?,
            left: full.slice(&s![1..-1, 0..-2])?,
            right: full.slice(&s![1..-1, 2..])?,
            work: rt.empty(&[rows - 2, cols - 2], DType::Float64)?,
            full,
        })
    }

    fn step(&self) -> Result<(), AppError> {
        self.work.assign(&self.center)?;
        let neighbours = self.up.add(&self.down)?.add(&self.left)?.add(&self.right)?;
        self.work.add_assign(neighbours.mul(0.2)?)?;
        self.center.assign(&self.work)?;
        Ok(())
    }
}

/// Synthetic stencil: `steps` updates of a `rows` x `cols` grid. Returns the
/// full grid.
pub fn stencil(rt: &Runtime, rows: usize, cols: usize, steps: usize) -> Result<DenseArray, AppError> {
    let grid = Grid::new(rt, rows, cols)?;
    for _ in 0..steps {
        grid.step()?;
    }
    Ok(grid.full.read()?)
}

/// Jacobi iteration on an `n` x `n` grid for a fixed number of sweeps. The
/// residual `sum(|work - center|)` is recorded every sweep, as a convergence
/// loop would, and only the last one is read.
pub fn jacobi(rt: &Runtime, n: usize, iters: usize) -> Result<DenseArray, AppError> {
    let grid = Grid::new(rt, n, n)?;
    let mut residual = None;
    for _ in 0..iters {
        grid.work.assign(&grid.center)?;
        let neighbours = grid.up.add(&grid.down)?.add(&grid.left)?.add(&grid.right)?;
        grid.work.add_assign(neighbours.mul(0.2)?)?;
        residual = Some(grid.work.sub(&grid.center)?.abs()?.sum()?);
        grid.center.assign(&grid.work)?;
    }
    if let Some(r) = residual {
        let r = r.read()?;
        log::debug!(target: "vvm::jacobi", "final residual {:?}", r.as_f64().map(|v| v[0]));
    }
    Ok(grid.full.read()?)
}

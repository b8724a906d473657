//! Shallow-water simulation after John Burkardt's `shallow_water_2d`: height
//! `H` and momenta `U`, `V` on an `(n+2)`-square grid with a one-cell ghost
//! border, a two-step Lax–Wendroff update on staggered `(n+1)`-square grids,
//! and reflective walls. Constants follow the reference translation:
//! `g = 9.8`, `dt = 0.02`, `dx = dy = 1`. Squares are written `x * x`.
//!
//! The initial water column is flat at height 1 with a Gaussian droplet added
//! to the interior. The droplet is built natively and migrated on first use.

use super::AppError;
use crate::bridge::{ManagedArray, Runtime, Space};
use crate::model::{DType, DenseArray};
use crate::s;

pub const GRAVITY: f64 = 9.8;
pub const TIME_STEP: f64 = 0.02;
pub const GRID_SPACING: f64 = 1.0;

type Field = Result<ManagedArray, AppError>;

/// `exp(-5 (x² + y²))` sampled on an `n` x `n` grid over `[-1, 1]²`.
pub fn droplet(n: usize) -> DenseArray {
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    let values = (0..n)
        .flat_map(|r| (0..n).map(move |c| (coord(r), coord(c))))
        .map(|(y, x)| (-5.0 * (x * x + y * y)).exp())
        .collect();
    DenseArray::from_f64(vec![n, n], values).expect("shape matches data")
}

fn mean(a: &ManagedArray, b: &ManagedArray) -> Field {
    Ok(a.add(b)?.div(2.0)?)
}

/// `u*u/h + g/2*(h*h)`
fn pressure_flux(u: &ManagedArray, h: &ManagedArray) -> Field {
    let advect = u.mul(u)?.div(h)?;
    Ok(advect.add(h.mul(h)?.mul(GRAVITY / 2.0)?)?)
}

/// `a*b/h`
fn cross_flux(a: &ManagedArray, b: &ManagedArray, h: &ManagedArray) -> Field {
    Ok(a.mul(b)?.div(h)?)
}

/// `base - coef * (hi - lo)`
fn update(base: &ManagedArray, coef: f64, hi: &ManagedArray, lo: &ManagedArray) -> Field {
    Ok(base.sub(hi.sub(lo)?.mul(coef)?)?)
}

struct State {
    h: ManagedArray,
    u: ManagedArray,
    v: ManagedArray,
    hx: ManagedArray,
    ux: ManagedArray,
    vx: ManagedArray,
    hy: ManagedArray,
    uy: ManagedArray,
    vy: ManagedArray,
}

impl State {
    fn reflect(&self) -> Result<(), AppError> {
        let (h, u, v) = (&self.h, &self.u, &self.v);
        for (ghost, inner) in [(0isize, 1isize), (-1, -2)] {
            h.slice(&s![.., ghost])?.assign(&h.slice(&s![.., inner])?)?;
            u.slice(&s![.., ghost])?.assign(&u.slice(&s![.., inner])?)?;
            v.slice(&s![.., ghost])?.assign(v.slice(&s![.., inner])?.neg()?)?;
        }
        for (ghost, inner) in [(0isize, 1isize), (-1, -2)] {
            h.slice(&s![ghost, ..])?.assign(&h.slice(&s![inner, ..])?)?;
            u.slice(&s![ghost, ..])?.assign(u.slice(&s![inner, ..])?.neg()?)?;
            v.slice(&s![ghost, ..])?.assign(&v.slice(&s![inner, ..])?)?;
        }
        Ok(())
    }

    fn half_step(&self) -> Result<(), AppError> {
        let cx = TIME_STEP / (2.0 * GRID_SPACING);
        let cy = TIME_STEP / (2.0 * GRID_SPACING);

        let south = s![1.., 1..-1];
        let north = s![..-1, 1..-1];
        let (h1, h0) = (self.h.slice(&south)?, self.h.slice(&north)?);
        let (u1, u0) = (self.u.slice(&south)?, self.u.slice(&north)?);
        let (v1, v0) = (self.v.slice(&south)?, self.v.slice(&north)?);
        let target = s![.., ..-1];
        self.hx.slice(&target)?.assign(update(&mean(&h1, &h0)?, cx, &u1, &u0)?)?;
        self.ux.slice(&target)?.assign(update(&mean(&u1, &u0)?, cx, &pressure_flux(&u1, &h1)?, &pressure_flux(&u0, &h0)?)?)?;
        self.vx.slice(&target)?.assign(update(
            &mean(&v1, &v0)?,
            cx,
            &cross_flux(&u1, &v1, &h1)?,
            &cross_flux(&u0, &v0, &h0)?,
        )?)?;

        let east = s![1..-1, 1..];
        let west = s![1..-1, ..-1];
        let (hr, hl) = (self.h.slice(&east)?, self.h.slice(&west)?);
        let (ur, ul) = (self.u.slice(&east)?, self.u.slice(&west)?);
        let (vr, vl) = (self.v.slice(&east)?, self.v.slice(&west)?);
        let target = s![..-1, ..];
        self.hy.slice(&target)?.assign(update(&mean(&hr, &hl)?, cy, &vr, &vl)?)?;
        self.uy.slice(&target)?.assign(update(
            &mean(&ur, &ul)?,
            cy,
            &cross_flux(&vr, &ur, &hr)?,
            &cross_flux(&vl, &ul, &hl)?,
        )?)?;
        self.vy.slice(&target)?.assign(update(&mean(&vr, &vl)?, cy, &pressure_flux(&vr, &hr)?, &pressure_flux(&vl, &hl)?)?)?;
        Ok(())
    }

    fn full_step(&self) -> Result<(), AppError> {
        let cx = TIME_STEP / GRID_SPACING;
        let cy = TIME_STEP / GRID_SPACING;

        let (xa, xb) = (s![1.., ..-1], s![..-1, ..-1]);
        let (hxa, hxb) = (self.hx.slice(&xa)?, self.hx.slice(&xb)?);
        let (uxa, uxb) = (self.ux.slice(&xa)?, self.ux.slice(&xb)?);
        let (vxa, vxb) = (self.vx.slice(&xa)?, self.vx.slice(&xb)?);
        let (ya, yb) = (s![..-1, 1..], s![..-1, ..-1]);
        let (hya, hyb) = (self.hy.slice(&ya)?, self.hy.slice(&yb)?);
        let (uya, uyb) = (self.uy.slice(&ya)?, self.uy.slice(&yb)?);
        let (vya, vyb) = (self.vy.slice(&ya)?, self.vy.slice(&yb)?);

        let interior = s![1..-1, 1..-1];
        let h = self.h.slice(&interior)?;
        let next = update(&update(&h, cx, &uxa, &uxb)?, cy, &vya, &vyb)?;
        h.assign(next)?;

        let u = self.u.slice(&interior)?;
        let next = update(&u, cx, &pressure_flux(&uxa, &hxa)?, &pressure_flux(&uxb, &hxb)?)?;
        let next = update(&next, cy, &cross_flux(&vya, &uya, &hya)?, &cross_flux(&vyb, &uyb, &hyb)?)?;
        u.assign(next)?;

        let v = self.v.slice(&interior)?;
        let next = update(&v, cx, &cross_flux(&uxa, &vxa, &hxa)?, &cross_flux(&uxb, &vxb, &hxb)?)?;
        let next = update(&next, cy, &pressure_flux(&vya, &hya)?, &pressure_flux(&vyb, &hyb)?)?;
        v.assign(next)?;
        Ok(())
    }
}

/// Runs `steps` time steps on an `n` x `n` interior. Returns the height
/// field including its ghost border.
pub fn shallow_water(rt: &Runtime, n: usize, steps: usize) -> Result<DenseArray, AppError> {
    if n < 4 {
        return Err(AppError::Parameter(format!("shallow water needs n >= 4, got {n}")));
    }
    let outer = [n + 2, n + 2];
    let staggered = [n + 1, n + 1];
    let state = State {
        h: rt.full(&outer, 1.0)?,
        u: rt.zeros(&outer, DType::Float64)?,
        v: rt.zeros(&outer, DType::Float64)?,
        hx: rt.zeros(&staggered, DType::Float64)?,
        ux: rt.zeros(&staggered, DType::Float64)?,
        vx: rt.zeros(&staggered, DType::Float64)?,
        hy: rt.zeros(&staggered, DType::Float64)?,
        uy: rt.zeros(&staggered, DType::Float64)?,
        vy: rt.zeros(&staggered, DType::Float64)?,
    };
    let drop = rt.from_dense(droplet(n), Space::Native)?;
    state.h.slice(&s![1..-1, 1..-1])?.add_assign(&drop)?;
    for _ in 0..steps {
        state.reflect()?;
        state.half_step()?;
        state.full_step()?;
    }
    Ok(state.h.read()?)
}

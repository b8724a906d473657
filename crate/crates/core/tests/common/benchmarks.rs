//! The four benchmark programs written as plain loops over `Vec<f64>`, with
//! the same arithmetic per element so results can be compared bit for bit.

use super::uniform_doubles;

pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    fn filled(rows: usize, cols: usize, value: f64) -> Grid {
        Grid { rows, cols, data: vec![value; rows * cols] }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn put(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }
}

fn bordered(rows: usize, cols: usize) -> Grid {
    let mut g = Grid::filled(rows, cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            if r == 0 || c == 0 || r == rows - 1 || c == cols - 1 {
                g.put(r, c, 1.0);
            }
        }
    }
    g
}

fn sweep(g: &mut Grid) {
    let mut next = Vec::with_capacity((g.rows - 2) * (g.cols - 2));
    for r in 1..g.rows - 1 {
        for c in 1..g.cols - 1 {
            let around = g.at(r - 1, c) + g.at(r + 1, c) + g.at(r, c - 1) + g.at(r, c + 1);
            next.push(g.at(r, c) + around * 0.2);
        }
    }
    let mut it = next.into_iter();
    for r in 1..g.rows - 1 {
        for c in 1..g.cols - 1 {
            g.put(r, c, it.next().expect("one value per interior cell"));
        }
    }
}

pub fn stencil(rows: usize, cols: usize, steps: usize) -> Vec<f64> {
    let mut g = bordered(rows, cols);
    for _ in 0..steps {
        sweep(&mut g);
    }
    g.data
}

pub fn jacobi(n: usize, iters: usize) -> Vec<f64> {
    stencil(n, n, iters)
}

/// Nearest `k` point indices per query; ties go to the lower index.
pub fn knn(n: usize, q: usize, k: usize, dims: usize, point_seed: u64, query_seed: u64) -> Vec<i64> {
    let points = uniform_doubles(point_seed, n * dims);
    let queries = uniform_doubles(query_seed, q * dims);
    let mut out = Vec::with_capacity(q * k);
    for qi in 0..q {
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|p| {
                let sq = |d: usize| {
                    let diff = points[p * dims + d] - queries[qi * dims + d];
                    diff * diff
                };
                ((1..dims).fold(sq(0), |acc, d| acc + sq(d)), p)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(dist.iter().take(k).map(|&(_, p)| p as i64));
    }
    out
}

const G: f64 = 9.8;
const DT: f64 = 0.02;
const DX: f64 = 1.0;

fn pf(u: f64, h: f64) -> f64 {
    u * u / h + h * h * (G / 2.0)
}

fn cf(a: f64, b: f64, h: f64) -> f64 {
    a * b / h
}

fn upd(base: f64, coef: f64, hi: f64, lo: f64) -> f64 {
    base - (hi - lo) * coef
}

fn mean(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

/// Height field, ghost border included, after `steps` time steps.
pub fn shallow_water(n: usize, steps: usize) -> Vec<f64> {
    let m = n + 2;
    let s = n + 1;
    let mut h = Grid::filled(m, m, 1.0);
    let mut u = Grid::filled(m, m, 0.0);
    let mut v = Grid::filled(m, m, 0.0);
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    for r in 0..n {
        for c in 0..n {
            let (y, x) = (coord(r), coord(c));
            let bump = (-5.0 * (x * x + y * y)).exp();
            h.put(r + 1, c + 1, h.at(r + 1, c + 1) + bump);
        }
    }
    let mut hx = Grid::filled(s, s, 0.0);
    let mut ux = Grid::filled(s, s, 0.0);
    let mut vx = Grid::filled(s, s, 0.0);
    let mut hy = Grid::filled(s, s, 0.0);
    let mut uy = Grid::filled(s, s, 0.0);
    let mut vy = Grid::filled(s, s, 0.0);

    for _ in 0..steps {
        for (ghost, inner) in [(0, 1), (m - 1, m - 2)] {
            for r in 0..m {
                h.put(r, ghost, h.at(r, inner));
                u.put(r, ghost, u.at(r, inner));
                v.put(r, ghost, -v.at(r, inner));
            }
        }
        for (ghost, inner) in [(0, 1), (m - 1, m - 2)] {
            for c in 0..m {
                h.put(ghost, c, h.at(inner, c));
                u.put(ghost, c, -u.at(inner, c));
                v.put(ghost, c, v.at(inner, c));
            }
        }

        let half = DT / (2.0 * DX);
        for i in 0..s {
            for j in 0..n {
                let (h1, h0) = (h.at(i + 1, j + 1), h.at(i, j + 1));
                let (u1, u0) = (u.at(i + 1, j + 1), u.at(i, j + 1));
                let (v1, v0) = (v.at(i + 1, j + 1), v.at(i, j + 1));
                hx.put(i, j, upd(mean(h1, h0), half, u1, u0));
                ux.put(i, j, upd(mean(u1, u0), half, pf(u1, h1), pf(u0, h0)));
                vx.put(i, j, upd(mean(v1, v0), half, cf(u1, v1, h1), cf(u0, v0, h0)));
            }
        }
        for i in 0..n {
            for j in 0..s {
                let (hr, hl) = (h.at(i + 1, j + 1), h.at(i + 1, j));
                let (ur, ul) = (u.at(i + 1, j + 1), u.at(i + 1, j));
                let (vr, vl) = (v.at(i + 1, j + 1), v.at(i + 1, j));
                hy.put(i, j, upd(mean(hr, hl), half, vr, vl));
                uy.put(i, j, upd(mean(ur, ul), half, cf(vr, ur, hr), cf(vl, ul, hl)));
                vy.put(i, j, upd(mean(vr, vl), half, pf(vr, hr), pf(vl, hl)));
            }
        }

        let full = DT / DX;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = ((i + 1, j), (i, j));
                let (ya, yb) = ((i, j + 1), (i, j));
                let hn = upd(upd(h.at(i + 1, j + 1), full, ux.at(a.0, a.1), ux.at(b.0, b.1)), full, vy.at(ya.0, ya.1), vy.at(yb.0, yb.1));
                h.put(i + 1, j + 1, hn);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = ((i + 1, j), (i, j));
                let (ya, yb) = ((i, j + 1), (i, j));
                let x_step = upd(
                    u.at(i + 1, j + 1),
                    full,
                    pf(ux.at(a.0, a.1), hx.at(a.0, a.1)),
                    pf(ux.at(b.0, b.1), hx.at(b.0, b.1)),
                );
                let un = upd(
                    x_step,
                    full,
                    cf(vy.at(ya.0, ya.1), uy.at(ya.0, ya.1), hy.at(ya.0, ya.1)),
                    cf(vy.at(yb.0, yb.1), uy.at(yb.0, yb.1), hy.at(yb.0, yb.1)),
                );
                u.put(i + 1, j + 1, un);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = ((i + 1, j), (i, j));
                let (ya, yb) = ((i, j + 1), (i, j));
                let x_step = upd(
                    v.at(i + 1, j + 1),
                    full,
                    cf(ux.at(a.0, a.1), vx.at(a.0, a.1), hx.at(a.0, a.1)),
                    cf(ux.at(b.0, b.1), vx.at(b.0, b.1), hx.at(b.0, b.1)),
                );
                let vn = upd(
                    x_step,
                    full,
                    pf(vy.at(ya.0, ya.1), hy.at(ya.0, ya.1)),
                    pf(vy.at(yb.0, yb.1), hy.at(yb.0, yb.1)),
                );
                v.put(i + 1, j + 1, vn);
            }
        }
    }
    h.data
}

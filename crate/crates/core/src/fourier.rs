//! Solvers diagonalised by the discrete Fourier transform in the periodic direction.
//!
//! All constant-coefficient operators on the staggered grid commute with shifts in x1, so after
//! a row-wise FFT each wavenumber decouples into a one-dimensional problem in x2. The Neumann
//! pressure problem is tridiagonal; the coupled Stokes/heat system is banded and is factored once.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid_fields::{CellField, Grid, VelocityField};

/// Row-wise real-to-complex transforms of length `nx`.
pub(crate) struct RowFft {
    nx: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RowFft {
    pub fn new(nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        RowFft { nx, fwd: planner.plan_fft_forward(nx), inv: planner.plan_fft_inverse(nx) }
    }

    /// `f_hat[r*nx + m] = sum_i f[r*nx + i] e^{-2 pi i m i / nx}`.
    pub fn forward(&self, data: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = data.iter().map(|&x| C64::new(x, 0.0)).collect();
        for row in buf.chunks_exact_mut(self.nx) {
            self.fwd.process(row);
        }
        buf
    }

    /// Inverse transform, returning the real part.
    pub fn inverse(&self, mut spec: Vec<C64>) -> Vec<f64> {
        let s = 1.0 / self.nx as f64;
        for row in spec.chunks_exact_mut(self.nx) {
            self.inv.process(row);
        }
        spec.iter().map(|z| z.re * s).collect()
    }
}

/// Symbol data for wavenumber `m`.
#[derive(Clone, Copy)]
struct Symbols {
    /// eigenvalue of the periodic second difference, `(2 - 2 cos w) / hx^2`
    lam: f64,
    /// forward difference `(e^{iw} - 1) / hx`
    fwd: C64,
    /// backward difference `(1 - e^{-iw}) / hx`
    bwd: C64,
}

fn symbols(g: &Grid, m: usize) -> Symbols {
    let w = 2.0 * std::f64::consts::PI * m as f64 / g.nx as f64;
    let e = C64::new(w.cos(), w.sin());
    Symbols {
        lam: (2.0 - 2.0 * w.cos()) / (g.hx * g.hx),
        fwd: (e - 1.0) / g.hx,
        bwd: (C64::new(1.0, 0.0) - e.conj()) / g.hx,
    }
}

/// Solve a tridiagonal system in place (no pivoting; used on diagonally dominant rows).
fn thomas(a: &[C64], b: &[C64], c: &[C64], d: &mut [C64]) -> Result<()> {
    let n = d.len();
    let mut cp = vec![C64::new(0.0, 0.0); n];
    let mut beta = b[0];
    if beta.norm() == 0.0 {
        return Err(Error::LinearSolve("zero pivot in tridiagonal sweep".into()));
    }
    d[0] /= beta;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i - 1];
        if beta.norm() == 0.0 {
            return Err(Error::LinearSolve("zero pivot in tridiagonal sweep".into()));
        }
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let t = cp[i] * d[i + 1];
        d[i] -= t;
    }
    Ok(())
}

/// `D G q = f` with homogeneous Neumann data in x2; the mean of `q` is pinned through its first
/// entry at wavenumber zero.
pub(crate) struct NeumannPoisson {
    grid: Grid,
    fft: RowFft,
}

impl NeumannPoisson {
    pub fn new(g: &Grid) -> Self {
        NeumannPoisson { grid: *g, fft: RowFft::new(g.nx) }
    }

    pub fn solve(&self, f: &CellField) -> CellField {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut spec = self.fft.forward(&f.data);
        let iy2 = 1.0 / (g.hy * g.hy);
        let z = C64::new(0.0, 0.0);
        let mut a = vec![z; ny];
        let mut b = vec![z; ny];
        let mut c = vec![z; ny];
        let mut d = vec![z; ny];
        for m in 0..=nx / 2 {
            let s = symbols(g, m);
            for j in 0..ny {
                let mut diag = -s.lam;
                a[j] = z;
                c[j] = z;
                if j > 0 {
                    diag -= iy2;
                    a[j] = C64::new(iy2, 0.0);
                }
                if j + 1 < ny {
                    diag -= iy2;
                    c[j] = C64::new(iy2, 0.0);
                }
                b[j] = C64::new(diag, 0.0);
                d[j] = spec[j * nx + m];
            }
            if m == 0 {
                b[0] = C64::new(1.0, 0.0);
                c[0] = z;
                d[0] = z;
            }
            // diagonal dominance holds for every m, so the sweep cannot break down
            thomas(&a, &b, &c, &mut d).expect("Neumann sweep");
            for j in 0..ny {
                spec[j * nx + m] = d[j];
                if m != 0 && 2 * m != nx {
                    spec[j * nx + nx - m] = d[j].conj();
                }
            }
        }
        CellField { nx, ny, data: self.fft.inverse(spec) }
    }
}

/// Banded LU with partial pivoting; row `i` stores columns `i-kl ..= i+kl+ku`.
pub(crate) struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    a: Vec<C64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        BandLu { n, kl, ku, w, a: vec![C64::new(0.0, 0.0); n * w], piv: vec![0; n] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.w + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i},{j}) outside the band");
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for col in 0..n {
            let last = (col + kl).min(n - 1);
            let mut p = col;
            let mut best = self.a[self.idx(col, col)].norm();
            for r in col + 1..=last {
                let v = self.a[self.idx(r, col)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::LinearSolve(format!("singular band matrix at column {col}")));
            }
            self.piv[col] = p;
            let right = (col + kl + ku).min(n - 1);
            if p != col {
                for j in col..=right {
                    let (x, y) = (self.idx(col, j), self.idx(p, j));
                    self.a.swap(x, y);
                }
            }
            let pivot = self.a[self.idx(col, col)];
            for r in col + 1..=last {
                let k = self.idx(r, col);
                let l = self.a[k] / pivot;
                self.a[k] = l;
                if l.norm() == 0.0 {
                    continue;
                }
                for j in col + 1..=right {
                    let u = self.a[self.idx(col, j)];
                    let t = self.idx(r, j);
                    self.a[t] -= l * u;
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for col in 0..n {
            let p = self.piv[col];
            if p != col {
                b.swap(col, p);
            }
            let x = b[col];
            for r in col + 1..=(col + kl).min(n - 1) {
                b[r] -= self.a[self.idx(r, col)] * x;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.a[self.idx(i, i)];
        }
    }
}

/// Coefficients of the constant-coefficient coupled system
/// `alpha v + visc A1 v - buoy E th + G p = r_v`, `D v = 0`,
/// `alpha th + diff A2 th - buoy E' v2 = r_th`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CoupledCoeffs {
    pub alpha: f64,
    pub visc: f64,
    pub diff: f64,
    pub buoy: f64,
}

/// Direct solver for the coupled system, one banded factorisation per wavenumber.
pub(crate) struct CoupledSolver {
    grid: Grid,
    fft: RowFft,
    lus: Vec<BandLu>,
}

const NC: usize = 4; // u1, u2, th, p per level

impl CoupledSolver {
    pub fn new(g: &Grid, co: CoupledCoeffs) -> Result<Self> {
        let mut lus = Vec::with_capacity(g.nx / 2 + 1);
        for m in 0..=g.nx / 2 {
            let mut lu = assemble(g, co, m);
            lu.factor()?;
            lus.push(lu);
        }
        Ok(CoupledSolver { grid: *g, fft: RowFft::new(g.nx), lus })
    }

    /// Solve for a solenoidal velocity and a temperature; the pressure is discarded.
    pub fn solve(&self, rv: &VelocityField, rth: &CellField) -> (VelocityField, CellField) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut s1 = self.fft.forward(&rv.u1);
        let mut s2 = self.fft.forward(&rv.u2);
        let mut st = self.fft.forward(&rth.data);
        let n = NC * ny;
        let mut b = vec![C64::new(0.0, 0.0); n];
        for m in 0..=nx / 2 {
            for j in 0..ny {
                b[NC * j] = s1[j * nx + m];
                b[NC * j + 1] = if j == 0 { C64::new(0.0, 0.0) } else { s2[j * nx + m] };
                b[NC * j + 2] = st[j * nx + m];
                b[NC * j + 3] = C64::new(0.0, 0.0);
            }
            self.lus[m].solve(&mut b);
            let mirror = m != 0 && 2 * m != nx;
            for j in 0..ny {
                s1[j * nx + m] = b[NC * j];
                s2[j * nx + m] = b[NC * j + 1];
                st[j * nx + m] = b[NC * j + 2];
                if mirror {
                    s1[j * nx + nx - m] = b[NC * j].conj();
                    s2[j * nx + nx - m] = b[NC * j + 1].conj();
                    st[j * nx + nx - m] = b[NC * j + 2].conj();
                }
            }
            for i in 0..nx {
                s2[ny * nx + i] = C64::new(0.0, 0.0);
            }
            if 2 * m == nx {
                // the Nyquist mode is real for real data; drop rounding in the imaginary part
                for j in 0..ny {
                    s1[j * nx + m].im = 0.0;
                    s2[j * nx + m].im = 0.0;
                    st[j * nx + m].im = 0.0;
                }
            }
        }
        let mut v = VelocityField { nx, ny, u1: self.fft.inverse(s1), u2: self.fft.inverse(s2) };
        v.u2[..nx].iter_mut().for_each(|x| *x = 0.0);
        v.u2[ny * nx..].iter_mut().for_each(|x| *x = 0.0);
        (v, CellField { nx, ny, data: self.fft.inverse(st) })
    }
}

fn assemble(g: &Grid, co: CoupledCoeffs, m: usize) -> BandLu {
    let ny = g.ny;
    let n = NC * ny;
    let band = 2 * NC - 1;
    let mut lu = BandLu::new(n, band, band);
    let s = symbols(g, m);
    let iy2 = 1.0 / (g.hy * g.hy);
    let r = |x: f64| C64::new(x, 0.0);
    let u1 = |j: usize| NC * j;
    let u2 = |j: usize| NC * j + 1;
    let th = |j: usize| NC * j + 2;
    let p = |j: usize| NC * j + 3;
    // cell-row Laplacian in x2 with odd ghosts at both walls
    let cell_diag = |j: usize| {
        let mut d = 2.0 * iy2;
        if j == 0 {
            d += iy2;
        }
        if j + 1 == ny {
            d += iy2;
        }
        d
    };
    for j in 0..ny {
        // u1 momentum
        lu.add(u1(j), u1(j), r(co.alpha + co.visc * (s.lam + cell_diag(j))));
        if j > 0 {
            lu.add(u1(j), u1(j - 1), r(-co.visc * iy2));
        }
        if j + 1 < ny {
            lu.add(u1(j), u1(j + 1), r(-co.visc * iy2));
        }
        lu.add(u1(j), p(j), s.bwd);

        // u2 momentum on face j (face 0 is the wall)
        if j == 0 {
            lu.add(u2(0), u2(0), r(1.0));
        } else {
            lu.add(u2(j), u2(j), r(co.alpha + co.visc * (s.lam + 2.0 * iy2)));
            if j > 1 {
                lu.add(u2(j), u2(j - 1), r(-co.visc * iy2));
            }
            if j + 1 < ny {
                lu.add(u2(j), u2(j + 1), r(-co.visc * iy2));
            }
            lu.add(u2(j), th(j), r(-0.5 * co.buoy));
            lu.add(u2(j), th(j - 1), r(-0.5 * co.buoy));
            lu.add(u2(j), p(j), r(1.0 / g.hy));
            lu.add(u2(j), p(j - 1), r(-1.0 / g.hy));
        }

        // temperature
        lu.add(th(j), th(j), r(co.alpha + co.diff * (s.lam + cell_diag(j))));
        if j > 0 {
            lu.add(th(j), th(j - 1), r(-co.diff * iy2));
            lu.add(th(j), u2(j), r(-0.5 * co.buoy));
        }
        if j + 1 < ny {
            lu.add(th(j), th(j + 1), r(-co.diff * iy2));
            lu.add(th(j), u2(j + 1), r(-0.5 * co.buoy));
        }

        // continuity; at m = 0 one equation is redundant and pins the pressure level instead
        if m == 0 && j == 0 {
            lu.add(p(0), p(0), r(1.0));
        } else {
            lu.add(p(j), u1(j), s.fwd);
            if j > 0 {
                lu.add(p(j), u2(j), r(-1.0 / g.hy));
            }
            if j + 1 < ny {
                lu.add(p(j), u2(j + 1), r(1.0 / g.hy));
            }
        }
    }
    lu
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_lu_matches_dense_solution() {
        // 6x6 system with kl = ku = 2 and a zero leading entry forcing a pivot
        let n = 6;
        let mut dense = vec![vec![C64::new(0.0, 0.0); n]; n];
        let mut lu = BandLu::new(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = if i == j && i == 0 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(1.0 + (i * 7 + j * 3) as f64 % 5.0, (i as f64 - j as f64) * 0.3)
                };
                dense[i][j] = v;
                lu.add(i, j, v);
            }
        }
        lu.factor().unwrap();
        let x: Vec<C64> = (0..n).map(|i| C64::new(i as f64 - 2.0, 0.5 * i as f64)).collect();
        let mut b: Vec<C64> = (0..n).map(|i| (0..n).map(|j| dense[i][j] * x[j]).sum()).collect();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn thomas_solves_poisson_row() {
        let n = 5;
        let a = vec![C64::new(1.0, 0.0); n];
        let b = vec![C64::new(-2.5, 0.0); n];
        let c = vec![C64::new(1.0, 0.0); n];
        let x: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let mut d: Vec<C64> = (0..n)
            .map(|i| {
                let mut s = b[i] * x[i];
                if i > 0 {
                    s += a[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += c[i] * x[i + 1];
                }
                s
            })
            .collect();
        thomas(&a, &b, &c, &mut d).unwrap();
        for i in 0..n {
            assert!((d[i] - x[i]).norm() < 1e-13);
        }
    }
}

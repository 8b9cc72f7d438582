//! Staggered grid on the channel (0,1)^2, periodic in x1 with walls at x2 = 0 and x2 = 1.
//!
//! Layout (row-major, `j * nx + i`):
//! * temperature and pressure at cell centres `((i+1/2)hx, (j+1/2)hy)`, `ny` rows;
//! * `u1` on vertical faces `(i hx, (j+1/2)hy)`, `ny` rows;
//! * `u2` on horizontal faces `((i+1/2)hx, j hy)`, `ny + 1` rows, the wall rows held at zero.
//!
//! All volume weights are `hx * hy`, except the two wall rows of `u2` which carry half weight.
//! Dirichlet data for cell-row quantities is imposed through the odd ghost value
//! `q_{-1} = -q_0`, which puts the zero exactly on the wall.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fourier::NeumannPoisson;

/// Uniform staggered grid on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

/// Build an `nx` by `ny` grid; both counts must be at least 4.
pub fn make_grid(nx: usize, ny: usize) -> Result<Grid> {
    if nx < 4 || ny < 4 {
        return Err(Error::InvalidGrid(format!("need nx, ny >= 4, got {nx} x {ny}")));
    }
    Ok(Grid { nx, ny, hx: 1.0 / nx as f64, hy: 1.0 / ny as f64 })
}

impl Grid {
    pub fn cell_weight(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }
    pub fn x_face(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }
    pub fn y_face(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }
    /// Mesh width used for the spatial error terms.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }
}

/// Scalar field at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

/// Temperature deviation from the conductive profile, at cell centres.
pub type TemperatureField = CellField;

/// Face-staggered velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub nx: usize,
    pub ny: usize,
    /// `ny * nx` values on vertical faces.
    pub u1: Vec<f64>,
    /// `(ny + 1) * nx` values on horizontal faces; rows 0 and `ny` stay zero.
    pub u2: Vec<f64>,
}

/// The pair (velocity, temperature).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: VelocityField,
    pub th: TemperatureField,
}

impl CellField {
    pub fn zeros(g: &Grid) -> Self {
        CellField { nx: g.nx, ny: g.ny, data: vec![0.0; g.nx * g.ny] }
    }

    /// Sample `f(x1, x2)` at cell centres.
    pub fn from_fn(g: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.data[j * g.nx + i] = f(g.x_center(i), g.y_center(j));
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        if self.nx != g.nx || self.ny != g.ny || self.data.len() != g.nx * g.ny {
            return Err(Error::ShapeMismatch(format!(
                "cell field {}x{} ({} values) on grid {}x{}",
                self.nx,
                self.ny,
                self.data.len(),
                g.nx,
                g.ny
            )));
        }
        Ok(())
    }

    /// Weighted inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        let w = 1.0 / (self.nx * self.ny) as f64;
        w * self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Dirichlet form with zero wall values; equals `(A2 q, q)` exactly.
    pub fn h1_sq(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let q = &self.data;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for j in 0..ny {
            let row = &q[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let d = row[i] - row[(i + nx - 1) % nx];
                sx += d * d;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let d = q[j * nx + i] - q[(j - 1) * nx + i];
                sy += d * d;
            }
        }
        // half cell to each wall, half weight: (2q/hy)^2 * hx*hy/2 = 2 q^2 hx/hy
        let mut sw = 0.0;
        for i in 0..nx {
            sw += q[i] * q[i] + q[(ny - 1) * nx + i] * q[(ny - 1) * nx + i];
        }
        sx * hy / hx + sy * hx / hy + 2.0 * sw * hx / hy
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|s| *s *= a);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl VelocityField {
    pub fn zeros(g: &Grid) -> Self {
        VelocityField {
            nx: g.nx,
            ny: g.ny,
            u1: vec![0.0; g.nx * g.ny],
            u2: vec![0.0; g.nx * (g.ny + 1)],
        }
    }

    /// Sample the components at their faces (wall rows of `u2` are left at zero).
    pub fn from_fn(g: &Grid, f1: impl Fn(f64, f64) -> f64, f2: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.u1[j * g.nx + i] = f1(g.x_face(i), g.y_center(j));
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                out.u2[j * g.nx + i] = f2(g.x_center(i), g.y_face(j));
            }
        }
        out
    }

    /// Discretely solenoidal field from a stream function sampled at the corners
    /// `(i hx, j hy)`; `psi` is evaluated for `j = 1..ny-1` and taken as zero on both walls.
    pub fn from_stream_fn(g: &Grid, psi: impl Fn(f64, f64) -> f64) -> Self {
        let mut corners = vec![0.0; g.nx * (g.ny + 1)];
        for j in 1..g.ny {
            for i in 0..g.nx {
                corners[j * g.nx + i] = psi(g.x_face(i), g.y_face(j));
            }
        }
        Self::from_corner_stream(g, &corners)
    }

    /// `u1 = d psi / d x2`, `u2 = -d psi / d x1` on a corner array of `(ny+1) * nx` values.
    pub fn from_corner_stream(g: &Grid, corners: &[f64]) -> Self {
        let (nx, ny) = (g.nx, g.ny);
        let mut out = Self::zeros(g);
        for j in 0..ny {
            for i in 0..nx {
                out.u1[j * nx + i] = (corners[(j + 1) * nx + i] - corners[j * nx + i]) / g.hy;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out.u2[j * nx + i] = -(corners[j * nx + (i + 1) % nx] - corners[j * nx + i]) / g.hx;
            }
        }
        out
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        if self.nx != g.nx
            || self.ny != g.ny
            || self.u1.len() != g.nx * g.ny
            || self.u2.len() != g.nx * (g.ny + 1)
        {
            return Err(Error::ShapeMismatch(format!(
                "velocity field {}x{} on grid {}x{}",
                self.nx, self.ny, g.nx, g.ny
            )));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let w = 1.0 / (self.nx * self.ny) as f64;
        let s1: f64 = self.u1.iter().zip(&other.u1).map(|(a, b)| a * b).sum();
        let nx = self.nx;
        let last = self.ny * nx;
        let mut s2: f64 = self.u2[nx..last].iter().zip(&other.u2[nx..last]).map(|(a, b)| a * b).sum();
        let walls: f64 = self.u2[..nx].iter().zip(&other.u2[..nx]).map(|(a, b)| a * b).sum::<f64>()
            + self.u2[last..].iter().zip(&other.u2[last..]).map(|(a, b)| a * b).sum::<f64>();
        s2 += 0.5 * walls;
        w * (s1 + s2)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Dirichlet form of both components; equals `(A1 v, v)` exactly.
    pub fn h1_sq(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let c1 = CellField { nx, ny, data: self.u1.clone() };
        let mut s = c1.h1_sq();
        let u = &self.u2;
        let mut sx = 0.0;
        for j in 1..ny {
            for i in 0..nx {
                let d = u[j * nx + i] - u[j * nx + (i + nx - 1) % nx];
                sx += d * d;
            }
        }
        let mut sy = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let d = u[(j + 1) * nx + i] - u[j * nx + i];
                sy += d * d;
            }
        }
        s += sx * hy / hx + sy * hx / hy;
        s
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.u1.iter_mut().zip(&x.u1) {
            *s += a * v;
        }
        for (s, v) in self.u2.iter_mut().zip(&x.u2) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.u1.iter_mut().for_each(|s| *s *= a);
        self.u2.iter_mut().for_each(|s| *s *= a);
    }

    pub fn max_abs(&self) -> f64 {
        self.u1.iter().chain(&self.u2).fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl State {
    pub fn zeros(g: &Grid) -> Self {
        State { v: VelocityField::zeros(g), th: CellField::zeros(g) }
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        self.v.check(g)?;
        self.th.check(g)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.v.dot(&other.v) + self.th.dot(&other.th)
    }

    /// Squared norm of the pair in the pivot space.
    pub fn norm_sq(&self) -> f64 {
        self.v.norm_sq() + self.th.norm_sq()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared Dirichlet norm of the pair.
    pub fn h1_sq(&self) -> f64 {
        self.v.h1_sq() + self.th.h1_sq()
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        self.v.axpy(a, &x.v);
        self.th.axpy(a, &x.th);
    }

    pub fn scale(&mut self, a: f64) {
        self.v.scale(a);
        self.th.scale(a);
    }

    /// `self - other`.
    pub fn diff(&self, other: &Self) -> Self {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d
    }

    /// `|self - other|` without allocating.
    pub fn distance(&self, other: &Self) -> f64 {
        let w = 1.0 / (self.v.nx * self.v.ny) as f64;
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let nx = self.v.nx;
        let last = self.v.ny * nx;
        let s = sq(&self.v.u1, &other.v.u1)
            + sq(&self.v.u2[nx..last], &other.v.u2[nx..last])
            + sq(&self.th.data, &other.th.data);
        (w * s).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.v.u1.iter().chain(&self.v.u2).chain(&self.th.data).all(|x| x.is_finite())
    }
}

/// Fields for which the discrete norms are defined.
pub trait GridField {
    fn check_grid(&self, g: &Grid) -> Result<()>;
    fn l2_sq(&self) -> f64;
    fn h1_seminorm_sq(&self) -> f64;
}

impl GridField for CellField {
    fn check_grid(&self, g: &Grid) -> Result<()> {
        self.check(g)
    }
    fn l2_sq(&self) -> f64 {
        self.norm_sq()
    }
    fn h1_seminorm_sq(&self) -> f64 {
        self.h1_sq()
    }
}

impl GridField for VelocityField {
    fn check_grid(&self, g: &Grid) -> Result<()> {
        self.check(g)
    }
    fn l2_sq(&self) -> f64 {
        self.norm_sq()
    }
    fn h1_seminorm_sq(&self) -> f64 {
        self.h1_sq()
    }
}

impl GridField for State {
    fn check_grid(&self, g: &Grid) -> Result<()> {
        self.check(g)
    }
    fn l2_sq(&self) -> f64 {
        self.norm_sq()
    }
    fn h1_seminorm_sq(&self) -> f64 {
        self.h1_sq()
    }
}

/// Discrete L2 norm.
pub fn l2_norm<F: GridField>(field: &F, g: &Grid) -> Result<f64> {
    field.check_grid(g)?;
    Ok(field.l2_sq().sqrt())
}

/// Discrete H1 seminorm (the Dirichlet form, one-sided at the walls).
pub fn h1_seminorm<F: GridField>(field: &F, g: &Grid) -> Result<f64> {
    field.check_grid(g)?;
    Ok(field.h1_seminorm_sq().sqrt())
}

/// `th = T - T0 + x2` at cell centres, mapping the physical temperature (bottom wall at `T0`,
/// top wall at `T0 - 1`) to the perturbation with homogeneous wall data.
pub fn shift_temperature(t: &CellField, t0: f64, g: &Grid) -> CellField {
    let mut out = t.clone();
    for j in 0..t.ny {
        let y = g.y_center(j);
        for x in &mut out.data[j * t.nx..(j + 1) * t.nx] {
            *x += y - t0;
        }
    }
    out
}

/// Cell-centred divergence of a face velocity.
pub fn divergence(v: &VelocityField, g: &Grid) -> Result<CellField> {
    v.check(g)?;
    Ok(divergence_unchecked(v))
}

pub(crate) fn divergence_unchecked(v: &VelocityField) -> CellField {
    let (nx, ny) = (v.nx, v.ny);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut d = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            d[j * nx + i] = (v.u1[j * nx + (i + 1) % nx] - v.u1[j * nx + i]) / hx
                + (v.u2[(j + 1) * nx + i] - v.u2[j * nx + i]) / hy;
        }
    }
    CellField { nx, ny, data: d }
}

/// Face gradient of a cell field; the negative adjoint of the divergence.
pub(crate) fn gradient(q: &CellField) -> VelocityField {
    let (nx, ny) = (q.nx, q.ny);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut out = VelocityField { nx, ny, u1: vec![0.0; nx * ny], u2: vec![0.0; nx * (ny + 1)] };
    for j in 0..ny {
        for i in 0..nx {
            out.u1[j * nx + i] = (q.data[j * nx + i] - q.data[j * nx + (i + nx - 1) % nx]) / hx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            out.u2[j * nx + i] = (q.data[j * nx + i] - q.data[(j - 1) * nx + i]) / hy;
        }
    }
    out
}

/// Discrete Leray projector: `v - G q` with `D G q = D v`, the Neumann problem
/// solved by an FFT in x1 and a tridiagonal sweep per wavenumber.
pub struct Projector {
    grid: Grid,
    poisson: NeumannPoisson,
}

impl Projector {
    pub fn new(g: &Grid) -> Self {
        Projector { grid: *g, poisson: NeumannPoisson::new(g) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Project without the divergence check.
    pub fn apply(&self, v: &VelocityField) -> VelocityField {
        let d = divergence_unchecked(v);
        let q = self.poisson.solve(&d);
        let gq = gradient(&q);
        let mut out = v.clone();
        out.axpy(-1.0, &gq);
        let nx = out.nx;
        let ny = out.ny;
        out.u2[..nx].iter_mut().for_each(|x| *x = 0.0);
        out.u2[ny * nx..].iter_mut().for_each(|x| *x = 0.0);
        out
    }
}

/// Largest cell divergence in absolute value.
pub fn max_divergence(v: &VelocityField) -> f64 {
    divergence_unchecked(v).max_abs()
}

/// Orthogonal projection onto discretely solenoidal fields.
pub fn project(v: &VelocityField, g: &Grid, eps_div: f64) -> Result<VelocityField> {
    v.check(g)?;
    let p = Projector::new(g);
    let out = p.apply(v);
    let res = max_divergence(&out);
    if !res.is_finite() || res > eps_div * (1.0 + v.max_abs()) {
        return Err(Error::Divergence { residual: res, tol: eps_div });
    }
    Ok(out)
}

/// Power-law random fields: mode `(m, l)` gets a Gaussian coefficient with standard
/// deviation `lambda^(-exponent/2)`, `lambda = (2 pi m)^2 + (pi l)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub exponent: f64,
    /// Highest x1 wavenumber and x2 sine index; 0 means the full grid.
    pub max_mode: usize,
}

impl Spectrum {
    fn limits(&self, g: &Grid) -> (usize, usize) {
        let mx = g.nx / 2 - 1;
        let ly = g.ny - 1;
        if self.max_mode == 0 {
            (mx, ly)
        } else {
            (self.max_mode.min(mx), self.max_mode.min(ly))
        }
    }
}

/// `sum_{m,l} c_{ml} sin(l pi y) e^{2 pi i m x}` (real part) at points `x_i = (i + sx) hx`
/// and `ys`; returns `ys.len() * nx` values.
fn random_sine_series<R: Rng>(g: &Grid, rng: &mut R, spec: &Spectrum, sx: f64, ys: &[f64], stream: bool) -> Vec<f64> {
    let (mx, ly) = spec.limits(g);
    let nx = g.nx;
    // coefficients, then rows g_l(x_i) by direct cosine sums over m
    let mut rows = vec![0.0; (ly + 1) * nx];
    let cos_tab: Vec<Vec<(f64, f64)>> = (0..=mx)
        .map(|m| {
            (0..nx)
                .map(|i| {
                    let a = 2.0 * PI * m as f64 * (i as f64 + sx) / nx as f64;
                    (a.cos(), a.sin())
                })
                .collect()
        })
        .collect();
    for l in 1..=ly {
        for m in 0..=mx {
            let lam = (2.0 * PI * m as f64).powi(2) + (PI * l as f64).powi(2);
            let mut sd = lam.powf(-spec.exponent / 2.0);
            if stream {
                sd /= lam.sqrt();
            }
            let a: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            let b: f64 = if m == 0 { 0.0 } else { rng.sample::<f64, _>(StandardNormal) * sd };
            let row = &mut rows[l * nx..(l + 1) * nx];
            for (i, (c, s)) in cos_tab[m].iter().enumerate() {
                row[i] += a * c + b * s;
            }
        }
    }
    let mut out = vec![0.0; ys.len() * nx];
    for (j, &y) in ys.iter().enumerate() {
        for l in 1..=ly {
            let s = (PI * l as f64 * y).sin();
            let row = &rows[l * nx..(l + 1) * nx];
            for i in 0..nx {
                out[j * nx + i] += s * row[i];
            }
        }
    }
    out
}

/// Random solenoidal velocity with the given spectrum (in terms of the velocity itself).
pub fn random_velocity<R: Rng>(g: &Grid, rng: &mut R, spec: &Spectrum) -> VelocityField {
    let ys: Vec<f64> = (0..=g.ny).map(|j| g.y_face(j)).collect();
    let mut psi = random_sine_series(g, rng, spec, 0.0, &ys, true);
    let nx = g.nx;
    psi[..nx].iter_mut().for_each(|x| *x = 0.0);
    psi[g.ny * nx..].iter_mut().for_each(|x| *x = 0.0);
    VelocityField::from_corner_stream(g, &psi)
}

/// Random temperature vanishing on the walls.
pub fn random_temperature<R: Rng>(g: &Grid, rng: &mut R, spec: &Spectrum) -> CellField {
    let ys: Vec<f64> = (0..g.ny).map(|j| g.y_center(j)).collect();
    let data = random_sine_series(g, rng, spec, 0.5, &ys, false);
    CellField { nx: g.nx, ny: g.ny, data }
}

/// Random solenoidal velocity built from i.i.d. corner stream values smoothed by
/// `passes` applications of a five-point average.
pub fn random_velocity_smoothed<R: Rng>(g: &Grid, rng: &mut R, passes: usize) -> VelocityField {
    let (nx, ny) = (g.nx, g.ny);
    let mut psi = vec![0.0; nx * (ny + 1)];
    for j in 1..ny {
        for i in 0..nx {
            psi[j * nx + i] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    for _ in 0..passes {
        let old = psi.clone();
        for j in 1..ny {
            for i in 0..nx {
                let c = old[j * nx + i];
                let e = old[j * nx + (i + 1) % nx];
                let w = old[j * nx + (i + nx - 1) % nx];
                let n = old[(j + 1) * nx + i];
                let s = old[(j - 1) * nx + i];
                psi[j * nx + i] = 0.5 * c + 0.125 * (e + w + n + s);
            }
        }
    }
    VelocityField::from_corner_stream(g, &psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_rejects_small_sizes() {
        assert!(make_grid(3, 8).is_err());
        assert!(make_grid(8, 2).is_err());
        let g = make_grid(8, 4).unwrap();
        assert_eq!(g.hx, 0.125);
    }

    #[test]
    fn unit_field_has_unit_norm() {
        let g = make_grid(64, 64).unwrap();
        let one = CellField::from_fn(&g, |_, _| 1.0);
        assert!((l2_norm(&one, &g).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sine_h1_norm_is_second_order() {
        let g = make_grid(64, 64).unwrap();
        let th = CellField::from_fn(&g, |_, y| (PI * y).sin());
        let n = h1_seminorm(&th, &g).unwrap();
        assert!((n - PI / 2f64.sqrt()).abs() < 1e-2, "{n}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = make_grid(8, 8).unwrap();
        let g2 = make_grid(8, 16).unwrap();
        let th = CellField::zeros(&g2);
        assert!(matches!(l2_norm(&th, &g), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn gradient_is_minus_adjoint_of_divergence() {
        let g = make_grid(12, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v = VelocityField::zeros(&g);
        for x in v.u1.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                v.u2[j * g.nx + i] = rng.gen_range(-1.0..1.0);
            }
        }
        let q = CellField::from_fn(&g, |x, y| (3.0 * x).sin() + y * y);
        let lhs = divergence(&v, &g).unwrap().dot(&q);
        let rhs = -v.dot(&gradient(&q));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal() {
        let g = make_grid(32, 24).unwrap();
        let v = VelocityField::from_fn(&g, |x, y| (2.0 * PI * x).sin() * y, |x, y| (x + y).cos() * (PI * y).sin());
        let p = project(&v, &g, 1e-10).unwrap();
        assert!(max_divergence(&p) <= 1e-10);
        let pp = project(&p, &g, 1e-10).unwrap();
        let mut d = pp.clone();
        d.axpy(-1.0, &p);
        assert!(d.norm_sq().sqrt() <= 1e-12);
        // orthogonality of the removed part
        let mut r = v.clone();
        r.axpy(-1.0, &p);
        assert!(r.dot(&p).abs() < 1e-12);
    }

    #[test]
    fn stream_function_fields_are_solenoidal() {
        let g = make_grid(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_velocity(&g, &mut rng, &Spectrum { exponent: 1.0, max_mode: 0 });
        assert!(max_divergence(&v) < 1e-10);
        let w = random_velocity_smoothed(&g, &mut rng, 2);
        assert!(max_divergence(&w) < 1e-10);
    }
}

//! Discrete operators: the two Dirichlet Laplacians, the skew-symmetric transport forms,
//! the buoyancy coupling and a sampled estimate of the trilinear constant.
//!
//! Transport is written face by face. A face `F` between unknowns `L` and `R` with advecting
//! normal velocity `a_F` contributes `w_F a_F (w_R - w_L)(z_R + z_L) / 2` to the convective form;
//! the skew part of that is `w_F a_F (w_R z_L - w_L z_R) / 2`, which is exactly antisymmetric in
//! `(w, z)` whatever `a` is. For solenoidal `a` the two agree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid_fields::{
    random_velocity, random_velocity_smoothed, CellField, Grid, Projector, Spectrum, State, VelocityField,
};

/// Negative Laplacian on cell rows with odd ghosts at both walls.
fn cell_laplacian(q: &[f64], nx: usize, ny: usize, out: &mut [f64]) {
    let ix2 = (nx * nx) as f64;
    let iy2 = (ny * ny) as f64;
    for j in 0..ny {
        for i in 0..nx {
            let c = q[j * nx + i];
            let e = q[j * nx + (i + 1) % nx];
            let w = q[j * nx + (i + nx - 1) % nx];
            let s = if j == 0 { -c } else { q[(j - 1) * nx + i] };
            let n = if j + 1 == ny { -c } else { q[(j + 1) * nx + i] };
            out[j * nx + i] = (2.0 * c - e - w) * ix2 + (2.0 * c - n - s) * iy2;
        }
    }
}

/// `A2 th`, the Dirichlet Laplacian on temperature.
pub fn laplacian_a2(th: &CellField) -> CellField {
    let mut out = vec![0.0; th.data.len()];
    cell_laplacian(&th.data, th.nx, th.ny, &mut out);
    CellField { nx: th.nx, ny: th.ny, data: out }
}

/// Componentwise vector Laplacian with no-slip walls (not projected).
pub fn laplacian_a1(v: &VelocityField) -> VelocityField {
    let (nx, ny) = (v.nx, v.ny);
    let mut out = VelocityField { nx, ny, u1: vec![0.0; nx * ny], u2: vec![0.0; nx * (ny + 1)] };
    cell_laplacian(&v.u1, nx, ny, &mut out.u1);
    let ix2 = (nx * nx) as f64;
    let iy2 = (ny * ny) as f64;
    let u = &v.u2;
    for j in 1..ny {
        for i in 0..nx {
            let c = u[j * nx + i];
            let e = u[j * nx + (i + 1) % nx];
            let w = u[j * nx + (i + nx - 1) % nx];
            out.u2[j * nx + i] = (2.0 * c - e - w) * ix2 + (2.0 * c - u[(j + 1) * nx + i] - u[(j - 1) * nx + i]) * iy2;
        }
    }
    out
}

/// Discrete Stokes operator `P A1` on solenoidal fields.
pub fn stokes_operator(v: &VelocityField, g: &Grid) -> Result<VelocityField> {
    v.check(g)?;
    Ok(Projector::new(g).apply(&laplacian_a1(v)))
}

/// Advecting velocities interpolated to the faces of every control volume.
struct FaceVelocities {
    /// u1 volumes: centre faces `(i+1/2, j)` between u1_i and u1_{i+1}
    u1_x: Vec<f64>,
    /// u1 volumes: corner faces `(i, j)`, j in 0..=ny, between u1_{j-1} and u1_j
    u1_y: Vec<f64>,
    /// u2 volumes: corner faces `(i, j)` between u2_{i-1} and u2_i
    u2_x: Vec<f64>,
    /// u2 volumes: centre faces `(i, j)`, j in 0..ny, between u2_j and u2_{j+1}
    u2_y: Vec<f64>,
}

fn face_velocities(y: &VelocityField) -> FaceVelocities {
    let (nx, ny) = (y.nx, y.ny);
    let mut f = FaceVelocities {
        u1_x: vec![0.0; nx * ny],
        u1_y: vec![0.0; nx * (ny + 1)],
        u2_x: vec![0.0; nx * (ny + 1)],
        u2_y: vec![0.0; nx * ny],
    };
    for j in 0..ny {
        for i in 0..nx {
            f.u1_x[j * nx + i] = 0.5 * (y.u1[j * nx + i] + y.u1[j * nx + (i + 1) % nx]);
            f.u2_y[j * nx + i] = 0.5 * (y.u2[j * nx + i] + y.u2[(j + 1) * nx + i]);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            f.u1_y[j * nx + i] = 0.5 * (y.u2[j * nx + (i + nx - 1) % nx] + y.u2[j * nx + i]);
            f.u2_x[j * nx + i] = 0.5 * (y.u1[(j - 1) * nx + i] + y.u1[j * nx + i]);
        }
    }
    f
}

/// Convective form `(y . grad w, z)` for velocities.
pub fn convective_form_1(y: &VelocityField, w: &VelocityField, z: &VelocityField) -> f64 {
    let (nx, ny) = (y.nx, y.ny);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let f = face_velocities(y);
    let mut sx = 0.0;
    let mut sy = 0.0;
    // u1 volumes
    for j in 0..ny {
        for i in 0..nx {
            let (l, r) = (j * nx + i, j * nx + (i + 1) % nx);
            sx += f.u1_x[l] * (w.u1[r] - w.u1[l]) * (z.u1[r] + z.u1[l]);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (l, r) = ((j - 1) * nx + i, j * nx + i);
            sy += f.u1_y[j * nx + i] * (w.u1[r] - w.u1[l]) * (z.u1[r] + z.u1[l]);
        }
    }
    // u2 volumes
    for j in 1..ny {
        for i in 0..nx {
            let (l, r) = (j * nx + (i + nx - 1) % nx, j * nx + i);
            sx += f.u2_x[j * nx + i] * (w.u2[r] - w.u2[l]) * (z.u2[r] + z.u2[l]);
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let (l, r) = (j * nx + i, (j + 1) * nx + i);
            sy += f.u2_y[j * nx + i] * (w.u2[r] - w.u2[l]) * (z.u2[r] + z.u2[l]);
        }
    }
    0.5 * (hy * sx + hx * sy)
}

/// Convective form `(y . grad phi, psi)` for cell scalars.
pub fn convective_form_2(y: &VelocityField, phi: &CellField, psi: &CellField) -> f64 {
    let (nx, ny) = (y.nx, y.ny);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let (l, r) = (j * nx + (i + nx - 1) % nx, j * nx + i);
            sx += y.u1[j * nx + i] * (phi.data[r] - phi.data[l]) * (psi.data[r] + psi.data[l]);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (l, r) = ((j - 1) * nx + i, j * nx + i);
            sy += y.u2[j * nx + i] * (phi.data[r] - phi.data[l]) * (psi.data[r] + psi.data[l]);
        }
    }
    0.5 * (hy * sx + hx * sy)
}

/// Skew transport form `b1(y, w, z) = [(y.grad w, z) - (y.grad z, w)] / 2`.
pub fn b1(y: &VelocityField, w: &VelocityField, z: &VelocityField) -> f64 {
    0.5 * (convective_form_1(y, w, z) - convective_form_1(y, z, w))
}

/// Skew transport form for temperature.
pub fn b2(y: &VelocityField, phi: &CellField, psi: &CellField) -> f64 {
    0.5 * (convective_form_2(y, phi, psi) - convective_form_2(y, psi, phi))
}

/// Shape-checked `b1`.
pub fn trilinear_b1(y: &VelocityField, w: &VelocityField, z: &VelocityField, g: &Grid) -> Result<f64> {
    y.check(g)?;
    w.check(g)?;
    z.check(g)?;
    Ok(b1(y, w, z))
}

/// Shape-checked `b2`.
pub fn trilinear_b2(y: &VelocityField, phi: &CellField, psi: &CellField, g: &Grid) -> Result<f64> {
    y.check(g)?;
    phi.check(g)?;
    psi.check(g)?;
    Ok(b2(y, phi, psi))
}

/// Field `L_y w` with `(L_y w, z) = b1(y, w, z)` for every `z`.
pub fn advect_1(y: &VelocityField, w: &VelocityField) -> VelocityField {
    let (nx, ny) = (y.nx, y.ny);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let f = face_velocities(y);
    let mut out = VelocityField { nx, ny, u1: vec![0.0; nx * ny], u2: vec![0.0; nx * (ny + 1)] };
    let (cx, cy) = (0.5 / hx, 0.5 / hy);
    for j in 0..ny {
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            let mut s = cx * (f.u1_x[j * nx + i] * w.u1[j * nx + ip] - f.u1_x[j * nx + im] * w.u1[j * nx + im]);
            if j + 1 < ny {
                s += cy * f.u1_y[(j + 1) * nx + i] * w.u1[(j + 1) * nx + i];
            }
            if j > 0 {
                s -= cy * f.u1_y[j * nx + i] * w.u1[(j - 1) * nx + i];
            }
            out.u1[j * nx + i] = s;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            let s = cx * (f.u2_x[j * nx + ip] * w.u2[j * nx + ip] - f.u2_x[j * nx + i] * w.u2[j * nx + im])
                + cy * (f.u2_y[j * nx + i] * w.u2[(j + 1) * nx + i] - f.u2_y[(j - 1) * nx + i] * w.u2[(j - 1) * nx + i]);
            out.u2[j * nx + i] = s;
        }
    }
    out
}

/// Field `L_y phi` with `(L_y phi, psi) = b2(y, phi, psi)` for every `psi`.
pub fn advect_2(y: &VelocityField, phi: &CellField) -> CellField {
    let (nx, ny) = (y.nx, y.ny);
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let (cx, cy) = (0.5 / hx, 0.5 / hy);
    let q = &phi.data;
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            let mut s = cx * (y.u1[j * nx + ip] * q[j * nx + ip] - y.u1[j * nx + i] * q[j * nx + im]);
            if j + 1 < ny {
                s += cy * y.u2[(j + 1) * nx + i] * q[(j + 1) * nx + i];
            }
            if j > 0 {
                s -= cy * y.u2[j * nx + i] * q[(j - 1) * nx + i];
            }
            out[j * nx + i] = s;
        }
    }
    CellField { nx, ny, data: out }
}

/// Temperature averaged onto the horizontal faces (`e2 th` in the velocity layout).
pub fn temperature_to_faces(th: &CellField) -> VelocityField {
    let (nx, ny) = (th.nx, th.ny);
    let mut out = VelocityField { nx, ny, u1: vec![0.0; nx * ny], u2: vec![0.0; nx * (ny + 1)] };
    for j in 1..ny {
        for i in 0..nx {
            out.u2[j * nx + i] = 0.5 * (th.data[(j - 1) * nx + i] + th.data[j * nx + i]);
        }
    }
    out
}

/// Vertical velocity averaged onto the cell centres; adjoint of `temperature_to_faces`.
pub fn vertical_to_cells(v: &VelocityField) -> CellField {
    let (nx, ny) = (v.nx, v.ny);
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] = 0.5 * (v.u2[j * nx + i] + v.u2[(j + 1) * nx + i]);
        }
    }
    CellField { nx, ny, data: out }
}

/// Buoyancy pairing `(e2 th, v)`.
pub fn buoyancy_pairing(th: &CellField, v: &VelocityField) -> f64 {
    temperature_to_faces(th).dot(v)
}

/// `R u = -{e2 th, v2}`; the velocity part is returned unprojected, which does not change
/// its pairing with solenoidal fields.
pub fn buoyancy_coupling(u: &State, g: &Grid) -> Result<State> {
    u.check(g)?;
    let mut v = temperature_to_faces(&u.th);
    v.scale(-1.0);
    let mut th = vertical_to_cells(&u.v);
    th.scale(-1.0);
    Ok(State { v, th })
}

/// Ratio `|b1(y,w,z)| / (|y|^1/2 ||y||^1/2 ||w|| |z|^1/2 ||z||^1/2)`.
fn cb_ratio(y: &VelocityField, w: &VelocityField, z: &VelocityField) -> f64 {
    let den = (y.norm_sq().sqrt() * y.h1_sq().sqrt()).sqrt()
        * w.h1_sq().sqrt()
        * (z.norm_sq().sqrt() * z.h1_sq().sqrt()).sqrt();
    if den > 0.0 {
        b1(y, w, z).abs() / den
    } else {
        0.0
    }
}

/// Which random field family `estimate_cb` draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbSampler {
    /// Power-law spectra with a random exponent and cut-off.
    Spectral,
    /// Smoothed white-noise stream functions.
    Smoothed,
}

fn draw_field(g: &Grid, rng: &mut ChaCha8Rng, sampler: CbSampler) -> VelocityField {
    match sampler {
        CbSampler::Spectral => {
            let exponent = rng.gen_range(0.0..4.0);
            let max_mode = rng.gen_range(1..=g.ny.min(g.nx / 2));
            random_velocity(g, rng, &Spectrum { exponent, max_mode })
        }
        CbSampler::Smoothed => {
            let passes = rng.gen_range(0..12);
            random_velocity_smoothed(g, rng, passes)
        }
    }
}

/// Running maximum of the trilinear ratio over `samples` random solenoidal triples; odd-numbered
/// triples are aligned (`z = P L_y w`).
/// Entry `n` of the result is the estimate after `n + 1` samples.
pub fn estimate_cb_trace(g: &Grid, samples: usize, seed: u64, sampler: CbSampler) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Projector::new(g);
    let mut best = 0.0f64;
    let mut out = Vec::with_capacity(samples);
    for n in 0..samples {
        let y = draw_field(g, &mut rng, sampler);
        let w = draw_field(g, &mut rng, sampler);
        // every other triple takes z along P(L_y w), the direction maximising |b1(y, w, .)|
        let z = if n % 2 == 1 { proj.apply(&advect_1(&y, &w)) } else { draw_field(g, &mut rng, sampler) };
        best = best.max(cb_ratio(&y, &w, &z));
        out.push(best);
    }
    out
}

/// Sampled estimate of the trilinear constant `c_b` (a lower bound on the true supremum).
pub fn estimate_cb(g: &Grid, samples: usize, seed: u64) -> f64 {
    estimate_cb_trace(g, samples, seed, CbSampler::Spectral).last().copied().unwrap_or(0.0)
}

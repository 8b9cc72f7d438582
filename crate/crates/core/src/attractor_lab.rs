//! Sampled attractors of the discrete semigroup, the Hausdorff semidistance between samples,
//! the piecewise interpolants of a trajectory and their residual forcings, and the `k -> 0`
//! convergence study.

use rayon::prelude::*;

use crate::bounds_monitor::rho0;
use crate::error::{Error, Result};
use crate::fourier::{CoupledCoeffs, CoupledSolver};
use crate::grid_fields::{Grid, State};
use crate::operators::{advect_1, advect_2, laplacian_a1, laplacian_a2, temperature_to_faces, vertical_to_cells};
use crate::stepper::{run_trajectory, ImplicitEuler, StepParams, Trajectory};

/// A finite sample of an approximate attractor.
#[derive(Debug, Clone)]
pub struct AttractorCloud {
    pub points: Vec<State>,
    pub k: f64,
    pub burn_in: usize,
    pub sample_stride: usize,
    pub provenance: String,
}

/// `sup_{b in B} inf_{c in C} |b - c|` in the `H` norm.
pub fn hausdorff_semidistance(b: &[State], c: &[State]) -> Result<f64> {
    if b.is_empty() || c.is_empty() {
        return Err(Error::EmptySet);
    }
    let (nx, ny) = (b[0].th.nx, b[0].th.ny);
    if b.iter().chain(c).any(|s| s.th.nx != nx || s.th.ny != ny) {
        return Err(Error::ShapeMismatch("point sets live on different grids".into()));
    }
    // max is exact, so the parallel reduction is independent of scheduling
    Ok(b.par_iter()
        .map(|p| c.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max))
}

/// Piecewise-constant and piecewise-linear interpolants of a trajectory.
pub struct InterpolantPair<'a> {
    traj: &'a Trajectory,
}

pub fn make_interpolants(traj: &Trajectory) -> Result<InterpolantPair<'_>> {
    if traj.states.len() < 2 {
        return Err(Error::Precondition("interpolants need at least one step".into()));
    }
    Ok(InterpolantPair { traj })
}

impl InterpolantPair<'_> {
    /// `(n, s)` with `t in [(n-1)k, nk)` and `s = (t - nk)/k in [-1, 0)`.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let k = self.traj.params.k;
        let n_max = self.traj.steps();
        if !(t >= 0.0 && t < n_max as f64 * k) {
            return Err(Error::Precondition(format!("t = {t} outside [0, {})", n_max as f64 * k)));
        }
        let n = ((t / k).floor() as usize + 1).min(n_max);
        Ok((n, (t - n as f64 * k) / k))
    }

    /// `psi_k(t) = psi^n` on `[(n-1)k, nk)`.
    pub fn piecewise_constant(&self, t: f64) -> Result<State> {
        let (n, _) = self.locate(t)?;
        Ok(self.traj.states[n].clone())
    }

    /// `psi~_k(t) = psi^n + ((t - nk)/k)(psi^n - psi^{n-1})` on `[(n-1)k, nk)`.
    pub fn piecewise_linear(&self, t: f64) -> Result<State> {
        let (n, s) = self.locate(t)?;
        let mut out = self.traj.states[n].clone();
        out.axpy(s, &self.traj.states[n].diff(&self.traj.states[n - 1]));
        Ok(out)
    }
}

/// `||f_k||^2` and `||g_k||^2` in `L^2(0, T*; V')`, integrated exactly.
///
/// On `[(n-1)k, nk)` the forcings are `s F1 + s^2 F2` with `s in [-1, 0)`, where for
/// `d = u^n - u^{n-1}`
/// `F1 = nu A1 dv + L_dv v^n + L_{v^n} dv - e2 d th`, `F2 = L_dv dv`, and
/// `G1 = kappa A2 d th + L_dv th^n + L_{v^n} d th - d v2`, `G2 = L_dv d th`.
/// Dual norms come from the Stokes and Dirichlet solves `(F, A^-1 F)`.
pub fn residual_forcing_norms(traj: &Trajectory, t_star: f64) -> Result<(f64, f64)> {
    let p = &traj.params;
    let k = p.k;
    let ratio = t_star / k;
    let n_int = if (ratio - ratio.round()).abs() < 1e-9 { ratio.round() as usize } else { ratio.ceil() as usize };
    if n_int == 0 || n_int > traj.steps() {
        return Err(Error::Precondition(format!("trajectory of {} steps does not cover T* = {t_star}", traj.steps())));
    }
    let riesz = CoupledSolver::new(&traj.grid, CoupledCoeffs { alpha: 0.0, visc: 1.0, diff: 1.0, buoy: 0.0 })?;
    let (mut f2, mut g2) = (0.0, 0.0);
    for n in 1..=n_int {
        let u = &traj.states[n];
        let d = u.diff(&traj.states[n - 1]);
        let mut a1 = laplacian_a1(&d.v);
        a1.scale(p.nu);
        a1.axpy(1.0, &advect_1(&d.v, &u.v));
        a1.axpy(1.0, &advect_1(&u.v, &d.v));
        let b1 = advect_1(&d.v, &d.v);
        let mut c1 = laplacian_a2(&d.th);
        c1.scale(p.kappa);
        c1.axpy(1.0, &advect_2(&d.v, &u.th));
        c1.axpy(1.0, &advect_2(&u.v, &d.th));
        let c2 = advect_2(&d.v, &d.th);
        if p.coupling {
            a1.axpy(-1.0, &temperature_to_faces(&d.th));
            c1.axpy(-1.0, &vertical_to_cells(&d.v));
        }
        let (w1, z1) = riesz.solve(&a1, &c1);
        let (w2, z2) = riesz.solve(&b1, &c2);
        f2 += k * (a1.dot(&w1) / 3.0 - a1.dot(&w2) / 2.0 + b1.dot(&w2) / 5.0);
        g2 += k * (c1.dot(&z1) / 3.0 - c1.dot(&z2) / 2.0 + c2.dot(&z2) / 5.0);
    }
    Ok((f2, g2))
}

/// Run every ensemble member for `burn_in` steps, then keep `n_samples` states `stride` apart.
/// Every sample must lie in `|u| <= rho0` and `||u|| <= r1` (with the per-step slack).
pub fn sample_attractor(
    ensemble: &[State],
    p: &StepParams,
    grid: &Grid,
    burn_in: usize,
    n_samples: usize,
    stride: usize,
    r1: f64,
) -> Result<AttractorCloud> {
    if ensemble.is_empty() || n_samples == 0 || stride == 0 {
        return Err(Error::EmptySet);
    }
    let stepper = ImplicitEuler::new(grid, *p)?;
    let runs: Vec<Result<Vec<State>>> = ensemble
        .par_iter()
        .map(|u0| {
            let mut u = stepper.advance(u0, burn_in)?;
            let mut out = Vec::with_capacity(n_samples);
            for i in 0..n_samples {
                if i > 0 {
                    u = stepper.advance(&u, stride)?;
                }
                out.push(u.clone());
            }
            Ok(out)
        })
        .collect();
    let r0 = rho0(p.nu);
    let mut points = Vec::with_capacity(ensemble.len() * n_samples);
    for (e, run) in runs.into_iter().enumerate() {
        for (i, s) in run?.into_iter().enumerate() {
            let (h, v) = (s.norm(), s.h1_sq().sqrt());
            if h > r0 + p.ledger_slack(h) || v > r1 + p.ledger_slack(v) {
                return Err(Error::Precondition(format!(
                    "sample {i} of trajectory {e} lies outside the absorbing set (|u| = {h:.4}, ||u|| = {v:.4})"
                )));
            }
            points.push(s);
        }
    }
    Ok(AttractorCloud {
        points,
        k: p.k,
        burn_in,
        sample_stride: stride,
        provenance: format!("ensemble of {}, k = {}, burn-in {burn_in}, stride {stride}", ensemble.len(), p.k),
    })
}

/// `sup_{u0, nk <= T*} |S_k^n u0 - S_ref(nk) u0|^2`, the reference using step `k_ref`,
/// which must divide `k`.
pub fn finite_time_divergence(u0s: &[State], p: &StepParams, k_ref: f64, t_star: f64, grid: &Grid) -> Result<f64> {
    let ratio = (p.k / k_ref).round() as usize;
    if ratio < 1 || ((ratio as f64) * k_ref - p.k).abs() > 1e-12 * p.k {
        return Err(Error::Precondition(format!("k_ref = {k_ref} does not divide k = {}", p.k)));
    }
    let n = (t_star / p.k + 1e-9).floor() as usize;
    let coarse = ImplicitEuler::new(grid, *p)?;
    let fine = ImplicitEuler::new(grid, StepParams { k: k_ref, ..*p })?;
    let sups: Vec<Result<f64>> = u0s
        .par_iter()
        .map(|u0| {
            let (mut a, mut b) = (u0.clone(), u0.clone());
            let mut sup = 0.0f64;
            for _ in 0..n {
                a = coarse.step(&a)?.0;
                b = fine.advance(&b, ratio)?;
                sup = sup.max(a.diff(&b).norm_sq());
            }
            Ok(sup)
        })
        .collect();
    sups.into_iter().try_fold(0.0f64, |m, s| Ok(m.max(s?)))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition("a slope needs at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Precondition("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Settings of the convergence study. Burn-in, stride and horizon are times, converted to
/// step counts for each `k`.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub grid: Grid,
    /// `k` is overwritten by each ladder entry.
    pub params: StepParams,
    pub ladder: Vec<f64>,
    pub k_ref: f64,
    pub ensemble: Vec<State>,
    pub burn_in_time: f64,
    pub n_samples: usize,
    pub stride_time: f64,
    pub t_star: f64,
    /// Cloud points per `k` used as initial data of the finite-time comparison.
    pub finite_time_points: usize,
    /// Initial data of the residual-forcing runs.
    pub forcing_initial: State,
    /// `V`-radius of the absorbing set the samples must lie in.
    pub r1: f64,
    /// Skip the slope fits (allowed with fewer than four ladder points).
    pub distance_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub k: f64,
    pub cloud_size: usize,
    pub dist_to_ref: f64,
    pub finite_time_sup: f64,
    pub fk_norm2: f64,
    pub gk_norm2: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub reference_size: usize,
    /// Semidistance from the reference cloud to its even-indexed half.
    pub sampling_noise: f64,
    pub slope_fk: Option<f64>,
    pub slope_gk: Option<f64>,
    pub slope_finite_time: Option<f64>,
    /// Ladder positions `i` where `dist[i+1] > dist[i]`, with the size of the increase.
    pub inversions: Vec<(usize, f64)>,
}

impl StudyResult {
    /// At most one inversion, of size at most twice the sampling noise.
    pub fn distances_nonincreasing(&self) -> bool {
        self.inversions.len() <= 1 && self.inversions.iter().all(|&(_, d)| d <= 2.0 * self.sampling_noise)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,cloud_size,dist_to_ref,finite_time_sup,fk_norm2,gk_norm2")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:e},{:e},{:e},{:e}", r.k, r.cloud_size, r.dist_to_ref, r.finite_time_sup, r.fk_norm2, r.gk_norm2)?;
        }
        Ok(())
    }
}

fn steps_for(time: f64, k: f64) -> usize {
    (time / k).round() as usize
}

/// Residual-forcing norms for each `k` from the same initial data.
pub fn forcing_ladder(u0: &State, params: &StepParams, ladder: &[f64], t_star: f64, grid: &Grid) -> Result<Vec<(f64, f64)>> {
    ladder
        .iter()
        .map(|&k| {
            let p = StepParams { k, ..*params };
            let tr = run_trajectory(u0, &p, steps_for(t_star, k), grid)?;
            residual_forcing_norms(&tr, t_star)
        })
        .collect()
}

pub fn attractor_convergence_study(cfg: &StudyConfig) -> Result<StudyResult> {
    let lad = &cfg.ladder;
    if lad.is_empty() {
        return Err(Error::EmptySet);
    }
    if lad.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("ladder must be strictly descending".into()));
    }
    let kmin = *lad.last().expect("nonempty");
    if !(cfg.k_ref < kmin / 4.0) {
        return Err(Error::Precondition(format!("k_ref = {} must be below min(k)/4 = {}", cfg.k_ref, kmin / 4.0)));
    }
    if !cfg.distance_only && lad.len() < 4 {
        return Err(Error::Precondition(format!("slope fits need at least 4 ladder points, got {}", lad.len())));
    }
    let cloud = |k: f64| {
        let p = StepParams { k, ..cfg.params };
        sample_attractor(
            &cfg.ensemble,
            &p,
            &cfg.grid,
            steps_for(cfg.burn_in_time, k),
            cfg.n_samples,
            steps_for(cfg.stride_time, k).max(1),
            cfg.r1,
        )
    };
    let reference = cloud(cfg.k_ref)?;
    let even: Vec<State> = reference.points.iter().step_by(2).cloned().collect();
    let sampling_noise = hausdorff_semidistance(&reference.points, &even)?;
    let forcing = forcing_ladder(&cfg.forcing_initial, &cfg.params, lad, cfg.t_star, &cfg.grid)?;
    let mut rows = Vec::with_capacity(lad.len());
    for (&k, &(fk, gk)) in lad.iter().zip(&forcing) {
        let c = cloud(k)?;
        let dist = hausdorff_semidistance(&c.points, &reference.points)?;
        let stride = (c.points.len() / cfg.finite_time_points.max(1)).max(1);
        let starts: Vec<State> = c.points.iter().step_by(stride).take(cfg.finite_time_points.max(1)).cloned().collect();
        let p = StepParams { k, ..cfg.params };
        let sup = finite_time_divergence(&starts, &p, cfg.k_ref, cfg.t_star, &cfg.grid)?;
        rows.push(StudyRow { k, cloud_size: c.points.len(), dist_to_ref: dist, finite_time_sup: sup, fk_norm2: fk, gk_norm2: gk });
    }
    let inversions = rows
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].dist_to_ref > w[0].dist_to_ref)
        .map(|(i, w)| (i, w[1].dist_to_ref - w[0].dist_to_ref))
        .collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
    let fit = |f: fn(&StudyRow) -> f64| -> Option<f64> {
        if cfg.distance_only {
            return None;
        }
        fit_loglog_slope(&ks, &rows.iter().map(f).collect::<Vec<_>>()).ok()
    };
    Ok(StudyResult {
        slope_fk: fit(|r| r.fk_norm2),
        slope_gk: fit(|r| r.gk_norm2),
        slope_finite_time: fit(|r| r.finite_time_sup),
        rows,
        reference_size: reference.points.len(),
        sampling_noise,
        inversions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fields::{make_grid, CellField, VelocityField};

    fn const_state(g: &Grid, c: f64) -> State {
        State { v: VelocityField::zeros(g), th: CellField::from_fn(g, |_, _| c) }
    }

    #[test]
    fn semidistance_is_asymmetric() {
        let g = make_grid(4, 4).unwrap();
        let p = const_state(&g, 0.0);
        let q = const_state(&g, 3.0);
        let b = vec![p.clone(), q.clone()];
        let c = vec![p.clone()];
        assert!((hausdorff_semidistance(&b, &c).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(hausdorff_semidistance(&c, &b).unwrap(), 0.0);
        assert!(hausdorff_semidistance(&[], &c).is_err());
    }

    #[test]
    fn slope_of_a_power_law() {
        let x = [0.04, 0.02, 0.01, 0.005];
        let y: Vec<f64> = x.iter().map(|k: &f64| 3.0 * k.powf(1.5)).collect();
        assert!((fit_loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
    }
}

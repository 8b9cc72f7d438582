//! Fully implicit Euler step for the coupled velocity/temperature system.
//!
//! Each step solves
//! `v + k nu A1 v + k P L_v v - k P(e2 th) = v_prev` (in the solenoidal subspace) and
//! `th + k kappa A2 th + k L_v th - k v2 = th_prev`
//! with everything at the new time. The nonlinearity is handled by a Picard iteration that
//! lags only the advecting velocity; every Picard iterate is a linear Oseen-type problem,
//! solved by GMRES preconditioned with the exact constant-coefficient solve (Stokes plus
//! buoyancy, one banded factorisation per x1-wavenumber).

use crate::error::{Error, Result};
use crate::fourier::{CoupledCoeffs, CoupledSolver};
use crate::grid_fields::{Grid, Projector, State};
use crate::krylov::gmres;
use crate::operators::{advect_1, advect_2, buoyancy_pairing, laplacian_a1, laplacian_a2, temperature_to_faces, vertical_to_cells};

/// Physical and solver parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub nu: f64,
    pub kappa: f64,
    pub k: f64,
    /// Absolute tolerance on the L2 norm of each fully implicit residual.
    pub eps_nl: f64,
    pub max_picard: usize,
    /// With `false` the buoyancy and `v2` source terms are dropped (diagnostic mode).
    pub coupling: bool,
    /// Refuse time steps above the absorbing-ball gate.
    pub strict: bool,
    /// Retry a failed step as two half steps.
    pub halving_fallback: bool,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for StepParams {
    fn default() -> Self {
        StepParams {
            nu: 0.1,
            kappa: 0.1,
            k: 0.01,
            eps_nl: 1e-11,
            max_picard: 100,
            coupling: true,
            strict: false,
            halving_fallback: false,
            gmres_restart: 60,
            gmres_max_iter: 2000,
        }
    }
}

impl StepParams {
    /// `min(1/(2 kappa), 1/nu)`, the step size below which the absorbing-ball bounds hold.
    pub fn gate_kappa1(&self) -> f64 {
        (0.5 / self.kappa).min(1.0 / self.nu)
    }

    /// Slack allowed in the per-step energy identities.
    pub fn ledger_slack(&self, norm: f64) -> f64 {
        10.0 * self.eps_nl * (norm + 1.0)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.nu > 0.0 && self.kappa > 0.0 && self.k > 0.0 && self.eps_nl > 0.0;
        if !ok || !(self.nu.is_finite() && self.kappa.is_finite() && self.k.is_finite()) {
            return Err(Error::Precondition(format!(
                "need positive nu, kappa, k, eps_nl (got {}, {}, {}, {})",
                self.nu, self.kappa, self.k, self.eps_nl
            )));
        }
        if self.strict && self.k > self.gate_kappa1() {
            return Err(Error::Gate { k: self.k, gate: "kappa1", bound: self.gate_kappa1() });
        }
        Ok(())
    }
}

/// Terms of the per-step energy identities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    pub v_sq: f64,
    pub v_prev_sq: f64,
    pub dv_sq: f64,
    pub v_h1_sq: f64,
    pub th_sq: f64,
    pub th_prev_sq: f64,
    pub dth_sq: f64,
    pub th_h1_sq: f64,
    /// `(e2 th, v)` at the new time, zero when the coupling is off.
    pub buoyancy: f64,
}

impl EnergyLedger {
    fn new(prev: &State, next: &State, coupling: bool) -> Self {
        let d = next.diff(prev);
        EnergyLedger {
            v_sq: next.v.norm_sq(),
            v_prev_sq: prev.v.norm_sq(),
            dv_sq: d.v.norm_sq(),
            v_h1_sq: next.v.h1_sq(),
            th_sq: next.th.norm_sq(),
            th_prev_sq: prev.th.norm_sq(),
            dth_sq: d.th.norm_sq(),
            th_h1_sq: next.th.h1_sq(),
            buoyancy: if coupling { buoyancy_pairing(&next.th, &next.v) } else { 0.0 },
        }
    }

    /// `|v|^2 - |v_prev|^2 + |v - v_prev|^2 + 2 nu k ||v||^2 - 2k (e2 th, v)`, zero up to
    /// the nonlinear residual.
    pub fn velocity_imbalance(&self, nu: f64, k: f64) -> f64 {
        self.v_sq - self.v_prev_sq + self.dv_sq + 2.0 * nu * k * self.v_h1_sq - 2.0 * k * self.buoyancy
    }

    /// The temperature analogue, with `(v2, th)` equal to the same pairing.
    pub fn temperature_imbalance(&self, kappa: f64, k: f64) -> f64 {
        self.th_sq - self.th_prev_sq + self.dth_sq + 2.0 * kappa * k * self.th_h1_sq - 2.0 * k * self.buoyancy
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub picard_iters: usize,
    pub krylov_iters: usize,
    pub residual_v: f64,
    pub residual_th: f64,
    pub ledger: EnergyLedger,
    /// The step was completed as two half steps.
    pub halved: bool,
}

/// Reusable implicit Euler stepper; owns the factorisations for one `(grid, nu, kappa, k)`.
pub struct ImplicitEuler {
    grid: Grid,
    params: StepParams,
    proj: Projector,
    precond: CoupledSolver,
}

impl ImplicitEuler {
    pub fn new(grid: &Grid, params: StepParams) -> Result<Self> {
        params.validate()?;
        let co = CoupledCoeffs {
            alpha: 1.0,
            visc: params.k * params.nu,
            diff: params.k * params.kappa,
            buoy: if params.coupling { params.k } else { 0.0 },
        };
        Ok(ImplicitEuler { grid: *grid, params, proj: Projector::new(grid), precond: CoupledSolver::new(grid, co)? })
    }

    pub fn params(&self) -> &StepParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Left-hand side of the step with advecting velocity `y`, applied to `u`.
    fn apply(&self, y: &crate::grid_fields::VelocityField, u: &State) -> State {
        let p = &self.params;
        let k = p.k;
        let mut v = u.v.clone();
        v.axpy(k * p.nu, &laplacian_a1(&u.v));
        v.axpy(k, &advect_1(y, &u.v));
        let mut th = u.th.clone();
        th.axpy(k * p.kappa, &laplacian_a2(&u.th));
        th.axpy(k, &advect_2(y, &u.th));
        if p.coupling {
            v.axpy(-k, &temperature_to_faces(&u.th));
            th.axpy(-k, &vertical_to_cells(&u.v));
        }
        State { v: self.proj.apply(&v), th }
    }

    fn precondition(&self, r: &State) -> State {
        let (v, th) = self.precond.solve(&r.v, &r.th);
        State { v, th }
    }

    fn rhs(&self, prev: &State) -> State {
        State { v: self.proj.apply(&prev.v), th: prev.th.clone() }
    }

    /// Fully implicit residual of `u` as a solution of the step from `prev`.
    pub fn residual(&self, prev: &State, u: &State) -> State {
        self.apply(&u.v, u).diff(&self.rhs(prev))
    }

    /// One step, with the previous state as the initial Picard guess.
    pub fn step(&self, prev: &State) -> Result<(State, StepReport)> {
        self.step_from_guess(prev, prev)
    }

    /// One step from an explicit initial Picard guess.
    pub fn step_from_guess(&self, prev: &State, guess: &State) -> Result<(State, StepReport)> {
        prev.check(&self.grid)?;
        guess.check(&self.grid)?;
        match self.picard(prev, guess) {
            Ok(r) => Ok(r),
            Err(e @ Error::NonConvergence { .. }) if self.params.halving_fallback => {
                let half = ImplicitEuler::new(&self.grid, StepParams { k: 0.5 * self.params.k, halving_fallback: false, ..self.params })
                    .map_err(|_| e)?;
                let (mid, r1) = half.step(prev)?;
                let (next, r2) = half.step(&mid)?;
                let report = StepReport {
                    picard_iters: r1.picard_iters + r2.picard_iters,
                    krylov_iters: r1.krylov_iters + r2.krylov_iters,
                    residual_v: r2.residual_v,
                    residual_th: r2.residual_th,
                    ledger: EnergyLedger::new(prev, &next, self.params.coupling),
                    halved: true,
                };
                Ok((next, report))
            }
            Err(e) => Err(e),
        }
    }

    fn picard(&self, prev: &State, guess: &State) -> Result<(State, StepReport)> {
        let p = &self.params;
        let f = self.rhs(prev);
        let mut u = guess.clone();
        let mut iters = 0;
        let mut krylov = 0;
        loop {
            let r = self.apply(&u.v, &u).diff(&f);
            let (rv, rt) = (r.v.norm_sq().sqrt(), r.th.norm_sq().sqrt());
            if !(rv.is_finite() && rt.is_finite()) {
                return Err(Error::NonConvergence { iters, residual: f64::INFINITY });
            }
            if rv <= p.eps_nl && rt <= p.eps_nl {
                let ledger = EnergyLedger::new(prev, &u, p.coupling);
                let report = StepReport { picard_iters: iters, krylov_iters: krylov, residual_v: rv, residual_th: rt, ledger, halved: false };
                return Ok((u, report));
            }
            if iters >= p.max_picard {
                return Err(Error::NonConvergence { iters, residual: rv.max(rt) });
            }
            let y = u.v.clone();
            let tol = (0.5 * p.eps_nl).max(1e-2 * rv.hypot(rt));
            let out = gmres(|x| self.apply(&y, x), |x| self.precondition(x), &f, u, tol, p.gmres_restart, p.gmres_max_iter);
            if !out.residual.is_finite() {
                return Err(Error::LinearSolve(format!("linearised solve broke down at Picard iteration {iters}")));
            }
            krylov += out.iters;
            u = out.x;
            iters += 1;
        }
    }

    /// Advance `n_steps` without storing the intermediate states.
    pub fn advance(&self, u0: &State, n_steps: usize) -> Result<State> {
        let mut u = u0.clone();
        for n in 1..=n_steps {
            u = self.step(&u).map_err(|e| Error::StepFailed { step: n, source: Box::new(e) })?.0;
        }
        Ok(u)
    }
}

/// One implicit Euler step with a freshly assembled stepper.
pub fn implicit_euler_step(prev: &State, params: &StepParams, grid: &Grid) -> Result<(State, StepReport)> {
    ImplicitEuler::new(grid, *params)?.step(prev)
}

/// A computed trajectory `u^0, ..., u^N` with the report of every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: StepParams,
    pub states: Vec<State>,
    /// `reports[n - 1]` belongs to the step producing `states[n]`.
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.params.k
    }
}

/// Run `n_steps` from `u0`, keeping every state.
pub fn run_trajectory(u0: &State, params: &StepParams, n_steps: usize, grid: &Grid) -> Result<Trajectory> {
    u0.check(grid)?;
    let stepper = ImplicitEuler::new(grid, *params)?;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut reports = Vec::with_capacity(n_steps);
    states.push(u0.clone());
    for n in 1..=n_steps {
        let (next, rep) = stepper.step(&states[n - 1]).map_err(|e| Error::StepFailed { step: n, source: Box::new(e) })?;
        states.push(next);
        reports.push(rep);
    }
    Ok(Trajectory { grid: *grid, params: *params, states, reports })
}

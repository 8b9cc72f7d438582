//! Named constants of the a priori theory and monitors that check the corresponding bounds
//! along computed trajectories.
//!
//! The constants are nested exponentials of each other, so they are carried as natural
//! logarithms ([`Magnitude`]). Even so, several of them exceed what an `f64` logarithm can
//! hold for moderate viscosities; they then report `+inf` (and the time-step thresholds built
//! from them report `0`), which is the honest answer for a bound that large.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid_fields::{Grid, State};
use crate::maximum_principle::truncations;
use crate::stepper::{StepParams, Trajectory};

/// A nonnegative real stored through its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Magnitude {
    ln: f64,
}

impl Magnitude {
    pub const ZERO: Magnitude = Magnitude { ln: f64::NEG_INFINITY };
    pub const ONE: Magnitude = Magnitude { ln: 0.0 };
    pub const INFINITY: Magnitude = Magnitude { ln: f64::INFINITY };

    /// Panics on negative or NaN input.
    pub fn new(x: f64) -> Self {
        assert!(x >= 0.0, "magnitude of a negative or NaN value: {x}");
        Magnitude { ln: x.ln() }
    }

    pub fn from_ln(ln: f64) -> Self {
        Magnitude { ln: if ln.is_nan() { f64::INFINITY } else { ln } }
    }

    /// `e^x`.
    pub fn exp_of(x: f64) -> Self {
        Self::from_ln(x)
    }

    pub fn ln(self) -> f64 {
        self.ln
    }

    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// The value as an `f64`, saturating to `inf` or `0`.
    pub fn value(self) -> f64 {
        self.ln.exp()
    }

    /// The value fits in an `f64` without saturating.
    pub fn is_representable(self) -> bool {
        self.ln.is_finite() && self.ln < 709.0 && self.ln > -708.0
    }

    pub fn is_infinite(self) -> bool {
        self.ln == f64::INFINITY
    }

    pub fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Self::ONE;
        }
        Self::from_ln(self.ln * p)
    }

    pub fn sqrt(self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(self) -> Self {
        Self::from_ln(-self.ln)
    }

    /// `e^self`.
    pub fn exp(self) -> Self {
        Self::from_ln(self.value())
    }

    pub fn scale(self, c: f64) -> Self {
        self * Magnitude::new(c)
    }

    pub fn min(self, o: Self) -> Self {
        if o.ln < self.ln { o } else { self }
    }

    pub fn max(self, o: Self) -> Self {
        if o.ln > self.ln { o } else { self }
    }
}

impl std::ops::Mul for Magnitude {
    type Output = Magnitude;
    /// `0 * inf` is resolved upward, to `inf`.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, o: Self) -> Self {
        Self::from_ln(self.ln + o.ln)
    }
}

impl std::ops::Div for Magnitude {
    type Output = Magnitude;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        Self::from_ln(self.ln - o.ln)
    }
}

impl std::ops::Add for Magnitude {
    type Output = Magnitude;
    fn add(self, o: Self) -> Self {
        let (hi, lo) = if self.ln >= o.ln { (self.ln, o.ln) } else { (o.ln, self.ln) };
        if hi.is_infinite() {
            return Magnitude { ln: hi };
        }
        Magnitude { ln: hi + (lo - hi).exp().ln_1p() }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ln == f64::INFINITY {
            write!(f, "inf")
        } else if self.ln == f64::NEG_INFINITY {
            write!(f, "0")
        } else if self.is_representable() {
            write!(f, "{:.6e}", self.value())
        } else {
            write!(f, "10^{:.6e}", self.log10())
        }
    }
}

/// The data the constants depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantInputs {
    pub nu: f64,
    pub kappa: f64,
    pub cb_hat: f64,
    /// `|v0|`, `||v0||`, `|th0|`, `||th0||`.
    pub v0_l2: Magnitude,
    pub v0_h1: Magnitude,
    pub th0_l2: Magnitude,
    pub th0_h1: Magnitude,
    /// `|(th0 - x2)_+| + |(th0 - x2 + 1)_-|`.
    pub th0_trunc: Magnitude,
    /// Horizon `T` of the finite-interval temperature estimates.
    pub horizon_t: f64,
    /// Interval length `r >= 4 kappa1` of the uniform velocity estimate.
    pub r: f64,
}

impl ConstantInputs {
    pub fn from_state(u0: &State, p: &StepParams, g: &Grid, cb_hat: f64, horizon_t: f64, r: f64) -> Result<Self> {
        u0.check(g)?;
        let (tp, tm) = truncations(&u0.th, g)?;
        Ok(ConstantInputs {
            nu: p.nu,
            kappa: p.kappa,
            cb_hat,
            v0_l2: Magnitude::new(u0.v.norm_sq().sqrt()),
            v0_h1: Magnitude::new(u0.v.h1_sq().sqrt()),
            th0_l2: Magnitude::new(u0.th.norm_sq().sqrt()),
            th0_h1: Magnitude::new(u0.th.h1_sq().sqrt()),
            th0_trunc: Magnitude::new(tp.norm_sq().sqrt() + tm.norm_sq().sqrt()),
            horizon_t,
            r,
        })
    }

    /// Worst-case data of `V`-norm `s`: every norm equal to `s` (Poincare), truncations `sqrt 2 s`.
    pub fn worst_case(&self, s: Magnitude) -> Self {
        ConstantInputs {
            v0_l2: s,
            v0_h1: s,
            th0_l2: s,
            th0_h1: s,
            th0_trunc: s.scale(std::f64::consts::SQRT_2),
            ..*self
        }
    }

    /// `|u0|` in `H`.
    pub fn h_norm(&self) -> Magnitude {
        (self.v0_l2.powf(2.0) + self.th0_l2.powf(2.0)).sqrt()
    }

    /// `||u0||` in `V`.
    pub fn v_norm(&self) -> Magnitude {
        (self.v0_h1.powf(2.0) + self.th0_h1.powf(2.0)).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.nu, self.kappa, self.cb_hat, self.horizon_t, self.r].iter().all(|x| x.is_finite() && *x > 0.0);
        if !ok {
            return Err(Error::Precondition(format!(
                "constants need positive nu, kappa, cb_hat, T, r (got {}, {}, {}, {}, {})",
                self.nu, self.kappa, self.cb_hat, self.horizon_t, self.r
            )));
        }
        let kappa1 = (0.5 / self.kappa).min(1.0 / self.nu);
        if self.r < 4.0 * kappa1 {
            return Err(Error::Precondition(format!("r = {} is below 4 kappa1 = {}", self.r, 4.0 * kappa1)));
        }
        Ok(())
    }
}

/// `kappa1 = min(1/(2 kappa), 1/nu)`.
pub fn kappa1(nu: f64, kappa: f64) -> f64 {
    (0.5 / kappa).min(1.0 / nu)
}

/// `rho0 = 2 + sqrt 5 / nu`, the radius of the absorbing ball in `H`.
pub fn rho0(nu: f64) -> f64 {
    2.0 + 5f64.sqrt() / nu
}

/// Entry time into the temperature ball of radius 2: `2 ln(2R) / (kappa k)`, clamped at 0.
pub fn n0_theta(r: f64, kappa: f64, k: f64) -> f64 {
    (2.0 * (2.0 * r).ln() / (kappa * k)).max(0.0)
}

/// Additional time for the velocity: `(2/(nu k)) ln(nu^2 [R^2 + (4/nu^2)(1 + 2R^2)])`, clamped at 0.
pub fn n0_velocity(r: f64, nu: f64, k: f64) -> f64 {
    let arg = nu * nu * (r * r + 4.0 / (nu * nu) * (1.0 + 2.0 * r * r));
    (2.0 / (nu * k) * arg.ln()).max(0.0)
}

/// Step index `N0 = ceil(N0^1 + N0^2)` after which the pair stays in the `H` ball.
pub fn n0_pair(r: f64, nu: f64, kappa: f64, k: f64) -> usize {
    (n0_theta(r, kappa, k) + n0_velocity(r, nu, k)).ceil() as usize
}

/// `N1 = N0 + floor(1/k)`.
pub fn n1_pair(r: f64, nu: f64, kappa: f64, k: f64) -> usize {
    n0_pair(r, nu, kappa, k) + (1.0 / k).floor() as usize
}

/// `R*^2 = 2 rho0^2 (2 + 1/nu + 1/kappa)(1/nu + 1/kappa)`.
pub fn r_star(nu: f64, kappa: f64) -> f64 {
    let r0 = rho0(nu);
    (2.0 * r0 * r0 * (2.0 + 1.0 / nu + 1.0 / kappa) * (1.0 / nu + 1.0 / kappa)).sqrt()
}

/// Bound on `nu ||v^l||^2 + kappa ||th^l||^2` for the pigeonhole step `l`.
pub fn pigeonhole_bound(nu: f64, kappa: f64) -> f64 {
    let r0 = rho0(nu);
    2.0 * r0 * r0 * (2.0 + 1.0 / nu + 1.0 / kappa)
}

/// Every constant that depends on the data, for one set of inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantChain {
    pub m1: Magnitude,
    pub k1: Magnitude,
    pub k2: Magnitude,
    pub c1: Magnitude,
    pub c2: Magnitude,
    pub kappa1: Magnitude,
    pub kappa2: Magnitude,
    pub t0: f64,
    pub rho1: Magnitude,
    pub k3_initial: Magnitude,
    pub k3_absorbed: Magnitude,
    pub kappa3_initial: Magnitude,
    pub kappa3_absorbed: Magnitude,
    pub kappa4: Magnitude,
    pub k4: Magnitude,
    pub kappa5: Magnitude,
    pub m2: Magnitude,
    pub g_theta: Magnitude,
    pub m3: Magnitude,
    pub kappa6: Magnitude,
    pub k5: Magnitude,
}

fn mag(x: f64) -> Magnitude {
    Magnitude::new(x)
}

impl ConstantChain {
    pub fn evaluate(inp: &ConstantInputs) -> Result<Self> {
        inp.validate()?;
        let (nu, kappa) = (inp.nu, inp.kappa);
        let cb = mag(inp.cb_hat);
        let m1 = Magnitude::ONE + inp.th0_trunc;
        let k1 = (inp.v0_l2.powf(2.0) + m1.powf(2.0) / mag(nu * nu)).sqrt();
        let k2 = (Magnitude::ONE + (cb * cb * k1 * k1).scale(2.0 / (nu * nu))).scale(2.0);
        let c1 = cb.powf(4.0).scale(27.0 / (2.0 * nu.powi(3)));
        let c2 = cb.powf(4.0).scale(27.0 / (32.0 * kappa * kappa));
        let kappa1 = mag(kappa1(nu, kappa));
        let kappa2 = (c1 * k1 * k1 * m1 * m1).scale(40.0 / (nu * nu)).recip();
        // T0 = N0 k does not depend on k
        let r_h = inp.h_norm().value();
        let t0 = n0_theta(r_h, kappa, 1.0) + n0_velocity(r_h, nu, 1.0);
        let k3 = |a: Magnitude, t: f64| -> Magnitude {
            let lead = a.powf(2.0) + (m1 * m1).scale(28.0 * t / (5.0 * nu));
            let expo = mag(0.2) + (c1 * k1 * k1 * (k1 * k1 + (m1 * m1).scale(3.0 * t / nu))).scale(2.0 / nu);
            (lead * expo.exp()).sqrt()
        };
        let kappa3 = |k3v: Magnitude| (c1 * k1 * k1 * k2 * k3v * k3v).scale(10.0).recip();
        let r = inp.r;
        let r0 = mag(rho0(nu));
        let rho1_sq = (r0 * r0).scale(2.0 / nu * (1.0 / r + 1.0 / nu) + 14.0 * r / (5.0 * nu))
            * (c1 * r0.powf(4.0)).scale(2.0 / nu * (1.0 + 3.0 * r / nu)).exp();
        let rho1 = rho1_sq.sqrt();
        let k3_initial = k3(inp.v0_h1, t0 + r);
        let k3_absorbed = k3(rho1, r);
        let kappa3_initial = kappa3(k3_initial);
        let kappa3_absorbed = kappa3(k3_absorbed);
        let kappa4 = kappa1.min(kappa2).min(kappa3_initial).min(kappa3_absorbed);
        let k4 = k3_initial.max(k3_absorbed);
        let growth = c2 * k1 * k1 * k4 * k4;
        let kappa5 = growth.scale(2.0).recip();
        let t = inp.horizon_t;
        let g_theta = (growth.scale(t * 4f64.ln())).exp() * (inp.th0_h1.powf(2.0) + (k4 * k4).scale(kappa).recip().scale(2.0));
        let m2_sq = (m1 * m1).scale(1.0 / t) + (k1 * k1).scale(1.0 / kappa) + (k1 * k1).scale(t);
        let m2 = (m2_sq.scale(2.0 / kappa) * growth.scale(4.0 * t).exp()).sqrt();
        let m3 = g_theta.sqrt().max(m2);
        let kappa6 = kappa4.min(kappa5).min(mag(t / 2.0));
        let k5 = (k4 * k4 + m3 * m3).sqrt();
        Ok(ConstantChain {
            m1,
            k1,
            k2,
            c1,
            c2,
            kappa1,
            kappa2,
            t0,
            rho1,
            k3_initial,
            k3_absorbed,
            kappa3_initial,
            kappa3_absorbed,
            kappa4,
            k4,
            kappa5,
            m2,
            g_theta,
            m3,
            kappa6,
            k5,
        })
    }
}

/// One exported constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEntry {
    pub name: &'static str,
    pub value: Magnitude,
    pub provenance: &'static str,
}

/// All named constants for given initial data and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsTable {
    pub inputs: ConstantInputs,
    pub chain: ConstantChain,
    pub rho0: f64,
    /// `kappa7(||u0||)` and `K5(||u0||)`.
    pub kappa7: Magnitude,
    pub k5: Magnitude,
    pub r_star: f64,
    pub r1: Magnitude,
    pub kappa8: Magnitude,
    pub kappa0: Magnitude,
}

impl ConstantsTable {
    /// `kappa7(s)`: `kappa6` evaluated at worst-case data of `V`-norm `s`.
    pub fn kappa7_at(&self, s: Magnitude) -> Result<Magnitude> {
        Ok(ConstantChain::evaluate(&self.inputs.worst_case(s))?.kappa6)
    }

    /// `K5(s) = sqrt(K4^2 + M3^2)` at worst-case data of `V`-norm `s`.
    pub fn k5_at(&self, s: Magnitude) -> Result<Magnitude> {
        Ok(ConstantChain::evaluate(&self.inputs.worst_case(s))?.k5)
    }

    pub fn entries(&self) -> Vec<ConstantEntry> {
        let c = &self.chain;
        let e = |name, value, provenance| ConstantEntry { name, value, provenance };
        vec![
            e("cb_hat", mag(self.inputs.cb_hat), "sampled trilinear constant (lower estimate of c_b)"),
            e("M1", c.m1, "1 + |(th0 - x2)_+| + |(th0 - x2 + 1)_-|"),
            e("K1", c.k1, "sqrt(|v0|^2 + M1^2/nu^2)"),
            e("K2", c.k2, "2 (1 + 2 cb^2 K1^2 / nu^2)"),
            e("c1", c.c1, "27 cb^4 / (2 nu^3)"),
            e("c2", c.c2, "27 cb^4 / (32 kappa^2)"),
            e("kappa1", c.kappa1, "min(1/(2 kappa), 1/nu)"),
            e("kappa2", c.kappa2, "nu^2 / (40 c1 K1^2 M1^2)"),
            e("T0", mag(c.t0), "N0 k with R = |u0| (independent of k)"),
            e("rho0", mag(self.rho0), "2 + sqrt(5)/nu"),
            e("rho1", c.rho1, "rho0^2 [(2/nu)(1/r + 1/nu) + 14 r/(5 nu)] exp((2/nu) c1 rho0^4 (1 + 3r/nu)), square root"),
            e("K3_initial", c.k3_initial, "K3(||v0||, T0 + r), K3^2 = (a^2 + 28 M1^2 T/(5 nu)) exp(1/5 + (2/nu) c1 K1^2 (K1^2 + 3 M1^2 T/nu))"),
            e("K3_absorbed", c.k3_absorbed, "K3(rho1, r)"),
            e("kappa3_initial", c.kappa3_initial, "1 / (10 c1 K1^2 K2 K3^2(||v0||, T0 + r))"),
            e("kappa3_absorbed", c.kappa3_absorbed, "1 / (10 c1 K1^2 K2 K3^2(rho1, r))"),
            e("kappa4", c.kappa4, "min(kappa1, kappa2, kappa3_initial, kappa3_absorbed)"),
            e("K4", c.k4, "max(K3_initial, K3_absorbed)"),
            e("kappa5", c.kappa5, "1 / (2 c2 K1^2 K4^2)"),
            e("G_theta", c.g_theta, "4^(c2 K1^2 K4^2 T) (||th0||^2 + 2/(kappa K4^2)), as printed (a squared quantity)"),
            e("M2", c.m2, "sqrt((2/kappa)(M1^2/T + K1^2/kappa + K1^2 T) exp(4 c2 K1^2 K4^2 T))"),
            e("M3", c.m3, "max(sqrt(G_theta), M2); square root taken so that M3 bounds ||th^n||"),
            e("kappa6", c.kappa6, "min(kappa4, kappa5, T/2)"),
            e("kappa7", self.kappa7, "kappa6 at worst-case data of V-norm ||u0|| (all norms = s, M1 = 1 + sqrt(2) s)"),
            e("K5", self.k5, "sqrt(K4^2 + M3^2) at worst-case data of V-norm ||u0||"),
            e("R_star", mag(self.r_star), "sqrt(2 rho0^2 (2 + 1/nu + 1/kappa)(1/nu + 1/kappa))"),
            e("R1", self.r1, "K5(R_star)"),
            e("kappa8", self.kappa8, "min(1, kappa1, kappa7(R_star))"),
            e("kappa0", self.kappa0, "min(kappa8, kappa7(R1))"),
        ]
    }
}

/// Evaluate every constant in dependency order.
pub fn build_constants(inputs: &ConstantInputs) -> Result<ConstantsTable> {
    let chain = ConstantChain::evaluate(inputs)?;
    let worst = |s: Magnitude| ConstantChain::evaluate(&inputs.worst_case(s));
    let at_u0 = worst(inputs.v_norm())?;
    let rs = r_star(inputs.nu, inputs.kappa);
    let at_rs = worst(mag(rs))?;
    let r1 = at_rs.k5;
    let kappa8 = Magnitude::ONE.min(chain.kappa1).min(at_rs.kappa6);
    let kappa0 = kappa8.min(worst(r1)?.kappa6);
    Ok(ConstantsTable {
        inputs: *inputs,
        chain,
        rho0: rho0(inputs.nu),
        kappa7: at_u0.kappa6,
        k5: at_u0.k5,
        r_star: rs,
        r1,
        kappa8,
        kappa0,
    })
}

/// The step-size condition for uniqueness of the implicit step:
/// `min{kappa7, 1/(2(cb K5^2/nu + c K5^2 + 1/kappa)), 1/(2(c K5^2 + c/nu))}`.
pub fn uniqueness_bound_formula(kappa7: Magnitude, k5: Magnitude, cb: f64, c: f64, nu: f64, kappa: f64) -> Magnitude {
    let k5sq = k5 * k5;
    let t2 = (k5sq.scale(cb / nu) + k5sq.scale(c) + mag(1.0 / kappa)).scale(2.0).recip();
    let t3 = (k5sq.scale(c) + mag(c / nu)).scale(2.0).recip();
    kappa7.min(t2).min(t3)
}

/// Uniqueness threshold for data of `V`-norm `u0_norm`, with `cb_hat` standing in for both `c_b`
/// and the unnamed constant `c`.
pub fn uniqueness_timestep_bound(u0_norm: f64, constants: &ConstantsTable) -> Result<Magnitude> {
    let s = mag(u0_norm);
    let cb = constants.inputs.cb_hat;
    Ok(uniqueness_bound_formula(
        constants.kappa7_at(s)?,
        constants.k5_at(s)?,
        cb,
        cb,
        constants.inputs.nu,
        constants.inputs.kappa,
    ))
}

/// The same threshold with the a priori `K5` replaced by a measured bound on `||v^n||` and
/// `||th^n||` of one of the two solutions, which is all the uniqueness argument uses.
pub fn a_posteriori_uniqueness_bound(measured_h1: f64, cb: f64, nu: f64, kappa: f64) -> f64 {
    uniqueness_bound_formula(Magnitude::INFINITY, mag(measured_h1), cb, cb, nu, kappa).value()
}

/// Outcome of one inequality `lhs <= rhs + slack` at index `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs + slack - lhs`; negative on failure.
    pub margin: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn upper(n: usize, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = rhs + slack - lhs;
        Verdict { n, lhs, rhs, margin, pass: lhs <= rhs + slack }
    }
}

/// A named sequence of verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictSeries {
    pub name: String,
    pub items: Vec<Verdict>,
}

impl VerdictSeries {
    pub fn new(name: &str) -> Self {
        VerdictSeries { name: name.to_string(), items: Vec::new() }
    }

    pub fn push(&mut self, v: Verdict) {
        self.items.push(v);
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|v| v.pass)
    }

    pub fn first_failure(&self) -> Option<&Verdict> {
        self.items.iter().find(|v| !v.pass)
    }

    pub fn min_margin(&self) -> f64 {
        self.items.iter().map(|v| v.margin).fold(f64::INFINITY, f64::min)
    }

    /// `n,lhs,rhs,margin,pass` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,lhs,rhs,margin,pass")?;
        for v in &self.items {
            writeln!(w, "{},{:e},{:e},{:e},{}", v.n, v.lhs, v.rhs, v.margin, v.pass)?;
        }
        Ok(())
    }
}

/// Slack shared by all trajectory monitors: `eps_ledger` per step, plus `c_h h^2` wherever the
/// argument relies on the maximum principle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackPolicy {
    pub eps_nl: f64,
    pub mesh: f64,
}

impl SlackPolicy {
    pub fn new(p: &StepParams, g: &Grid, mesh_coeff: f64) -> Self {
        SlackPolicy { eps_nl: p.eps_nl, mesh: mesh_coeff * g.h() * g.h() }
    }

    pub fn per_step(&self, norm: f64) -> f64 {
        10.0 * self.eps_nl * (norm + 1.0)
    }
}

/// Aligned dyadic windows `[1 + a 2^j, (a + 1) 2^j]` inside `1..=n`, plus the full range.
pub fn dyadic_windows(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut len = 1;
    while len <= n {
        let mut a = 0;
        while (a + 1) * len <= n {
            out.push((1 + a * len, (a + 1) * len));
            a += 1;
        }
        len *= 2;
    }
    if !out.contains(&(1, n)) && n > 0 {
        out.push((1, n));
    }
    out
}

/// Per-step energy identities and inequalities.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub identity_v: VerdictSeries,
    pub identity_th: VerdictSeries,
    pub velocity: VerdictSeries,
    pub temperature: VerdictSeries,
}

impl EnergyReport {
    pub fn all_pass(&self) -> bool {
        self.identity_v.all_pass() && self.identity_th.all_pass() && self.velocity.all_pass() && self.temperature.all_pass()
    }
}

pub fn check_energy_ledger(traj: &Trajectory) -> EnergyReport {
    let p = &traj.params;
    let (nu, kappa, k) = (p.nu, p.kappa, p.k);
    let mut out = EnergyReport {
        identity_v: VerdictSeries::new("energy-identity-velocity"),
        identity_th: VerdictSeries::new("energy-identity-temperature"),
        velocity: VerdictSeries::new("energy-inequality-velocity"),
        temperature: VerdictSeries::new("energy-inequality-temperature"),
    };
    for (i, r) in traj.reports.iter().enumerate() {
        let n = i + 1;
        let l = &r.ledger;
        let sv = p.ledger_slack(l.v_sq.sqrt());
        let st = p.ledger_slack(l.th_sq.sqrt());
        out.identity_v.push(Verdict::upper(n, l.velocity_imbalance(nu, k).abs(), 0.0, sv));
        out.identity_th.push(Verdict::upper(n, l.temperature_imbalance(kappa, k).abs(), 0.0, st));
        let lv = l.v_sq - l.v_prev_sq + l.dv_sq + nu * k * l.v_h1_sq;
        out.velocity.push(Verdict::upper(n, lv, k / nu * l.th_sq, sv));
        let lt = l.th_sq - l.th_prev_sq + l.dth_sq + kappa * k * l.th_h1_sq;
        out.temperature.push(Verdict::upper(n, lt, k / kappa * l.v_sq, st));
    }
    out
}

/// Summed dissipation bounds on one window `i..=m`.
pub fn check_dissipation_sums(traj: &Trajectory, i: usize, m: usize) -> Result<(Verdict, Verdict)> {
    let len = traj.steps();
    if i < 1 || i > m || m > len {
        return Err(Error::OutOfRange { index: if m > len { m } else { i }, len });
    }
    let p = &traj.params;
    let (mut sv, mut st, mut tv, mut tt, mut slack_v, mut slack_t) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &traj.reports[i - 1..m] {
        let l = &r.ledger;
        sv += l.v_h1_sq;
        st += l.th_h1_sq;
        tv += l.th_sq;
        tt += l.v_sq;
        slack_v += p.ledger_slack(l.v_sq.sqrt());
        slack_t += p.ledger_slack(l.th_sq.sqrt());
    }
    let prev = &traj.states[i - 1];
    let v = Verdict::upper(m, p.nu * p.k * sv, prev.v.norm_sq() + p.k / p.nu * tv, slack_v);
    let t = Verdict::upper(m, p.kappa * p.k * st, prev.th.norm_sq() + p.k / p.kappa * tt, slack_t);
    Ok((v, t))
}

/// Dissipation sums on every dyadic window; `n` of each verdict is the window end.
pub fn check_dissipation_windows(traj: &Trajectory) -> (VerdictSeries, VerdictSeries) {
    let mut v = VerdictSeries::new("dissipation-sum-velocity");
    let mut t = VerdictSeries::new("dissipation-sum-temperature");
    for (i, m) in dyadic_windows(traj.steps()) {
        let (a, b) = check_dissipation_sums(traj, i, m).expect("windows lie inside the trajectory");
        v.push(a);
        t.push(b);
    }
    (v, t)
}

/// `|v^n|^2 <= (1 + nu k)^-n |v0|^2 + (M1^2/nu^2)(1 - (1 + nu k)^-n)` and `|v^n| <= K1`.
pub fn check_l2_bounds(traj: &Trajectory, constants: &ConstantsTable, slack: &SlackPolicy) -> (VerdictSeries, VerdictSeries) {
    let p = &traj.params;
    let m1 = constants.chain.m1.value();
    let k1 = constants.chain.k1.value();
    let v0 = traj.states[0].v.norm_sq();
    let alpha = 1.0 + p.nu * p.k;
    let mut decay = VerdictSeries::new("velocity-l2-decay");
    let mut ball = VerdictSeries::new("velocity-l2-k1");
    let mut cumulative = 0.0;
    for (n, st) in traj.states.iter().enumerate().skip(1) {
        let vn = st.v.norm_sq();
        cumulative += slack.per_step(vn.sqrt());
        let f = alpha.powi(-(n as i32));
        decay.push(Verdict::upper(n, vn, f * v0 + m1 * m1 / (p.nu * p.nu) * (1.0 - f), cumulative + slack.mesh));
        ball.push(Verdict::upper(n, vn.sqrt(), k1, (cumulative + slack.mesh).sqrt()));
    }
    (decay, ball)
}

/// Per-step ratio `|v^n|^2 / |v^{n-1}|^2 <= 1/(1 + nu k) + tol`, meaningful with the coupling off.
pub fn check_decoupled_decay(traj: &Trajectory, tol: f64) -> VerdictSeries {
    let p = &traj.params;
    let mut out = VerdictSeries::new("decoupled-velocity-decay");
    for n in 1..traj.states.len() {
        let prev = traj.states[n - 1].v.norm_sq();
        if prev == 0.0 {
            continue;
        }
        let ratio = traj.states[n].v.norm_sq() / prev;
        out.push(Verdict::upper(n, ratio, 1.0 / (1.0 + p.nu * p.k), tol));
    }
    out
}

/// H1 recursions of the velocity and the summed increment bounds.
#[derive(Debug, Clone)]
pub struct H1Report {
    /// `||v^n||^2 <= K2 ||v^{n-1}||^2 + 4 M1^2 / nu^2`.
    pub growth: VerdictSeries,
    /// `-(c1 K1^2 k ||v^n||^4 - ||v^n||^2 + ||v^{n-1}||^2 + (2/nu) k M1^2) <= 0`.
    pub quartic: VerdictSeries,
    /// `sum ||v^n - v^{n-1}||^2 <= K4^2 + (c1 K1^2 K4^4 + (2/nu) M1^2) k (m - i + 1)` on dyadic windows.
    pub velocity_increments: VerdictSeries,
    /// `sum ||th^n - th^{n-1}||^2 <= M3^2 + (c2 K1^2 K4^2 M3^2 + (2/kappa) K1^2) k (m - i + 1)`.
    pub temperature_increments: VerdictSeries,
}

impl H1Report {
    pub fn all_pass(&self) -> bool {
        self.growth.all_pass() && self.quartic.all_pass() && self.velocity_increments.all_pass() && self.temperature_increments.all_pass()
    }
}

pub fn check_h1_recursions(traj: &Trajectory, constants: &ConstantsTable, slack: &SlackPolicy) -> H1Report {
    let p = &traj.params;
    let c = &constants.chain;
    let (k2, m1, k1, c1) = (c.k2.value(), c.m1.value(), c.k1.value(), c.c1.value());
    let mut growth = VerdictSeries::new("h1-growth");
    let mut quartic = VerdictSeries::new("h1-quartic");
    let h1: Vec<f64> = traj.states.iter().map(|s| s.v.h1_sq()).collect();
    for n in 1..traj.states.len() {
        let s = slack.per_step(h1[n].sqrt()) + slack.mesh;
        growth.push(Verdict::upper(n, h1[n], k2 * h1[n - 1] + 4.0 * m1 * m1 / (p.nu * p.nu), s));
        let q = c1 * k1 * k1 * p.k * h1[n] * h1[n] - h1[n] + h1[n - 1] + 2.0 / p.nu * p.k * m1 * m1;
        quartic.push(Verdict::upper(n, -q, 0.0, s));
    }
    let (dv, dt): (Vec<f64>, Vec<f64>) = (1..traj.states.len())
        .map(|n| {
            let d = traj.states[n].diff(&traj.states[n - 1]);
            (d.v.h1_sq(), d.th.h1_sq())
        })
        .unzip();
    let (k4, m3, c2) = (c.k4, c.m3, c.c2);
    let mut vi = VerdictSeries::new("h1-velocity-increments");
    let mut ti = VerdictSeries::new("h1-temperature-increments");
    for (i, m) in dyadic_windows(traj.steps()) {
        let len = (m - i + 1) as f64 * p.k;
        let s = (m - i + 1) as f64 * slack.per_step(1.0) + slack.mesh;
        let rv = k4 * k4 + (c.c1 * c.k1 * c.k1 * k4.powf(4.0) + mag(2.0 / p.nu) * c.m1 * c.m1).scale(len);
        vi.push(Verdict::upper(m, dv[i - 1..m].iter().sum(), rv.value(), s));
        let rt = m3 * m3 + (c2 * c.k1 * c.k1 * k4 * k4 * m3 * m3 + mag(2.0 / p.kappa) * c.k1 * c.k1).scale(len);
        ti.push(Verdict::upper(m, dt[i - 1..m].iter().sum(), rt.value(), s));
    }
    H1Report { growth, quartic, velocity_increments: vi, temperature_increments: ti }
}

/// `||v^n|| <= K4`, `||th^n|| <= M3`, `||u^n|| <= K5` for `n >= 1`.
pub fn check_uniform_h1(traj: &Trajectory, constants: &ConstantsTable, slack: &SlackPolicy) -> (VerdictSeries, VerdictSeries, VerdictSeries) {
    let mut v = VerdictSeries::new("uniform-h1-velocity");
    let mut t = VerdictSeries::new("uniform-h1-temperature");
    let mut u = VerdictSeries::new("uniform-h1-pair");
    let (k4, m3, k5) = (constants.chain.k4.value(), constants.chain.m3.value(), constants.k5.value());
    for (n, st) in traj.states.iter().enumerate().skip(1) {
        let (a, b) = (st.v.h1_sq().sqrt(), st.th.h1_sq().sqrt());
        let s = slack.per_step(a.hypot(b)) + slack.mesh;
        v.push(Verdict::upper(n, a, k4, s));
        t.push(Verdict::upper(n, b, m3, s));
        u.push(Verdict::upper(n, a.hypot(b), k5, s));
    }
    (v, t, u)
}

/// Measured versus predicted entry into the absorbing sets.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingReport {
    /// First `n` with `|th^n| <= 2`, and `ceil(N0^1)` for `R = |th0|`.
    pub theta_entry: Option<usize>,
    pub theta_predicted: usize,
    /// First `n` with `|u^n| <= rho0`, and `ceil(N0^1 + N0^2)` for `R = |u0|`.
    pub h_entry: Option<usize>,
    pub h_predicted: usize,
    /// `(l, nu ||v^l||^2 + kappa ||th^l||^2)` minimising the dissipation over `(N0, N1]`.
    pub pigeonhole: Option<(usize, f64)>,
    pub pigeonhole_bound: f64,
    /// First `n` from which `||u^m|| <= R1` holds for every `m` up to the horizon; `None` when
    /// the horizon ends before `N1` or the trajectory leaves the ball after `N1`.
    pub v_entry: Option<usize>,
    pub n1: usize,
    pub r1: Magnitude,
    /// `||u^l|| <= R*` at the pigeonhole step.
    pub pigeonhole_in_r_star: bool,
}

impl AbsorbingReport {
    pub fn verdicts(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("theta-ball-entry", self.theta_entry.is_some_and(|n| n <= self.theta_predicted)),
            ("h-ball-entry", self.h_entry.is_some_and(|n| n <= self.h_predicted)),
            ("pigeonhole-bound", self.pigeonhole.is_some_and(|(_, d)| d <= self.pigeonhole_bound) && self.pigeonhole_in_r_star),
            ("v-ball-entry", self.v_entry.is_some_and(|n| n <= self.n1)),
        ]
    }
}

pub fn absorbing_entries(traj: &Trajectory, constants: &ConstantsTable, slack: &SlackPolicy) -> AbsorbingReport {
    let p = &traj.params;
    let s0 = &traj.states[0];
    let r_theta = s0.th.norm_sq().sqrt();
    let r_h = s0.norm();
    let theta_predicted = n0_theta(r_theta, p.kappa, p.k).ceil() as usize;
    let theta_entry = traj.states.iter().position(|s| s.th.norm_sq().sqrt() <= 2.0 + slack.per_step(2.0));
    let r0 = rho0(p.nu);
    let h_predicted = n0_pair(r_h, p.nu, p.kappa, p.k);
    let h_entry = traj.states.iter().position(|s| s.norm() <= r0 + slack.per_step(r0));
    let n1 = n1_pair(r_h, p.nu, p.kappa, p.k);
    let upper = n1.min(traj.steps());
    let pigeonhole = (h_predicted + 1..=upper)
        .map(|l| {
            let s = &traj.states[l];
            (l, p.nu * s.v.h1_sq() + p.kappa * s.th.h1_sq())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let bound = pigeonhole_bound(p.nu, p.kappa);
    let rs = r_star(p.nu, p.kappa);
    let pigeonhole_in_r_star = pigeonhole.is_some_and(|(l, _)| traj.states[l].h1_sq().sqrt() <= rs + slack.per_step(rs));
    let r1 = constants.r1;
    let r1v = r1.value();
    let inside = |s: &State| s.h1_sq().sqrt() <= r1v + slack.per_step(s.h1_sq().sqrt());
    let v_entry = if n1 <= traj.steps() && traj.states[n1..].iter().all(inside) {
        (0..=n1).rev().take_while(|&n| inside(&traj.states[n])).last()
    } else {
        None
    };
    AbsorbingReport {
        theta_entry,
        theta_predicted,
        h_entry,
        h_predicted,
        pigeonhole,
        pigeonhole_bound: bound + slack.per_step(bound),
        v_entry,
        n1,
        r1,
        pigeonhole_in_r_star,
    }
}

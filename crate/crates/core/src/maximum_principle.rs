//! Truncations of the temperature against the band `x2 - 1 <= th <= x2` (the conductive
//! profile between the wall temperatures), their geometric decay, and the truncation
//! inequalities behind it.

use crate::bounds_monitor::{Verdict, VerdictSeries};
use crate::error::Result;
use crate::grid_fields::{CellField, Grid};
use crate::stepper::Trajectory;

/// Leakage coefficient `c_h` of the spatial discretisation: the central transport stencil is not
/// monotone, so the truncated norms may exceed their decay envelope by up to `c_h h^2`.
/// Measured once on a refinement study (see the maximum-principle integration test) and frozen.
pub const MESH_SLACK_COEFF: f64 = 0.25;

/// `f_+ = max(f, 0)`.
pub fn positive_part(f: &CellField) -> CellField {
    CellField { nx: f.nx, ny: f.ny, data: f.data.iter().map(|x| x.max(0.0)).collect() }
}

/// `f_- = max(-f, 0)`, so that `f = f_+ - f_-`.
pub fn negative_part(f: &CellField) -> CellField {
    CellField { nx: f.nx, ny: f.ny, data: f.data.iter().map(|x| (-x).max(0.0)).collect() }
}

fn shifted(th: &CellField, g: &Grid, c: f64) -> CellField {
    let mut out = th.clone();
    for j in 0..g.ny {
        let s = g.y_center(j) - c;
        for x in &mut out.data[j * g.nx..(j + 1) * g.nx] {
            *x -= s;
        }
    }
    out
}

/// `((th - x2)_+, (th - x2 + 1)_-)`.
pub fn truncations(th: &CellField, g: &Grid) -> Result<(CellField, CellField)> {
    th.check(g)?;
    Ok((positive_part(&shifted(th, g, 0.0)), negative_part(&shifted(th, g, 1.0))))
}

/// `th = tilde + bar` with `x2 - 1 <= tilde <= x2` and
/// `bar = (th - x2)_+ - (th - x2 + 1)_-`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandDecomposition {
    pub tilde: CellField,
    pub bar: CellField,
}

pub fn band_decomposition(th: &CellField, g: &Grid) -> Result<BandDecomposition> {
    let (p, m) = truncations(th, g)?;
    let mut bar = p;
    bar.axpy(-1.0, &m);
    let mut tilde = th.clone();
    tilde.axpy(-1.0, &bar);
    Ok(BandDecomposition { tilde, bar })
}

/// Both sides of the truncation inequalities together with the exact gaps
/// `2 (psi_-, phi_+)` and `2 (psi_+, phi_-)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationCheck {
    /// `2 (phi - psi, phi_+)`
    pub plus_lhs: f64,
    /// `|phi_+|^2 - |psi_+|^2 + |phi_+ - psi_+|^2`
    pub plus_rhs: f64,
    pub plus_gap: f64,
    /// `-2 (phi - psi, phi_-)`
    pub minus_lhs: f64,
    /// `|phi_-|^2 - |psi_-|^2 + |phi_- - psi_-|^2`
    pub minus_rhs: f64,
    pub minus_gap: f64,
}

impl TruncationCheck {
    /// Both inequalities hold and the gaps match `lhs - rhs` to relative `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        let scale = 1.0 + self.plus_lhs.abs() + self.plus_rhs.abs() + self.minus_lhs.abs() + self.minus_rhs.abs();
        self.plus_lhs >= self.plus_rhs - tol * scale
            && self.minus_lhs >= self.minus_rhs - tol * scale
            && (self.plus_lhs - self.plus_rhs - self.plus_gap).abs() <= tol * scale
            && (self.minus_lhs - self.minus_rhs - self.minus_gap).abs() <= tol * scale
    }
}

pub fn truncation_identity(phi: &CellField, psi: &CellField, g: &Grid) -> Result<TruncationCheck> {
    phi.check(g)?;
    psi.check(g)?;
    let mut d = phi.clone();
    d.axpy(-1.0, psi);
    let (pp, pm) = (positive_part(phi), negative_part(phi));
    let (qp, qm) = (positive_part(psi), negative_part(psi));
    let mut dp = pp.clone();
    dp.axpy(-1.0, &qp);
    let mut dm = pm.clone();
    dm.axpy(-1.0, &qm);
    Ok(TruncationCheck {
        plus_lhs: 2.0 * d.dot(&pp),
        plus_rhs: pp.norm_sq() - qp.norm_sq() + dp.norm_sq(),
        plus_gap: 2.0 * qm.dot(&pp),
        minus_lhs: -2.0 * d.dot(&pm),
        minus_rhs: pm.norm_sq() - qm.norm_sq() + dm.norm_sq(),
        minus_gap: 2.0 * qp.dot(&pm),
    })
}

/// Verdicts of the maximum-principle monitor along a trajectory.
#[derive(Debug, Clone)]
pub struct DecayReport {
    /// `|(th^n - x2)_+|^2 <= (1 + 2 kappa k)^-n |(th^0 - x2)_+|^2 + slack`
    pub plus: VerdictSeries,
    /// `|(th^n - x2 + 1)_-|^2 <= (1 + 2 kappa k)^-n |(th^0 - x2 + 1)_-|^2 + slack`
    pub minus: VerdictSeries,
    /// `|th^n| <= |Omega|^1/2 + (|th^0_+| + |th^0_-|)(1 + 2 kappa k)^(-n/2) + slack`
    pub norm: VerdictSeries,
    /// `|bar th^n| <= (|th^0_+| + |th^0_-|)(1 + 2 kappa k)^(-n/2) + slack`
    pub band: VerdictSeries,
}

impl DecayReport {
    pub fn all_pass(&self) -> bool {
        self.plus.all_pass() && self.minus.all_pass() && self.norm.all_pass() && self.band.all_pass()
    }
}

/// Run the decay monitor with additive slack `n eps_ledger + c_h h^2` on the squared truncations.
pub fn decay_monitor(traj: &Trajectory, mesh_coeff: f64) -> Result<DecayReport> {
    let g = &traj.grid;
    let p = &traj.params;
    let alpha = 1.0 + 2.0 * p.kappa * p.k;
    let (p0, m0) = truncations(&traj.states[0].th, g)?;
    let (p0, m0) = (p0.norm_sq(), m0.norm_sq());
    let (s0p, s0m) = (p0.sqrt(), m0.sqrt());
    let mesh = mesh_coeff * g.h() * g.h();
    let mut plus = VerdictSeries::new("max-principle-plus");
    let mut minus = VerdictSeries::new("max-principle-minus");
    let mut norm = VerdictSeries::new("temperature-l2-bound");
    let mut band = VerdictSeries::new("band-remainder");
    for (n, st) in traj.states.iter().enumerate().skip(1) {
        let th_norm = st.th.norm_sq().sqrt();
        let slack = n as f64 * p.ledger_slack(th_norm) + mesh;
        let decay = alpha.powi(-(n as i32));
        let (tp, tm) = truncations(&st.th, g)?;
        plus.push(Verdict::upper(n, tp.norm_sq(), decay * p0, slack));
        minus.push(Verdict::upper(n, tm.norm_sq(), decay * m0, slack));
        let envelope = (s0p + s0m) * decay.sqrt();
        norm.push(Verdict::upper(n, th_norm, 1.0 + envelope, 2.0 * slack.sqrt()));
        let bar = band_decomposition(&st.th, g)?.bar;
        band.push(Verdict::upper(n, bar.norm_sq().sqrt(), envelope, 2.0 * slack.sqrt()));
    }
    Ok(DecayReport { plus, minus, norm, band })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fields::make_grid;

    #[test]
    fn band_decomposition_respects_band() {
        let g = make_grid(8, 8).unwrap();
        let th = CellField::from_fn(&g, |x, y| 3.0 * (7.0 * x + 5.0 * y).sin());
        let bd = band_decomposition(&th, &g).unwrap();
        for j in 0..g.ny {
            let y = g.y_center(j);
            for i in 0..g.nx {
                let t = bd.tilde.at(i, j);
                assert!(t <= y + 1e-15 && t >= y - 1.0 - 1e-15);
            }
        }
    }

    #[test]
    fn truncation_gap_is_exact() {
        let g = make_grid(8, 8).unwrap();
        let phi = CellField::from_fn(&g, |x, y| (6.0 * x).sin() + y - 0.4);
        let psi = CellField::from_fn(&g, |x, y| (4.0 * y).cos() * x - 0.2);
        let c = truncation_identity(&phi, &psi, &g).unwrap();
        assert!(c.holds(1e-13));
        assert!(c.plus_gap > 0.0);
        let same = truncation_identity(&phi, &phi, &g).unwrap();
        assert!(same.plus_gap == 0.0 && same.minus_gap == 0.0);
    }
}

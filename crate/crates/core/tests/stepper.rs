use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::bounds_monitor::{check_decoupled_decay, check_energy_ledger};
use thermolab::grid_fields::*;
use thermolab::stepper::*;
use thermolab::Error;

fn random_state(g: &Grid, seed: u64, amp: f64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Spectrum { exponent: 2.0, max_mode: 8 };
    let mut u = State { v: random_velocity(g, &mut rng, &s), th: random_temperature(g, &mut rng, &s) };
    u.scale(amp / u.norm());
    u
}

#[test]
fn zero_state_is_fixed() {
    let g = make_grid(16, 16).unwrap();
    let p = StepParams::default();
    let (next, rep) = implicit_euler_step(&State::zeros(&g), &p, &g).unwrap();
    assert_eq!(next.norm(), 0.0);
    assert_eq!(rep.picard_iters, 0);
    let tr = run_trajectory(&State::zeros(&g), &p, 0, &g).unwrap();
    assert_eq!(tr.states.len(), 1);
}

#[test]
fn unit_viscosity_ledger_balances() {
    let g = make_grid(16, 16).unwrap();
    let p = StepParams { nu: 1.0, kappa: 1.0, k: 0.01, ..Default::default() };
    let u0 = State {
        v: VelocityField::zeros(&g),
        th: CellField::from_fn(&g, |x, y| 0.2 * (PI * y).sin() * (2.0 * PI * x).cos()),
    };
    let tr = run_trajectory(&u0, &p, 20, &g).unwrap();
    assert!(check_energy_ledger(&tr).all_pass());
    for r in &tr.reports {
        assert!(r.residual_v <= p.eps_nl && r.residual_th <= p.eps_nl);
    }
}

#[test]
fn picard_guess_does_not_change_the_step() {
    let g = make_grid(16, 16).unwrap();
    let p = StepParams { nu: 1.0, kappa: 1.0, k: 0.01, ..Default::default() };
    let st = ImplicitEuler::new(&g, p).unwrap();
    let prev = random_state(&g, 5, 0.5);
    let (a, _) = st.step_from_guess(&prev, &prev).unwrap();
    let (b, _) = st.step_from_guess(&prev, &State::zeros(&g)).unwrap();
    assert!(a.distance(&b) <= 1e-10);
}

#[test]
fn semigroup_property_is_bitwise() {
    let g = make_grid(16, 16).unwrap();
    let st = ImplicitEuler::new(&g, StepParams { k: 0.02, ..Default::default() }).unwrap();
    let u0 = random_state(&g, 7, 1.0);
    let whole = st.advance(&u0, 7).unwrap();
    let split = st.advance(&st.advance(&u0, 3).unwrap(), 4).unwrap();
    assert_eq!(whole, split);
}

#[test]
fn trajectories_are_deterministic() {
    let g = make_grid(16, 16).unwrap();
    let p = StepParams { k: 0.02, ..Default::default() };
    let u0 = random_state(&g, 8, 1.0);
    let a = run_trajectory(&u0, &p, 10, &g).unwrap();
    let b = run_trajectory(&u0, &p, 10, &g).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn decoupled_velocity_decays_geometrically() {
    let g = make_grid(16, 16).unwrap();
    let p = StepParams { nu: 0.1, kappa: 0.1, k: 0.05, coupling: false, ..Default::default() };
    let tr = run_trajectory(&random_state(&g, 9, 1.0), &p, 40, &g).unwrap();
    assert!(check_decoupled_decay(&tr, 1e-10).all_pass());
    for n in 1..tr.states.len() {
        let f = (1.0 + 2.0 * p.kappa * p.k).powi(-(n as i32));
        assert!(tr.states[n].th.norm_sq() <= f * tr.states[0].th.norm_sq() + n as f64 * p.ledger_slack(1.0));
    }
}

#[test]
fn strict_mode_gates_the_step() {
    let g = make_grid(8, 8).unwrap();
    let p = StepParams { nu: 0.1, kappa: 0.1, k: 6.0, strict: true, ..Default::default() };
    assert!(matches!(run_trajectory(&State::zeros(&g), &p, 1, &g), Err(Error::Gate { .. })));
    let bad = StepParams { k: -1.0, ..Default::default() };
    assert!(matches!(ImplicitEuler::new(&g, bad), Err(Error::Precondition(_))));
}

#[test]
fn nonconvergence_is_reported() {
    let g = make_grid(16, 16).unwrap();
    let p = StepParams { nu: 0.01, kappa: 0.01, k: 0.5, max_picard: 1, ..Default::default() };
    let err = run_trajectory(&random_state(&g, 10, 5.0), &p, 1, &g).unwrap_err();
    match err {
        Error::StepFailed { step: 1, source } => assert!(matches!(*source, Error::NonConvergence { .. })),
        other => panic!("unexpected {other}"),
    }
}

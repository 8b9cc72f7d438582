use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::attractor_lab::*;
use thermolab::grid_fields::*;
use thermolab::stepper::*;
use thermolab::Error;

fn shifted(g: &Grid, c: f64) -> State {
    State { v: VelocityField::zeros(g), th: CellField::from_fn(g, |_, _| c) }
}

fn random_state(g: &Grid, seed: u64, amp: f64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Spectrum { exponent: 2.0, max_mode: 4 };
    let mut u = State { v: random_velocity(g, &mut rng, &s), th: random_temperature(g, &mut rng, &s) };
    u.scale(amp / u.norm());
    u
}

#[test]
fn semidistance_examples() {
    let g = make_grid(8, 8).unwrap();
    let (p, q) = (shifted(&g, 0.0), shifted(&g, 5.0));
    assert!((hausdorff_semidistance(std::slice::from_ref(&p), std::slice::from_ref(&q)).unwrap() - 5.0).abs() < 1e-13);
    assert!((hausdorff_semidistance(std::slice::from_ref(&q), std::slice::from_ref(&p)).unwrap() - 5.0).abs() < 1e-13);
    let r = shifted(&g, 3.0);
    let b = [p.clone(), r.clone()];
    assert!((hausdorff_semidistance(&b, std::slice::from_ref(&p)).unwrap() - 3.0).abs() < 1e-13);
    assert_eq!(hausdorff_semidistance(std::slice::from_ref(&p), &b).unwrap(), 0.0);
    let a: Vec<State> = (0..6).map(|s| random_state(&g, s, 1.0)).collect();
    assert_eq!(hausdorff_semidistance(&a, &a).unwrap(), 0.0);
    assert_eq!(hausdorff_semidistance(&a[1..3], &a).unwrap(), 0.0);
    assert!(hausdorff_semidistance(&a, &a[..1]).unwrap() > 0.0);
    assert!(matches!(hausdorff_semidistance(&a, &[]), Err(Error::EmptySet)));
    let other = make_grid(4, 4).unwrap();
    assert!(hausdorff_semidistance(&a, &[shifted(&other, 0.0)]).is_err());
}

#[test]
fn interpolant_examples() {
    let g = make_grid(8, 8).unwrap();
    let p = StepParams { nu: 1.0, kappa: 1.0, k: 0.1, ..Default::default() };
    let tr = run_trajectory(&random_state(&g, 1, 1.0), &p, 5, &g).unwrap();
    let ip = make_interpolants(&tr).unwrap();
    for n in 1..=5 {
        let mid = (n as f64 - 0.5) * p.k;
        let (c, l) = (ip.piecewise_constant(mid).unwrap(), ip.piecewise_linear(mid).unwrap());
        let mut expect = tr.states[n].diff(&tr.states[n - 1]);
        expect.scale(-0.5);
        assert!(l.diff(&c).distance(&expect) < 1e-14);
        assert_eq!(c, tr.states[n]);
        // left endpoint of the interval gives psi^{n-1}
        let left = ip.piecewise_linear((n - 1) as f64 * p.k).unwrap();
        assert!(left.distance(&tr.states[n - 1]) < 1e-13);
        let near = ip.piecewise_linear(n as f64 * p.k - 1e-9).unwrap();
        assert!(near.distance(&tr.states[n]) < 1e-6);
    }
    assert!(ip.piecewise_constant(-0.01).is_err());
    assert!(ip.piecewise_linear(0.5).is_err());

    let steady = run_trajectory(&State::zeros(&g), &p, 3, &g).unwrap();
    let ip = make_interpolants(&steady).unwrap();
    assert_eq!(ip.piecewise_linear(0.15).unwrap(), ip.piecewise_constant(0.15).unwrap());
    let single = run_trajectory(&State::zeros(&g), &p, 0, &g).unwrap();
    assert!(make_interpolants(&single).is_err());
}

#[test]
fn steady_trajectory_has_no_forcing() {
    let g = make_grid(8, 8).unwrap();
    let p = StepParams { nu: 1.0, kappa: 1.0, k: 0.1, ..Default::default() };
    let tr = run_trajectory(&State::zeros(&g), &p, 10, &g).unwrap();
    assert_eq!(residual_forcing_norms(&tr, 1.0).unwrap(), (0.0, 0.0));
    assert!(residual_forcing_norms(&tr, 2.0).is_err());
    let moving = run_trajectory(&random_state(&g, 2, 1.0), &p, 10, &g).unwrap();
    let (f, gk) = residual_forcing_norms(&moving, 1.0).unwrap();
    assert!(f > 0.0 && gk > 0.0);
}

#[test]
fn single_member_cloud_is_the_tail() {
    let g = make_grid(8, 8).unwrap();
    let p = StepParams { nu: 1.0, kappa: 1.0, k: 0.05, ..Default::default() };
    let u0 = random_state(&g, 3, 2.0);
    let cloud = sample_attractor(std::slice::from_ref(&u0), &p, &g, 10, 4, 3, f64::INFINITY).unwrap();
    let tr = run_trajectory(&u0, &p, 19, &g).unwrap();
    assert_eq!(cloud.points.len(), 4);
    for (i, s) in cloud.points.iter().enumerate() {
        assert_eq!(*s, tr.states[10 + 3 * i]);
    }
    assert_eq!((cloud.burn_in, cloud.sample_stride), (10, 3));
    // a tiny V radius is violated by the samples
    assert!(matches!(sample_attractor(&[u0], &p, &g, 1, 1, 1, 1e-6), Err(Error::Precondition(_))));
}

#[test]
fn decaying_system_collapses_to_zero() {
    let g = make_grid(8, 8).unwrap();
    let params = StepParams { nu: 1.0, kappa: 1.0, k: 0.02, coupling: false, ..Default::default() };
    let ensemble: Vec<State> = (0..3).map(|s| random_state(&g, 10 + s, 1.0)).collect();
    let cloud = sample_attractor(&ensemble, &params, &g, 500, 3, 5, f64::INFINITY).unwrap();
    let diameter = cloud.points.iter().flat_map(|a| cloud.points.iter().map(move |b| a.distance(b))).fold(0.0, f64::max);
    // The nonlinear residual is absolute: a step returns its input once |k nu A u| <= eps_nl,
    // so decay stalls at |u| <= sqrt 2 eps_nl / (k nu lambda1) with the discrete first eigenvalue.
    let lambda1 = 2.0 / (g.hy * g.hy) * (1.0 - (std::f64::consts::PI * g.hy).cos());
    let radius = |k: f64| 2f64.sqrt() * params.eps_nl / (k * params.nu * lambda1);
    let floor = 2.0 * radius(params.k);
    assert!(diameter <= floor, "{diameter}");

    let cfg = StudyConfig {
        grid: g,
        params,
        ladder: vec![0.032, 0.016, 0.008],
        k_ref: 0.001,
        ensemble: ensemble.clone(),
        burn_in_time: 10.0,
        n_samples: 3,
        stride_time: 0.1,
        t_star: 0.256,
        finite_time_points: 2,
        forcing_initial: ensemble[0].clone(),
        r1: f64::INFINITY,
        distance_only: true,
    };
    let r = attractor_convergence_study(&cfg).unwrap();
    assert!(r.rows.iter().all(|row| row.dist_to_ref <= 2.0 * radius(cfg.k_ref)), "{:?}", r.rows);
    assert!(r.slope_fk.is_none());
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + r.rows.len());

    let bad = |ladder: Vec<f64>, k_ref: f64, distance_only: bool| StudyConfig { ladder, k_ref, distance_only, ..cfg.clone() };
    assert!(attractor_convergence_study(&bad(vec![0.02], 0.001, false)).is_err());
    assert!(attractor_convergence_study(&bad(vec![0.01, 0.02], 0.001, true)).is_err());
    assert!(attractor_convergence_study(&bad(vec![0.02, 0.01], 0.005, true)).is_err());
    assert!(matches!(attractor_convergence_study(&bad(vec![], 0.001, true)), Err(Error::EmptySet)));
}

#[test]
fn finite_time_divergence_examples() {
    let g = make_grid(8, 8).unwrap();
    let p = StepParams { nu: 1.0, kappa: 1.0, k: 0.04, ..Default::default() };
    assert_eq!(finite_time_divergence(&[State::zeros(&g)], &p, 0.01, 0.4, &g).unwrap(), 0.0);
    let u0 = [random_state(&g, 4, 1.0)];
    assert_eq!(finite_time_divergence(&u0, &p, 0.04, 0.4, &g).unwrap(), 0.0);
    assert!(finite_time_divergence(&u0, &p, 0.03, 0.4, &g).is_err());
    let a = finite_time_divergence(&u0, &p, 0.005, 0.4, &g).unwrap();
    let b = finite_time_divergence(&u0, &StepParams { k: 0.02, ..p }, 0.005, 0.4, &g).unwrap();
    assert!(b < a);
}

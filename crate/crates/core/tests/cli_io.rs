use std::fs;
use std::path::Path;

use thermolab::cli_io::*;
use thermolab::grid_fields::*;
use thermolab::Error;

fn cfg(text: &str) -> thermolab::Result<RunConfig> {
    RunConfig::from_str_at(text, "test.cfg", None)
}

fn location(e: Error) -> String {
    match e {
        Error::Config { location, .. } => location,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn parses_fields_and_defaults() {
    let c = cfg("nx = 16\nny = 8 # comment\nnu = 0.5\nk = 0.02\npreset = random\nseed = 4\namplitude = 2\nmonitor.h1_bounds = on\nstudy.ladder = 0.08, 0.04\n").unwrap();
    assert_eq!((c.nx, c.ny), (16, 8));
    assert_eq!((c.params.nu, c.params.kappa, c.params.k), (0.5, 0.1, 0.02));
    assert_eq!(c.initial, InitialCondition::Random { seed: 4, amplitude: 2.0, exponent: 2.0, max_mode: 0 });
    assert!(c.monitors.h1_bounds && !c.monitors.absorbing);
    assert_eq!(c.study.ladder, vec![0.08, 0.04]);
    let u = c.initial.build(&c.grid()).unwrap();
    assert!((u.norm() - 2.0).abs() < 1e-12);
    let d = cfg("").unwrap();
    assert!(matches!(d.initial, InitialCondition::ConductivePerturbation { amplitude } if amplitude == 0.1));
}

#[test]
fn hash_ignores_order_and_comments() {
    let a = cfg("nu = 0.5\nk = 0.02\n").unwrap();
    let b = cfg("# header\nk = 0.02\n\nnu = 0.5   \n").unwrap();
    let c = cfg("nu = 0.5\nk = 0.03\n").unwrap();
    assert_eq!(a.hash, b.hash);
    assert_ne!(a.hash, c.hash);
    assert_eq!(a.hash.len(), 64);
}

#[test]
fn includes_resolve_relative_paths_and_later_keys_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("base.cfg"), "nx = 16\nny = 16\nnu = 0.3\n").unwrap();
    fs::write(dir.path().join("run.cfg"), "include = base.cfg\nnu = 0.7\n").unwrap();
    let c = RunConfig::from_file(&dir.path().join("run.cfg")).unwrap();
    assert_eq!((c.nx, c.params.nu), (16, 0.7));
    fs::write(dir.path().join("bad.cfg"), "include = missing.cfg\n").unwrap();
    assert!(location(RunConfig::from_file(&dir.path().join("bad.cfg")).unwrap_err()).ends_with("bad.cfg:1"));
    fs::write(dir.path().join("loop.cfg"), "include = loop.cfg\n").unwrap();
    assert!(RunConfig::from_file(&dir.path().join("loop.cfg")).is_err());
}

#[test]
fn bad_fields_are_located() {
    assert_eq!(location(cfg("nx = 16\nviscosity = 1\n").unwrap_err()), "test.cfg:2");
    assert_eq!(location(cfg("\n\nnu = fast\n").unwrap_err()), "test.cfg:3");
    assert_eq!(location(cfg("strict = maybe\n").unwrap_err()), "test.cfg:1");
    assert_eq!(location(cfg("nu 1\n").unwrap_err()), "test.cfg:1");
    assert_eq!(location(cfg("k = 1\npreset = swirl\n").unwrap_err()), "test.cfg:2");
    assert_eq!(location(cfg("version = 2\n").unwrap_err()), "test.cfg:1");
    assert!(cfg("nx = 3\n").is_err());
}

#[test]
fn snapshots_round_trip() {
    let g = make_grid(8, 4).unwrap();
    let th = CellField::from_fn(&g, |x, y| x - 2.0 * y + 1e-300);
    let v = VelocityField::from_stream_fn(&g, |x, y| (6.0 * x).sin() * y * y);
    for s in [Snapshot::Temperature(th.clone()), Snapshot::Velocity(v.clone()), Snapshot::State(State { v, th })] {
        let bytes = encode_snapshot(&s);
        assert_eq!(&bytes[..4], b"THLB");
        assert_eq!(decode_snapshot(&bytes).unwrap(), s);
        assert!(decode_snapshot(&bytes[..bytes.len() - 1]).is_err());
    }
    let mut bad = encode_snapshot(&Snapshot::Temperature(CellField::zeros(&g)));
    bad[0] = b'X';
    assert!(matches!(decode_snapshot(&bad), Err(Error::Snapshot(_))));
}

fn run_in(dir: &Path, extra: &str) -> Outcome {
    let text = format!("nx = 16\nny = 16\nsteps = 8\nk = 0.05\nsnapshot_every = 4\noutput_dir = {}\n{extra}", dir.display());
    cmd_simulate(&cfg(&text).unwrap())
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let oa = run_in(a.path(), "");
    assert_eq!(oa.status, Status::Pass, "{:?}", oa.report);
    let first: Vec<Vec<u8>> = oa.artifacts.iter().map(|p| fs::read(p).unwrap()).collect();
    let ob = run_in(a.path(), "");
    assert_eq!(oa.artifacts, ob.artifacts);
    for (p, bytes) in ob.artifacts.iter().zip(&first) {
        assert_eq!(&fs::read(p).unwrap(), bytes, "{}", p.display());
    }
    let csv = fs::read_to_string(a.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().count(), 2 + 9);
    assert!(a.path().join("snapshots/state_000004.thlb").exists());
    assert!(a.path().join("constants.json").exists());

    // the final snapshot restarts the run
    let snap = a.path().join("snapshots/state_000008.thlb");
    let restart = cfg(&format!("nx = 16\nny = 16\npreset = file\ninitial_file = {}\n", snap.display())).unwrap();
    let u = restart.initial.build(&restart.grid()).unwrap();
    assert!(matches!(read_snapshot(&snap).unwrap(), Snapshot::State(s) if s == u));
}

#[test]
fn exit_statuses() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), "preset = zero\n");
    assert_eq!(o.status.code(), 0);
    let gated = run_in(d.path(), "strict = true\nk = 10\n");
    assert_eq!(gated.status, Status::Usage);
    assert_eq!(gated.status.code(), 2);
    let starved = run_in(d.path(), "max_picard = 0\npreset = random\namplitude = 3\nk = 0.5\nnu = 0.01\nkappa = 0.01\n");
    assert_eq!(starved.status.code(), 3);
    assert_eq!(Status::MonitorFailure.code(), 1);
}

#[test]
fn verify_lemmas_reports_adversarial_instances() {
    let d = tempfile::tempdir().unwrap();
    let adversarial = d.path().join("spike.txt");
    fs::write(
        &adversarial,
        "lemma = uniform\nk = 0.1\nxi0 = 1\nn_star = 8\nwindow = 2, 2\na1 = 0.1\na2 = 1\na3 = 1\n\
         eta = 0, 0, 0, 0, 50, 0, 0, 0, 0\nzeta = 0, 0, 0, 0, 0, 0, 0, 0, 0\n",
    )
    .unwrap();
    let o = cmd_verify_lemmas(3, 50, Some(&adversarial));
    assert_eq!(o.status, Status::Pass, "{:?}", o.report);
    assert!(o.report.iter().any(|l| l.contains("hypothesis-fail (eta at 2")), "{:?}", o.report);

    let broken = d.path().join("broken.txt");
    fs::write(&broken, "lemma = uniform\nk = 0.1\nbogus = 1\n").unwrap();
    let o = cmd_verify_lemmas(3, 10, Some(&broken));
    assert_eq!(o.status, Status::Usage);
    assert!(o.report[0].contains("broken.txt:3"));
    assert_eq!(cmd_verify_lemmas(3, 0, None).status, Status::Usage);
}

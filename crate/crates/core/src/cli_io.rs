//! Run configuration, artifact formats and the command drivers behind the `thermolab` binary.
//!
//! Configs are flat `key = value` files; `#` starts a comment and `include = path` splices in
//! another file (relative to the including one, later keys win). The SHA-256 of the resolved
//! key set is written into every artifact. Timestamps go only to `metadata.txt`, so two runs of
//! the same config produce byte-identical CSV files.
//!
//! Exit codes: 0 all strict monitors pass, 1 monitor failure, 2 usage/config/gate, 3 solver failure.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attractor_lab::{attractor_convergence_study, StudyConfig, StudyResult};
use crate::bounds_monitor::{
    absorbing_entries, build_constants, check_dissipation_windows, check_energy_ledger, check_h1_recursions,
    check_l2_bounds, check_uniform_h1, kappa1, ConstantInputs, ConstantsTable, SlackPolicy, VerdictSeries,
};
use crate::error::{Error, Result};
use crate::grid_fields::{make_grid, random_temperature, random_velocity, CellField, Grid, Spectrum, State, VelocityField};
use crate::gronwall::{check_instance, fuzz_lemma, GronwallInput, HypothesisVerdict, InstanceVerdict, Lemma};
use crate::maximum_principle::{decay_monitor, truncation_identity, MESH_SLACK_COEFF};
use crate::operators::estimate_cb;
use crate::stepper::{run_trajectory, ImplicitEuler, StepParams, Trajectory};

pub const CONFIG_VERSION: u32 = 1;
/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "THERMOLAB_OUTPUT_ROOT";

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    MonitorFailure,
    Usage,
    SolverFailure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::MonitorFailure => 1,
            Status::Usage => 2,
            Status::SolverFailure => 3,
        }
    }

    /// The status a library error maps to.
    pub fn of_error(e: &Error) -> Status {
        match e {
            Error::NonConvergence { .. } | Error::LinearSolve(_) | Error::StepFailed { .. } | Error::Divergence { .. } => {
                Status::SolverFailure
            }
            _ => Status::Usage,
        }
    }
}

/// Initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// `v = 0`, `th = amplitude sin(pi x2) cos(2 pi x1)`.
    ConductivePerturbation { amplitude: f64 },
    /// Power-law random velocity and temperature scaled to `|u0| = amplitude`.
    Random { seed: u64, amplitude: f64, exponent: f64, max_mode: usize },
    /// A state snapshot in the binary format of [`write_snapshot`].
    File(PathBuf),
}

impl InitialCondition {
    pub fn build(&self, g: &Grid) -> Result<State> {
        match self {
            InitialCondition::Zero => Ok(State::zeros(g)),
            InitialCondition::ConductivePerturbation { amplitude } => Ok(State {
                v: VelocityField::zeros(g),
                th: CellField::from_fn(g, |x, y| amplitude * (PI * y).sin() * (2.0 * PI * x).cos()),
            }),
            InitialCondition::Random { seed, amplitude, exponent, max_mode } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let spec = Spectrum { exponent: *exponent, max_mode: *max_mode };
                let mut u = State { v: random_velocity(g, &mut rng, &spec), th: random_temperature(g, &mut rng, &spec) };
                let n = u.norm();
                if n > 0.0 {
                    u.scale(amplitude / n);
                }
                Ok(u)
            }
            InitialCondition::File(path) => match read_snapshot(path)? {
                Snapshot::State(s) => {
                    s.check(g)?;
                    Ok(s)
                }
                _ => Err(Error::Snapshot(format!("{} does not hold a full state", path.display()))),
            },
        }
    }
}

/// Which monitors `simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    pub energy: bool,
    pub max_principle: bool,
    pub l2_bounds: bool,
    /// Informational: the H1 constants usually overflow, which makes these checks vacuous.
    pub h1_bounds: bool,
    pub absorbing: bool,
}

/// Settings of `attractor-study`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySettings {
    pub ladder: Vec<f64>,
    pub k_ref: f64,
    pub ensemble_size: usize,
    pub ensemble_seed: u64,
    pub ensemble_amplitude: f64,
    /// Time each ensemble member is run with the base step before sampling starts.
    pub pre_burn_time: f64,
    pub burn_in_time: f64,
    pub n_samples: usize,
    pub stride_time: f64,
    pub t_star: f64,
    pub finite_time_points: usize,
    pub distance_only: bool,
    pub forcing_window: (f64, f64),
    pub finite_time_window: (f64, f64),
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub params: StepParams,
    pub initial: InitialCondition,
    pub steps: usize,
    /// Horizon `T` of the H1 constants.
    pub horizon: f64,
    /// Window length `r` of the absorbed constants; `None` means `4 kappa1`.
    pub ball_radius: Option<f64>,
    pub mesh_coeff: f64,
    pub cb_samples: usize,
    pub cb_seed: u64,
    pub monitors: Monitors,
    /// Write a snapshot every this many steps (0: only the final state).
    pub snapshot_every: usize,
    pub output_dir: Option<PathBuf>,
    pub study: StudySettings,
    /// Hex SHA-256 of the resolved key set.
    pub hash: String,
}

/// Raw `key -> (value, location)` entries after includes.
type Entries = BTreeMap<String, (String, String)>;

fn config_err(location: &str, message: impl Into<String>) -> Error {
    Error::Config { location: location.to_string(), message: message.into() }
}

fn collect(text: &str, origin: &str, base: Option<&Path>, depth: usize, out: &mut Entries) -> Result<()> {
    if depth > 16 {
        return Err(config_err(origin, "include nesting deeper than 16"));
    }
    for (i, raw) in text.lines().enumerate() {
        let loc = format!("{origin}:{}", i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| config_err(&loc, format!("expected key = value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(config_err(&loc, "empty key"));
        }
        if key == "include" {
            let path = match base {
                Some(b) => b.join(value),
                None => PathBuf::from(value),
            };
            let inner = fs::read_to_string(&path).map_err(|e| config_err(&loc, format!("cannot include {}: {e}", path.display())))?;
            collect(&inner, &path.display().to_string(), path.parent(), depth + 1, out)?;
        } else {
            out.insert(key.to_string(), (value.to_string(), loc));
        }
    }
    Ok(())
}

struct Fields {
    entries: Entries,
    used: std::collections::BTreeSet<String>,
}

impl Fields {
    fn raw(&mut self, key: &str) -> Option<(String, String)> {
        self.used.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, loc)) => v.parse().map_err(|_| config_err(&loc, format!("field `{key}`: cannot parse `{v}`"))),
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, loc)) => match v.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(config_err(&loc, format!("field `{key}`: expected a boolean, got `{v}`"))),
            },
        }
    }

    fn list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some((v, loc)) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| config_err(&loc, format!("field `{key}`: cannot parse `{s}`"))))
                .collect(),
        }
    }

    fn pair(&mut self, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        let loc = self.entries.get(key).map(|e| e.1.clone()).unwrap_or_default();
        let l = self.list(key, &[default.0, default.1])?;
        match l.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(config_err(&loc, format!("field `{key}`: expected two numbers"))),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        Self::from_str_at(&text, &path.display().to_string(), path.parent())
    }

    /// Parse config text; `origin` names it in diagnostics and `base` resolves includes.
    pub fn from_str_at(text: &str, origin: &str, base: Option<&Path>) -> Result<Self> {
        let mut entries = Entries::new();
        collect(text, origin, base, 0, &mut entries)?;
        let mut hasher = Sha256::new();
        for (k, (v, _)) in &entries {
            hasher.update(format!("{k}={v}\n").as_bytes());
        }
        let hash = hex::encode(hasher.finalize());
        let mut f = Fields { entries, used: Default::default() };

        let version: u32 = f.get("version", CONFIG_VERSION)?;
        if version != CONFIG_VERSION {
            let loc = f.entries["version"].1.clone();
            return Err(config_err(&loc, format!("unsupported config version {version}")));
        }
        let d = StepParams::default();
        let params = StepParams {
            nu: f.get("nu", d.nu)?,
            kappa: f.get("kappa", d.kappa)?,
            k: f.get("k", d.k)?,
            eps_nl: f.get("eps_nl", d.eps_nl)?,
            max_picard: f.get("max_picard", d.max_picard)?,
            coupling: f.flag("coupling", d.coupling)?,
            strict: f.flag("strict", d.strict)?,
            halving_fallback: f.flag("halving_fallback", d.halving_fallback)?,
            gmres_restart: f.get("gmres_restart", d.gmres_restart)?,
            gmres_max_iter: f.get("gmres_max_iter", d.gmres_max_iter)?,
        };
        let amplitude: f64 = f.get("amplitude", 0.1)?;
        let preset = f.raw("preset");
        let initial = match preset.as_ref().map(|(v, l)| (v.as_str(), l.as_str())) {
            None | Some(("conductive-perturbation", _)) => InitialCondition::ConductivePerturbation { amplitude },
            Some(("zero", _)) => InitialCondition::Zero,
            Some(("random", _)) => InitialCondition::Random {
                seed: f.get("seed", 0)?,
                amplitude,
                exponent: f.get("spectrum_exponent", 2.0)?,
                max_mode: f.get("max_mode", 0)?,
            },
            Some(("file", loc)) => {
                let (p, _) = f.raw("initial_file").ok_or_else(|| config_err(loc, "preset `file` needs `initial_file`"))?;
                InitialCondition::File(match base {
                    Some(b) => b.join(p),
                    None => PathBuf::from(p),
                })
            }
            Some((other, loc)) => {
                return Err(config_err(loc, format!("field `preset`: unknown preset `{other}` (zero, conductive-perturbation, random, file)")))
            }
        };
        let monitors = Monitors {
            energy: f.flag("monitor.energy", true)?,
            max_principle: f.flag("monitor.max_principle", true)?,
            l2_bounds: f.flag("monitor.l2_bounds", true)?,
            h1_bounds: f.flag("monitor.h1_bounds", false)?,
            absorbing: f.flag("monitor.absorbing", false)?,
        };
        let study = StudySettings {
            ladder: f.list("study.ladder", &[0.04, 0.02, 0.01, 0.005])?,
            k_ref: f.get("study.k_ref", 0.001)?,
            ensemble_size: f.get("study.ensemble_size", 3)?,
            ensemble_seed: f.get("study.ensemble_seed", 0)?,
            ensemble_amplitude: f.get("study.ensemble_amplitude", 0.1)?,
            pre_burn_time: f.get("study.pre_burn_time", 40.0)?,
            burn_in_time: f.get("study.burn_in_time", 10.0)?,
            n_samples: f.get("study.n_samples", 4)?,
            stride_time: f.get("study.stride_time", 1.0)?,
            t_star: f.get("study.t_star", 2.0)?,
            finite_time_points: f.get("study.finite_time_points", 3)?,
            distance_only: f.flag("study.distance_only", false)?,
            forcing_window: f.pair("study.forcing_window", (0.7, 1.3))?,
            finite_time_window: f.pair("study.finite_time_window", (0.6, 1.4))?,
        };
        let cfg = RunConfig {
            name: f.get("name", "run".to_string())?,
            nx: f.get("nx", 32)?,
            ny: f.get("ny", 32)?,
            params,
            initial,
            steps: f.get("steps", 100)?,
            horizon: f.get("horizon", 2.0)?,
            ball_radius: match f.raw("ball_radius") {
                None => None,
                Some((v, loc)) => Some(v.parse().map_err(|_| config_err(&loc, format!("field `ball_radius`: cannot parse `{v}`")))?),
            },
            mesh_coeff: f.get("mesh_slack_coeff", MESH_SLACK_COEFF)?,
            cb_samples: f.get("cb_samples", 200)?,
            cb_seed: f.get("cb_seed", 1)?,
            monitors,
            snapshot_every: f.get("snapshot_every", 0)?,
            output_dir: f.raw("output_dir").map(|(v, _)| PathBuf::from(v)),
            study,
            hash,
        };
        let unknown: Vec<_> = f.entries.iter().filter(|(k, _)| !f.used.contains(*k)).collect();
        if let Some((k, (_, loc))) = unknown.first() {
            return Err(config_err(loc, format!("unknown field `{k}`")));
        }
        make_grid(cfg.nx, cfg.ny).map_err(|e| config_err(origin, e.to_string()))?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Grid {
        make_grid(self.nx, self.ny).expect("validated at parse time")
    }

    /// `output_dir`, else `$THERMOLAB_OUTPUT_ROOT/<name>`, else `thermolab-output/<name>`.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("thermolab-output"));
        root.join(&self.name)
    }
}

// ---------------------------------------------------------------- snapshots

const MAGIC: &[u8; 4] = b"THLB";
const SNAPSHOT_VERSION: u32 = 1;

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Temperature(CellField),
    Velocity(VelocityField),
    State(State),
}

impl Snapshot {
    fn kind(&self) -> u8 {
        match self {
            Snapshot::Temperature(_) => 0,
            Snapshot::Velocity(_) => 1,
            Snapshot::State(_) => 2,
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            Snapshot::Temperature(t) => (t.nx, t.ny),
            Snapshot::Velocity(v) => (v.nx, v.ny),
            Snapshot::State(s) => (s.th.nx, s.th.ny),
        }
    }
}

/// `THLB`, format version, `nx`, `ny` (u32 LE), kind (u8: 0 temperature, 1 velocity, 2 state),
/// then little-endian f64 values: `u1`, `u2`, `th` for whichever fields the kind holds.
pub fn encode_snapshot(s: &Snapshot) -> Vec<u8> {
    let (nx, ny) = s.dims();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(nx as u32).to_le_bytes());
    out.extend_from_slice(&(ny as u32).to_le_bytes());
    out.push(s.kind());
    let mut put = |d: &[f64]| d.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    match s {
        Snapshot::Temperature(t) => put(&t.data),
        Snapshot::Velocity(v) => {
            put(&v.u1);
            put(&v.u2);
        }
        Snapshot::State(st) => {
            put(&st.v.u1);
            put(&st.v.u2);
            put(&st.th.data);
        }
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let bad = |m: &str| Error::Snapshot(m.to_string());
    if bytes.len() < 17 || &bytes[..4] != MAGIC {
        return Err(bad("missing THLB header"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if word(4) != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported snapshot version {}", word(4))));
    }
    let (nx, ny) = (word(8) as usize, word(12) as usize);
    let kind = bytes[16];
    let (n1, n2, nt) = (nx * ny, nx * (ny + 1), nx * ny);
    let count = match kind {
        0 => nt,
        1 => n1 + n2,
        2 => n1 + n2 + nt,
        _ => return Err(Error::Snapshot(format!("unknown snapshot kind {kind}"))),
    };
    let body = &bytes[17..];
    if body.len() != 8 * count {
        return Err(Error::Snapshot(format!("expected {} data bytes, found {}", 8 * count, body.len())));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let vel = |o: usize| VelocityField { nx, ny, u1: vals[o..o + n1].to_vec(), u2: vals[o + n1..o + n1 + n2].to_vec() };
    Ok(match kind {
        0 => Snapshot::Temperature(CellField { nx, ny, data: vals }),
        1 => Snapshot::Velocity(vel(0)),
        _ => Snapshot::State(State { v: vel(0), th: CellField { nx, ny, data: vals[n1 + n2..].to_vec() } }),
    })
}

pub fn write_snapshot(path: &Path, s: &Snapshot) -> Result<()> {
    fs::write(path, encode_snapshot(s))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

/// Temperature as `x1,x2,value` rows at the cell centres.
pub fn write_temperature_csv<W: Write>(mut w: W, th: &CellField, g: &Grid, hash: &str) -> std::io::Result<()> {
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "x1,x2,value")?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            writeln!(w, "{},{},{:e}", g.x_center(i), g.y_center(j), th.at(i, j))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- tables

/// One row per state: norms, solver statistics, and the per-step ledger slack.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, hash: &str) -> std::io::Result<()> {
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "n,t,v_l2,v_h1,th_l2,th_h1,picard_iters,krylov_iters,residual_v,residual_th,slack_v,slack_th")?;
    let p = &traj.params;
    for (n, s) in traj.states.iter().enumerate() {
        let (vl, tl) = (s.v.norm_sq().sqrt(), s.th.norm_sq().sqrt());
        let (pi, ki, rv, rt) = match n.checked_sub(1).map(|i| &traj.reports[i]) {
            Some(r) => (r.picard_iters, r.krylov_iters, r.residual_v, r.residual_th),
            None => (0, 0, 0.0, 0.0),
        };
        writeln!(
            w,
            "{n},{},{vl:e},{:e},{tl:e},{:e},{pi},{ki},{rv:e},{rt:e},{:e},{:e}",
            traj.time(n),
            s.v.h1_sq().sqrt(),
            s.th.h1_sq().sqrt(),
            p.ledger_slack(vl),
            p.ledger_slack(tl)
        )?;
    }
    Ok(())
}

pub fn write_verdicts_csv<W: Write>(mut w: W, series: &VerdictSeries, hash: &str) -> std::io::Result<()> {
    writeln!(w, "# config_hash={hash}")?;
    series.write_csv(w)
}

/// Constants as JSON; values that overflow `f64` are given as `null` with their base-10 logarithm.
pub fn constants_json(table: &ConstantsTable, hash: &str) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = table
        .entries()
        .into_iter()
        .map(|e| {
            let v = e.value.value();
            let l = e.value.log10();
            serde_json::json!({
                "name": e.name,
                "value": if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null },
                "log10": if l.is_finite() { serde_json::json!(l) } else { serde_json::Value::Null },
                "display": e.value.to_string(),
                "definition": e.provenance,
            })
        })
        .collect();
    serde_json::json!({ "config_hash": hash, "constants": entries })
}

fn write_metadata(dir: &Path, cfg: &RunConfig, command: &str) -> Result<()> {
    let ts = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let text = format!(
        "command={command}\nconfig_hash={}\nconfig_version={CONFIG_VERSION}\nunix_time={ts}\ncrate_version={}\n",
        cfg.hash,
        env!("CARGO_PKG_VERSION")
    );
    fs::write(dir.join("metadata.txt"), text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

// ---------------------------------------------------------------- commands

/// What a command did.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    /// Human-readable report lines.
    pub report: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    fn failed(e: &Error) -> Self {
        Outcome { status: Status::of_error(e), report: vec![format!("error: {e}")], artifacts: Vec::new() }
    }
}

/// `c_b` estimate, constants table, and slack policy for a config.
pub fn constants_for(cfg: &RunConfig, u0: &State) -> Result<ConstantsTable> {
    let g = cfg.grid();
    let cb = estimate_cb(&g, cfg.cb_samples, cfg.cb_seed);
    let r = cfg.ball_radius.unwrap_or(4.0 * kappa1(cfg.params.nu, cfg.params.kappa));
    build_constants(&ConstantInputs::from_state(u0, &cfg.params, &g, cb, cfg.horizon, r)?)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Outcome {
    match simulate(cfg) {
        Ok(o) => o,
        Err(e) => Outcome::failed(&e),
    }
}

fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let g = cfg.grid();
    let u0 = cfg.initial.build(&g)?;
    // refuse gated step sizes before touching the output directory
    ImplicitEuler::new(&g, cfg.params)?;
    let traj = run_trajectory(&u0, &cfg.params, cfg.steps, &g)?;
    let dir = cfg.resolve_output_dir();
    fs::create_dir_all(dir.join("verdicts"))?;
    fs::create_dir_all(dir.join("snapshots"))?;
    let mut artifacts = Vec::new();
    let mut report = Vec::new();
    let mut strict_fail = false;

    let path = dir.join("trajectory.csv");
    write_trajectory_csv(create(&path)?, &traj, &cfg.hash)?;
    artifacts.push(path);

    let mut series: Vec<(VerdictSeries, bool)> = Vec::new();
    if cfg.monitors.energy {
        let e = check_energy_ledger(&traj);
        let (dv, dt) = check_dissipation_windows(&traj);
        for s in [e.identity_v, e.identity_th, e.velocity, e.temperature, dv, dt] {
            series.push((s, true));
        }
    }
    if cfg.monitors.max_principle {
        let d = decay_monitor(&traj, cfg.mesh_coeff)?;
        for s in [d.plus, d.minus, d.norm, d.band] {
            series.push((s, true));
        }
    }
    let needs_constants = cfg.monitors.l2_bounds || cfg.monitors.h1_bounds || cfg.monitors.absorbing;
    if needs_constants {
        let table = constants_for(cfg, &u0)?;
        let slack = SlackPolicy::new(&cfg.params, &g, cfg.mesh_coeff);
        if cfg.monitors.l2_bounds {
            let (a, b) = check_l2_bounds(&traj, &table, &slack);
            series.push((a, true));
            series.push((b, true));
        }
        if cfg.monitors.h1_bounds {
            let h = check_h1_recursions(&traj, &table, &slack);
            let (a, b, c) = check_uniform_h1(&traj, &table, &slack);
            for s in [h.growth, h.quartic, h.velocity_increments, h.temperature_increments, a, b, c] {
                series.push((s, false));
            }
        }
        if cfg.monitors.absorbing {
            let a = absorbing_entries(&traj, &table, &slack);
            for (name, ok) in a.verdicts() {
                report.push(format!("{name}: {}", if ok { "pass" } else { "fail" }));
                strict_fail |= !ok;
            }
        }
        let path = dir.join("constants.json");
        fs::write(&path, serde_json::to_string_pretty(&constants_json(&table, &cfg.hash)).expect("json") + "\n")?;
        artifacts.push(path);
    }
    for (s, strict) in &series {
        let path = dir.join("verdicts").join(format!("{}.csv", s.name));
        write_verdicts_csv(create(&path)?, s, &cfg.hash)?;
        artifacts.push(path);
        let ok = s.all_pass();
        let tag = if *strict { "" } else { " (informational)" };
        report.push(format!("{}: {} (min margin {:e}){tag}", s.name, if ok { "pass" } else { "fail" }, s.min_margin()));
        strict_fail |= *strict && !ok;
    }

    let snaps: Vec<usize> = match cfg.snapshot_every {
        0 => vec![traj.steps()],
        e => (0..=traj.steps()).filter(|n| n % e == 0 || *n == traj.steps()).collect(),
    };
    for n in snaps {
        let path = dir.join("snapshots").join(format!("state_{n:06}.thlb"));
        write_snapshot(&path, &Snapshot::State(traj.states[n].clone()))?;
        artifacts.push(path);
    }
    let path = dir.join("snapshots").join("final_temperature.csv");
    write_temperature_csv(create(&path)?, &traj.states[traj.steps()].th, &g, &cfg.hash)?;
    artifacts.push(path);
    write_metadata(&dir, cfg, "simulate")?;
    let status = if strict_fail { Status::MonitorFailure } else { Status::Pass };
    Ok(Outcome { status, report, artifacts })
}

/// Parse a Gronwall instance: `lemma`, `k`, `xi0`, `n_star`, `eta`, `zeta`, optional `xi`
/// (comma lists), `window = a, b`, `a1`, `a2`, `a3`.
pub fn parse_gronwall_instance(text: &str, origin: &str) -> Result<(Lemma, GronwallInput)> {
    let mut entries = Entries::new();
    collect(text, origin, None, 0, &mut entries)?;
    let mut f = Fields { entries, used: Default::default() };
    let (lemma_s, loc) = f.raw("lemma").ok_or_else(|| config_err(origin, "missing field `lemma`"))?;
    let lemma = match lemma_s.as_str() {
        "classical" => Lemma::Classical,
        "uniform" => Lemma::Uniform,
        "divided" => Lemma::Divided,
        other => return Err(config_err(&loc, format!("field `lemma`: unknown lemma `{other}`"))),
    };
    let w = f.list("window", &[0.0, 0.0])?;
    let inp = GronwallInput {
        k: f.get("k", 0.0)?,
        xi0: f.get("xi0", 0.0)?,
        eta: f.list("eta", &[])?,
        zeta: f.list("zeta", &[])?,
        xi: f.list("xi", &[])?,
        n_star: f.get("n_star", 0)?,
        window: (w.first().copied().unwrap_or(0.0) as usize, w.get(1).copied().unwrap_or(0.0) as usize),
        a1: f.get("a1", 0.0)?,
        a2: f.get("a2", 0.0)?,
        a3: f.get("a3", 0.0)?,
    };
    if let Some((k, (_, loc))) = f.entries.iter().find(|(k, _)| !f.used.contains(*k)) {
        return Err(config_err(loc, format!("unknown field `{k}`")));
    }
    Ok((lemma, inp))
}

/// Random truncation-inequality instances; returns the number of violations.
pub fn fuzz_truncation(seed: u64, trials: usize) -> usize {
    let g = make_grid(16, 16).expect("fixed grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = Spectrum { exponent: 1.0, max_mode: 6 };
    (0..trials)
        .filter(|_| {
            let mut phi = random_temperature(&g, &mut rng, &spec);
            let psi = random_temperature(&g, &mut rng, &spec);
            phi.axpy(0.5, &psi);
            !truncation_identity(&phi, &psi, &g).expect("same grid").holds(1e-12)
        })
        .count()
}

/// Gronwall and truncation fuzz suites, plus an optional supplied instance.
/// A supplied instance that violates its hypotheses is reported, not counted as a failure.
pub fn cmd_verify_lemmas(seed: u64, trials: usize, instance: Option<&Path>) -> Outcome {
    if trials == 0 {
        return Outcome { status: Status::Usage, report: vec!["error: trials must be at least 1".into()], artifacts: Vec::new() };
    }
    let mut report = Vec::new();
    let mut fail = false;
    for lemma in [Lemma::Classical, Lemma::Uniform, Lemma::Divided] {
        let s = fuzz_lemma(lemma, seed, trials);
        report.push(format!(
            "{lemma:?}: trials {} bound failures {} max ratio {:.6} rejected violations {} accepted violations {}",
            s.trials, s.bound_failures, s.max_ratio, s.rejected, s.accepted_violations
        ));
        fail |= !s.pass();
    }
    let bad = fuzz_truncation(seed, trials);
    report.push(format!("truncation: trials {trials} violations {bad}"));
    fail |= bad > 0;
    if let Some(path) = instance {
        let parsed = fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| parse_gronwall_instance(&t, &path.display().to_string()));
        match parsed {
            Err(e) => return Outcome::failed(&e),
            Ok((lemma, inp)) => match check_instance(&inp, lemma) {
                InstanceVerdict::HypothesisFail(HypothesisVerdict::Fail { condition, index, value, limit }) => report.push(format!(
                    "instance {}: hypothesis-fail ({condition} at {index}: {value:e} vs {limit:e})",
                    path.display()
                )),
                InstanceVerdict::HypothesisFail(HypothesisVerdict::Pass) => unreachable!("pass is not a failure"),
                InstanceVerdict::BoundFail { n, xi, bound } => {
                    report.push(format!("instance {}: bound-fail at n = {n}: xi = {xi:e} > {bound:e}", path.display()));
                    fail = true;
                }
                InstanceVerdict::Pass { max_ratio } => {
                    report.push(format!("instance {}: pass (max ratio {max_ratio:.6})", path.display()))
                }
            },
        }
    }
    Outcome { status: if fail { Status::MonitorFailure } else { Status::Pass }, report, artifacts: Vec::new() }
}

/// Random temperature perturbations run for `pre_burn_time` with the base step.
pub fn build_ensemble(cfg: &RunConfig) -> Result<Vec<State>> {
    let g = cfg.grid();
    let s = &cfg.study;
    let stepper = ImplicitEuler::new(&g, cfg.params)?;
    let steps = (s.pre_burn_time / cfg.params.k).round() as usize;
    (0..s.ensemble_size as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.ensemble_seed.wrapping_add(i));
            let mut th = random_temperature(&g, &mut rng, &Spectrum { exponent: 2.0, max_mode: 4 });
            let n = th.norm_sq().sqrt();
            if n > 0.0 {
                th.scale(s.ensemble_amplitude / n);
            }
            stepper.advance(&State { v: VelocityField::zeros(&g), th }, steps)
        })
        .collect()
}

pub fn study_config(cfg: &RunConfig) -> Result<StudyConfig> {
    let g = cfg.grid();
    let s = &cfg.study;
    Ok(StudyConfig {
        grid: g,
        params: cfg.params,
        ladder: s.ladder.clone(),
        k_ref: s.k_ref,
        ensemble: build_ensemble(cfg)?,
        burn_in_time: s.burn_in_time,
        n_samples: s.n_samples,
        stride_time: s.stride_time,
        t_star: s.t_star,
        finite_time_points: s.finite_time_points,
        forcing_initial: cfg.initial.build(&g)?,
        r1: f64::INFINITY,
        distance_only: s.distance_only,
    })
}

/// Slope and monotonicity checks of a finished study, as `(name, pass, detail)`.
pub fn study_checks(r: &StudyResult, s: &StudySettings) -> Vec<(&'static str, bool, String)> {
    let within = |x: Option<f64>, w: (f64, f64)| x.is_some_and(|x| x >= w.0 && x <= w.1);
    let mut out = Vec::new();
    if !s.distance_only {
        out.push(("forcing-f-slope", within(r.slope_fk, s.forcing_window), format!("{:?} in {:?}", r.slope_fk, s.forcing_window)));
        out.push(("forcing-g-slope", within(r.slope_gk, s.forcing_window), format!("{:?} in {:?}", r.slope_gk, s.forcing_window)));
        out.push((
            "finite-time-slope",
            within(r.slope_finite_time, s.finite_time_window),
            format!("{:?} in {:?}", r.slope_finite_time, s.finite_time_window),
        ));
    }
    out.push((
        "distance-monotone",
        r.distances_nonincreasing(),
        format!("inversions {:?}, sampling noise {:e}", r.inversions, r.sampling_noise),
    ));
    out
}

pub fn cmd_attractor_study(cfg: &RunConfig) -> Outcome {
    let run = || -> Result<Outcome> {
        let sc = study_config(cfg)?;
        let r = attractor_convergence_study(&sc)?;
        let dir = cfg.resolve_output_dir();
        fs::create_dir_all(&dir)?;
        let path = dir.join("study.csv");
        let mut w = create(&path)?;
        writeln!(w, "# config_hash={}", cfg.hash)?;
        r.write_csv(&mut w)?;
        w.flush()?;
        write_metadata(&dir, cfg, "attractor-study")?;
        let mut report: Vec<String> = r
            .rows
            .iter()
            .map(|x| format!("k = {}: dist {:e}, finite-time sup {:e}, |f_k|^2 {:e}, |g_k|^2 {:e}", x.k, x.dist_to_ref, x.finite_time_sup, x.fk_norm2, x.gk_norm2))
            .collect();
        let mut fail = false;
        for (name, ok, detail) in study_checks(&r, &cfg.study) {
            report.push(format!("{name}: {} ({detail})", if ok { "pass" } else { "fail" }));
            fail |= !ok;
        }
        Ok(Outcome { status: if fail { Status::MonitorFailure } else { Status::Pass }, report, artifacts: vec![path] })
    };
    run().unwrap_or_else(|e| Outcome::failed(&e))
}

/// Write `constants.json` for the config's initial data and print the table.
pub fn cmd_constants(cfg: &RunConfig) -> Outcome {
    let run = || -> Result<Outcome> {
        let u0 = cfg.initial.build(&cfg.grid())?;
        let table = constants_for(cfg, &u0)?;
        let dir = cfg.resolve_output_dir();
        fs::create_dir_all(&dir)?;
        let path = dir.join("constants.json");
        fs::write(&path, serde_json::to_string_pretty(&constants_json(&table, &cfg.hash)).expect("json") + "\n")?;
        write_metadata(&dir, cfg, "constants")?;
        let mut report = Vec::new();
        for e in table.entries() {
            let mut line = String::new();
            let _ = write!(line, "{:<16} {:<22} {}", e.name, e.value.to_string(), e.provenance);
            report.push(line);
        }
        Ok(Outcome { status: Status::Pass, report, artifacts: vec![path] })
    };
    run().unwrap_or_else(|e| Outcome::failed(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let g = make_grid(4, 5).unwrap();
        let s = State { v: VelocityField::from_stream_fn(&g, |x, y| (x + 2.0 * y).sin()), th: CellField::from_fn(&g, |x, y| x - y) };
        let back = decode_snapshot(&encode_snapshot(&Snapshot::State(s.clone()))).unwrap();
        assert_eq!(back, Snapshot::State(s));
        assert!(decode_snapshot(b"THLBxxxx").is_err());
    }

    #[test]
    fn unknown_key_is_located() {
        let e = RunConfig::from_str_at("nx = 8\n\nnope = 1\n", "cfg", None).unwrap_err();
        match e {
            Error::Config { location, message } => {
                assert_eq!(location, "cfg:3");
                assert!(message.contains("nope"));
            }
            other => panic!("{other}"),
        }
    }
}

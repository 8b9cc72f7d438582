use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermolab::cli_io::{cmd_attractor_study, cmd_constants, cmd_simulate, cmd_verify_lemmas, Outcome, RunConfig, Status};

/// Implicit Euler Boussinesq convection with bound monitors.
#[derive(Parser)]
#[command(name = "thermolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trajectory with the enabled monitors and write its artifacts.
    Simulate(ConfigArgs),
    /// Fuzz the Gronwall lemmas and the truncation inequalities.
    VerifyLemmas {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Gronwall instance file to check in addition to the fuzz suites.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Sample attractors along a step-size ladder and fit the convergence slopes.
    AttractorStudy(ConfigArgs),
    /// Evaluate the constants table for the configured initial data.
    Constants(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (key = value lines).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set nu=0.05`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Time step.
    #[arg(short = 'k', long = "step")]
    k: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> thermolab::Result<RunConfig> {
        let mut text = String::new();
        if let Some(p) = &self.config {
            let abs = std::path::absolute(p)?;
            text.push_str(&format!("include = {}\n", abs.display()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                text.push_str(&format!("{k} = {v}\n"));
            }
        };
        push("nx", self.nx.map(|x| x.to_string()));
        push("ny", self.ny.map(|x| x.to_string()));
        push("nu", self.nu.map(|x| x.to_string()));
        push("kappa", self.kappa.map(|x| x.to_string()));
        push("k", self.k.map(|x| x.to_string()));
        push("steps", self.steps.map(|x| x.to_string()));
        push("preset", self.preset.clone());
        push("strict", self.strict.then(|| "true".to_string()));
        push("output_dir", self.output_dir.as_ref().map(|p| p.display().to_string()));
        for o in &self.overrides {
            text.push_str(o);
            text.push('\n');
        }
        RunConfig::from_str_at(&text, "command line", None)
    }
}

fn finish(o: Outcome) -> ExitCode {
    for line in &o.report {
        println!("{line}");
    }
    for a in &o.artifacts {
        eprintln!("wrote {}", a.display());
    }
    ExitCode::from(o.status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let with_config = |args: &ConfigArgs, run: fn(&RunConfig) -> Outcome| match args.load() {
        Ok(cfg) => {
            eprintln!("config hash {}", cfg.hash);
            finish(run(&cfg))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Usage.code() as u8)
        }
    };
    match &cli.command {
        Command::Simulate(a) => with_config(a, cmd_simulate),
        Command::AttractorStudy(a) => with_config(a, cmd_attractor_study),
        Command::Constants(a) => with_config(a, cmd_constants),
        Command::VerifyLemmas { seed, trials, instance } => finish(cmd_verify_lemmas(*seed, *trials, instance.as_deref())),
    }
}

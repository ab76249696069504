use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use extnls_cli::config::{canned, ConfigError, ExperimentConfig, CANNED};
use extnls_cli::experiment::{self, RunError, Stage};
use extnls_core::ground_state::{gn_constant, solve_ground_state, threshold_quantities};
use extnls_core::TheoremId;

#[derive(Parser)]
#[command(name = "extnls", version, about = "Focusing NLS on the exterior of a convex obstacle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// config file (dotted key-value text, or JSON by extension)
    #[arg(long, short, conflicts_with = "canned")]
    config: Option<PathBuf>,
    /// name of a shipped config
    #[arg(long)]
    canned: Option<String>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig, RunError> {
        match (&self.config, &self.canned) {
            (Some(path), _) => Ok(ExperimentConfig::load(path)?),
            (None, Some(name)) => canned(name).ok_or_else(|| {
                let names: Vec<&str> = CANNED.iter().map(|(n, _)| *n).collect();
                ConfigError::Invalid(format!("no canned config '{name}' (have: {})", names.join(", "))).into()
            }),
            (None, None) => Err(ConfigError::Invalid("pass --config <file> or --canned <name>".into()).into()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the ground state and print its constants as JSON
    Groundstate {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// also write r, Q(r), Q'(r) samples as CSV
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Run an experiment and write series.csv, verdict.json, criteria.json, virial_report.json
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// exact output directory (default: <output.dir or $EXTNLS_OUTPUT_DIR>/<name>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the hypothesis report of one theorem for the configured initial data
    Criteria {
        #[command(flatten)]
        config: ConfigArg,
        /// ball, convex, sym or threshold
        #[arg(long)]
        theorem: TheoremId,
    },
    /// Run without writing files and print the identity report
    VerifyIdentities {
        #[command(flatten)]
        config: ConfigArg,
        /// only the static Pohozaev residuals of the initial field
        #[arg(long)]
        pohozaev_only: bool,
    },
    /// Run at (h, dt) and (h/2, dt/2) and compare the identity closures
    Convergence {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a config in the flat key-value form (or JSON)
    ShowConfig {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        json: bool,
    },
}

fn core(stage: Stage) -> impl FnOnce(extnls_core::Error) -> RunError {
    move |e| RunError { stage, message: e.to_string() }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output")
}

fn groundstate(d: usize, p: f64, tol: f64, samples: Option<PathBuf>) -> Result<(), RunError> {
    let q = solve_ground_state(d, p, tol).map_err(core(Stage::GroundState))?;
    let mut out = serde_json::json!({
        "d": d,
        "p": p,
        "q0": q.q0,
        "mass": q.mass,
        "grad_sq": q.grad_sq,
        "lp1": q.lp1,
        "energy": q.energy,
        "identity_residuals": q.identity_residuals(),
    });
    if let Ok(c) = gn_constant(&q) {
        out["c_gn"] = c.into();
    }
    if let Ok(t) = threshold_quantities(&q) {
        out["threshold"] = serde_json::to_value(t).expect("serializable");
    }
    println!("{}", to_json(&out));
    if let Some(path) = samples {
        let mut csv = String::from("r,q,dq\n");
        for i in 0..q.r_samples.len() {
            csv.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", q.r_samples[i], q.q_samples[i], q.dq_samples[i]));
        }
        std::fs::write(&path, csv).map_err(|e| RunError { stage: Stage::Output, message: format!("{}: {e}", path.display()) })?;
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), RunError> {
    match cmd {
        Command::Groundstate { d, p, tol, samples } => groundstate(d, p, tol, samples),
        Command::Simulate { config, out } => {
            let cfg = config.load()?;
            let r = experiment::run_experiment(&cfg, out.as_deref())?;
            println!("{}", to_json(&r.verdict));
            Ok(())
        }
        Command::Criteria { config, theorem } => {
            let cfg = config.load()?;
            let prep = experiment::prepare(&cfg)?;
            let rep = experiment::check_theorem(&prep, theorem, cfg.problem.p)?;
            println!("{}", to_json(&rep));
            Ok(())
        }
        Command::VerifyIdentities { config, pohozaev_only } => {
            let cfg = config.load()?;
            let prep = experiment::prepare(&cfg)?;
            if pohozaev_only {
                println!("{}", to_json(&extnls_core::virial::pohozaev_records(&prep.initial)));
            } else {
                let (_, virial, _) = experiment::simulate(&cfg, &prep)?;
                println!("{}", to_json(&virial));
            }
            Ok(())
        }
        Command::Convergence { config, out } => {
            let cfg = config.load()?;
            let (report, _, _) = experiment::run_convergence(&cfg, out.as_deref())?;
            println!("{}", to_json(&report));
            Ok(())
        }
        Command::ShowConfig { config, json } => {
            let cfg = config.load()?;
            if json {
                println!("{}", cfg.to_json_string());
            } else {
                print!("{}", cfg.to_flat_string());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            if e.stage == Stage::Config {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

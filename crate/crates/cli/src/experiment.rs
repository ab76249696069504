//! The experiment pipeline: ground state (if needed), grid, initial data,
//! criteria pre-check, simulation, identity verification and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use extnls_core::criteria::{self, DataSummary, MonitorResult};
use extnls_core::evolution::{self, RunOutcome};
use extnls_core::ground_state::{critical_exponent, solve_ground_state};
use extnls_core::virial::{closure_report, pohozaev_records};
use extnls_core::{
    BlowupStatus, BlowupVerdict, ComplexField, CriterionReport, DiagnosticsSeries, ExteriorGrid, GroundStateProfile, IdentityRecord, TheoremId,
    VirialReport,
};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};

/// Overrides `output.dir` when set.
pub const OUTPUT_DIR_ENV: &str = "EXTNLS_OUTPUT_DIR";

pub const OUTPUT_FILES: [&str; 4] = ["series.csv", "verdict.json", "criteria.json", "virial_report.json"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    GroundState,
    Grid,
    InitialData,
    Criteria,
    Simulate,
    Identities,
    Output,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {message}")]
pub struct RunError {
    pub stage: Stage,
    pub message: String,
}

impl RunError {
    fn at(stage: Stage) -> impl FnOnce(extnls_core::Error) -> Self {
        move |e| RunError { stage, message: e.to_string() }
    }

    /// Machine-readable record printed on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "stage": self.stage, "message": self.message } }).to_string()
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError { stage: Stage::Config, message: e.to_string() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError { stage: Stage::Output, message: format!("{}: {e}", path.display()) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCheck {
    pub theorem: TheoremId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaOutput {
    pub initial: DataSummary,
    pub reports: Vec<CriterionReport>,
    pub skipped: Vec<SkippedCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorResult>,
}

impl CriteriaOutput {
    pub fn report(&self, id: TheoremId) -> Option<&CriterionReport> {
        self.reports.iter().find(|r| r.theorem == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictOutput {
    #[serde(flatten)]
    pub verdict: BlowupVerdict,
    pub t_last: f64,
    pub rows: usize,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub min_dt: f64,
    pub stalled: bool,
    pub symmetric: bool,
    pub variance_c: f64,
}

/// Extremes of the boundary brackets over the recorded rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketSummary {
    pub max_abs_bracket_ball: f64,
    pub max_bracket_ball: f64,
    pub max_bracket_sym: f64,
}

impl BracketSummary {
    pub fn of(series: &DiagnosticsSeries) -> Self {
        let mut b = BracketSummary { max_abs_bracket_ball: 0.0, max_bracket_ball: f64::NEG_INFINITY, max_bracket_sym: f64::NEG_INFINITY };
        for r in &series.rows {
            b.max_abs_bracket_ball = b.max_abs_bracket_ball.max(r.bracket_ball.abs());
            b.max_bracket_ball = b.max_bracket_ball.max(r.bracket_ball);
            b.max_bracket_sym = b.max_bracket_sym.max(r.bracket_sym);
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirialOutput {
    pub closure: VirialReport,
    pub pohozaev: Vec<IdentityRecord>,
    pub brackets: BracketSummary,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub dir: PathBuf,
    pub grid: Arc<ExteriorGrid>,
    pub initial: ComplexField,
    pub series: DiagnosticsSeries,
    pub verdict: VerdictOutput,
    pub criteria: CriteriaOutput,
    pub virial: VirialOutput,
}

/// d=2 with p>3, or d=3 with 0 < s_c < 1.
pub fn threshold_applicable(d: usize, p: f64) -> bool {
    let s_c = critical_exponent(d, p);
    match d {
        2 => p > 3.0,
        3 => s_c > 0.0 && s_c < 1.0,
        _ => false,
    }
}

/// `dir` if given, else `$EXTNLS_OUTPUT_DIR/<name>`, else `output.dir/<name>`.
pub fn resolve_output_dir(cfg: &ExperimentConfig, dir: Option<&Path>) -> PathBuf {
    if let Some(d) = dir {
        return d.to_path_buf();
    }
    let base = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    base.join(&cfg.name)
}

pub struct Prepared {
    pub grid: Arc<ExteriorGrid>,
    pub initial: ComplexField,
    pub profile: Option<GroundStateProfile>,
}

/// Stages up to and including the initial data.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, RunError> {
    cfg.validate()?;
    let (d, p) = (cfg.problem.d, cfg.problem.p);
    let needs_profile = cfg.initial.data.needs_profile() || threshold_applicable(d, p);
    let profile = if needs_profile {
        // the pseudoconformal profile lives at the mass-critical exponent
        let gp = if cfg.initial.data.needs_profile() { 1.0 + 4.0 / d as f64 } else { p };
        Some(solve_ground_state(d, gp, cfg.ground_state.tol).map_err(RunError::at(Stage::GroundState))?)
    } else {
        None
    };
    let ob = cfg.obstacle_spec()?;
    let grid = Arc::new(ExteriorGrid::build(&ob, cfg.grid.r_out, cfg.grid.h).map_err(RunError::at(Stage::Grid))?);
    let initial = cfg
        .initial
        .data
        .build(grid.clone(), &cfg.symmetry(), profile.as_ref())
        .map_err(RunError::at(Stage::InitialData))?;
    let profile = profile.filter(|q| (q.p - p).abs() < 1e-12);
    Ok(Prepared { grid, initial, profile })
}

fn one_check(id: TheoremId, u: &ComplexField, p: f64, profile: Option<&GroundStateProfile>) -> extnls_core::Result<CriterionReport> {
    match id {
        TheoremId::ThmBall => criteria::check_thm_ball(u, p),
        TheoremId::ThmConvex => criteria::check_thm_convex(u, p),
        TheoremId::ThmSym => criteria::check_thm_sym(u, p),
        TheoremId::ThmThreshold => match profile {
            Some(q) => criteria::check_threshold(u, q, p),
            None => Err(extnls_core::Error::Precondition(format!(
                "threshold criterion needs d=2, p>3 or d=3, 7/3<p<5 (got d={}, p={p})",
                u.dim()
            ))),
        },
    }
}

pub fn check_theorem(prep: &Prepared, id: TheoremId, p: f64) -> Result<CriterionReport, RunError> {
    one_check(id, &prep.initial, p, prep.profile.as_ref()).map_err(RunError::at(Stage::Criteria))
}

/// Every theorem whose setting applies; the others are listed with the reason.
pub fn precheck(prep: &Prepared, p: f64) -> CriteriaOutput {
    let mut out = CriteriaOutput { initial: DataSummary::of(&prep.initial, p), reports: vec![], skipped: vec![], monitor: None };
    for id in [TheoremId::ThmBall, TheoremId::ThmConvex, TheoremId::ThmSym, TheoremId::ThmThreshold] {
        match one_check(id, &prep.initial, p, prep.profile.as_ref()) {
            Ok(r) => out.reports.push(r),
            Err(e) => out.skipped.push(SkippedCheck { theorem: id, reason: e.to_string() }),
        }
    }
    out
}

/// Simulation and identity checks without writing anything.
pub fn simulate(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(RunOutcome, VirialOutput, Option<MonitorResult>), RunError> {
    let params = cfg.run_params();
    let outcome = evolution::run(&prep.initial, &params).map_err(RunError::at(Stage::Simulate))?;
    let monitor = match &prep.profile {
        Some(q) => Some(criteria::monitor_threshold(&outcome.series, q, outcome.verdict.t_detect).map_err(RunError::at(Stage::Criteria))?),
        None => None,
    };
    let closure = closure_report(&outcome.series, &prep.grid.obstacle).map_err(RunError::at(Stage::Identities))?;
    let virial = VirialOutput { closure, pohozaev: pohozaev_records(&prep.initial), brackets: BracketSummary::of(&outcome.series) };
    Ok((outcome, virial, monitor))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<(), RunError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(v).map_err(|e| RunError { stage: Stage::Output, message: e.to_string() })?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Full pipeline; writes the four output files into the resolved directory.
pub fn run_experiment(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<ExperimentResult, RunError> {
    let prep = prepare(cfg)?;
    let p = cfg.problem.p;
    let mut criteria_out = precheck(&prep, p);
    let (outcome, virial, monitor) = simulate(cfg, &prep)?;
    criteria_out.monitor = monitor;
    let series = outcome.series;
    let verdict = VerdictOutput {
        verdict: outcome.verdict,
        t_last: series.t_last().unwrap_or(0.0),
        rows: series.rows.len(),
        mass_drift: series.mass_drift(),
        energy_drift: series.energy_drift(),
        min_dt: series.min_dt,
        stalled: series.stalled,
        symmetric: series.symmetric,
        variance_c: series.variance_c,
    };

    let dir = resolve_output_dir(cfg, dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let csv_path = dir.join(OUTPUT_FILES[0]);
    fs::write(&csv_path, series.to_csv()).map_err(io_err(&csv_path))?;
    write_json(&dir, OUTPUT_FILES[1], &verdict)?;
    write_json(&dir, OUTPUT_FILES[2], &criteria_out)?;
    write_json(&dir, OUTPUT_FILES[3], &virial)?;
    log::info!("{}: {:?} at t = {:.4}, outputs in {}", cfg.name, verdict.verdict.status, verdict.t_last, dir.display());

    Ok(ExperimentResult { dir, grid: prep.grid, initial: prep.initial, series, verdict, criteria: criteria_out, virial })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub h: f64,
    pub dt: f64,
    pub t_last: f64,
    pub status: BlowupStatus,
    pub mass_drift: f64,
    pub energy_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityConvergence {
    pub name: String,
    pub coarse: f64,
    pub fine: f64,
    pub factor: f64,
    pub below_tol: bool,
    pub factor_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rel_tol: f64,
    pub min_factor: f64,
    pub levels: Vec<LevelSummary>,
    pub identities: Vec<IdentityConvergence>,
    pub passed: bool,
}

pub const CLOSURE_TOL: f64 = 1e-2;
pub const CLOSURE_FACTOR: f64 = 3.0;

/// Second-derivative closures at (h, dt) and (h/2, dt/2).
pub fn compare_levels(coarse: &VirialReport, fine: &VirialReport) -> Vec<IdentityConvergence> {
    coarse
        .records
        .iter()
        .filter(|r| r.name.starts_with("d2t_"))
        .filter_map(|c| {
            let f = fine.get(&c.name)?;
            let factor = if f.rel_residual > 0.0 { c.rel_residual / f.rel_residual } else { f64::INFINITY };
            Some(IdentityConvergence {
                name: c.name.clone(),
                coarse: c.rel_residual,
                fine: f.rel_residual,
                factor,
                below_tol: c.rel_residual < CLOSURE_TOL && f.rel_residual < CLOSURE_TOL,
                factor_ok: factor >= CLOSURE_FACTOR,
            })
        })
        .collect()
}

fn level(cfg: &ExperimentConfig, r: &ExperimentResult) -> LevelSummary {
    LevelSummary {
        h: cfg.grid.h,
        dt: cfg.time.dt,
        t_last: r.verdict.t_last,
        status: r.verdict.verdict.status,
        mass_drift: r.verdict.mass_drift,
        energy_drift: r.verdict.energy_drift,
    }
}

/// Runs the config and its refinement into `<dir>/coarse` and `<dir>/fine`
/// and writes `convergence.json`.
pub fn run_convergence(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<(ConvergenceReport, ExperimentResult, ExperimentResult), RunError> {
    let dir = resolve_output_dir(cfg, dir);
    let fine_cfg = cfg.refined();
    let a = run_experiment(cfg, Some(&dir.join("coarse")))?;
    let b = run_experiment(&fine_cfg, Some(&dir.join("fine")))?;
    let identities = compare_levels(&a.virial.closure, &b.virial.closure);
    let passed = !identities.is_empty() && identities.iter().all(|i| i.below_tol && i.factor_ok);
    let report = ConvergenceReport {
        rel_tol: CLOSURE_TOL,
        min_factor: CLOSURE_FACTOR,
        levels: vec![level(cfg, &a), level(&fine_cfg, &b)],
        identities,
        passed,
    };
    write_json(&dir, "convergence.json", &report)?;
    Ok((report, a, b))
}

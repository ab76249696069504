//! Hypothesis checks for the blow-up theorems, threshold margins and the
//! along-trajectory threshold monitor.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::DiagnosticsSeries;
use crate::field::{ComplexField, SymmetryClass};
use crate::ground_state::{critical_exponent, gn_constant, threshold_quantities, GroundStateProfile};
use crate::virial::upsilon2;

/// Grid-level antisymmetry required of symmetric data, relative to max |u|.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TheoremId {
    ThmBall,
    ThmConvex,
    ThmSym,
    ThmThreshold,
}

impl std::str::FromStr for TheoremId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "thm_ball" | "ball" => Ok(TheoremId::ThmBall),
            "thm_convex" | "convex" => Ok(TheoremId::ThmConvex),
            "thm_sym" | "sym" | "symmetric" => Ok(TheoremId::ThmSym),
            "thm_threshold" | "threshold" => Ok(TheoremId::ThmThreshold),
            other => Err(Error::InvalidInput(format!("unknown theorem id '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Satisfied,
    NotSatisfied,
    /// only the exponent floor fails, with p above the mass-critical value
    Conjectural,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub value: f64,
    pub relation: String,
    pub bound: f64,
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Hypothesis {
    fn new(name: &str, value: f64, relation: &str, bound: f64) -> Self {
        let satisfied = match relation {
            "<" => value < bound,
            "<=" => value <= bound,
            ">" => value > bound,
            ">=" => value >= bound,
            _ => false,
        };
        Self { name: name.into(), value, relation: relation.into(), bound, satisfied, note: None }
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub delta1: f64,
    pub delta2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub theorem: TheoremId,
    pub d: usize,
    pub p: f64,
    pub hypotheses: Vec<Hypothesis>,
    pub verdict: bool,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margins: Option<Margins>,
    /// data scaled by λ > λ* satisfy the energy hypothesis
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    pub notes: Vec<String>,
}

impl CriterionReport {
    fn assemble(theorem: TheoremId, d: usize, p: f64, hypotheses: Vec<Hypothesis>) -> Self {
        let verdict = hypotheses.iter().all(|h| h.satisfied);
        let only_exponent = hypotheses.iter().filter(|h| !h.satisfied).all(|h| h.name == "exponent_floor");
        let status = if verdict {
            Status::Satisfied
        } else if only_exponent && p > 1.0 + 4.0 / d as f64 {
            Status::Conjectural
        } else {
            Status::NotSatisfied
        };
        Self { theorem, d, p, hypotheses, verdict, status, margins: None, lambda_star: None, notes: vec![] }
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }
}

/// Conserved quantities of initial data, the only input the hypothesis checks need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub mass: f64,
    pub energy: f64,
    pub grad_sq: f64,
    pub lp1: f64,
    pub upsilon2: f64,
}

impl DataSummary {
    pub fn of(field: &ComplexField, p: f64) -> Self {
        let grad_sq = field.grad_sq();
        let lp1 = field.lp1_norm(p);
        Self {
            mass: field.mass(),
            energy: 0.5 * grad_sq - lp1 / (p + 1.0),
            grad_sq,
            lp1,
            upsilon2: upsilon2(field),
        }
    }
}

/// Smallest scaling factor beyond which E(λu) + c M(λu) < 0.
pub fn lambda_star(s: &DataSummary, p: f64, shift: f64) -> Option<f64> {
    let b = s.lp1 / (p + 1.0);
    if !(b > 0.0) {
        return None;
    }
    Some(((0.5 * s.grad_sq + shift * s.mass) / b).powf(1.0 / (p - 1.0)))
}

fn check_dim(d: usize) -> Result<()> {
    if !(2..=3).contains(&d) {
        return invalid(format!("blow-up criteria are checked in d = 2 or 3, got {d}"));
    }
    Ok(())
}

fn variance_hypothesis(s: &DataSummary) -> Hypothesis {
    Hypothesis::new("finite_variance", s.upsilon2, "<", f64::INFINITY)
        .with_note("automatic on the truncated grid")
}

pub fn ball_report(d: usize, p: f64, r: f64, s: &DataSummary) -> Result<CriterionReport> {
    check_dim(d)?;
    if !(r > 0.0) {
        return invalid(format!("ball radius must be positive, got {r}"));
    }
    let shift = if d == 2 { 1.0 / (8.0 * r * r) } else { 0.0 };
    let energy_name = if d == 2 { "shifted_energy" } else { "energy" };
    let hyps = vec![
        Hypothesis::new("exponent_floor", p, ">=", 5.0),
        Hypothesis::new(energy_name, s.energy + shift * s.mass, "<", 0.0),
        variance_hypothesis(s),
    ];
    let mut rep = CriterionReport::assemble(TheoremId::ThmBall, d, p, hyps);
    rep.lambda_star = lambda_star(s, p, shift);
    Ok(rep)
}

pub fn check_thm_ball(field0: &ComplexField, p: f64) -> Result<CriterionReport> {
    let ob = &field0.grid.obstacle;
    if !ob.is_ball() {
        return invalid("ball criterion needs a ball obstacle");
    }
    ball_report(field0.dim(), p, ob.big_m, &DataSummary::of(field0, p))
}

/// 1 + 4/(d − (M/m)(d−1)); infinite when the obstacle is too eccentric.
pub fn convex_exponent_floor(d: usize, ratio: f64) -> f64 {
    let den = d as f64 - ratio * (d as f64 - 1.0);
    if den > 0.0 {
        1.0 + 4.0 / den
    } else {
        f64::INFINITY
    }
}

pub fn convex_report(d: usize, p: f64, big_m: f64, small_m: f64, s: &DataSummary) -> Result<CriterionReport> {
    check_dim(d)?;
    if !(small_m > 0.0) || big_m < small_m {
        return invalid(format!("need 0 < m <= M, got m = {small_m}, M = {big_m}"));
    }
    let ratio = big_m / small_m;
    let df = d as f64;
    let shift = if d == 2 { big_m / (8.0 * small_m.powi(3)) } else { 0.0 };
    let energy_name = if d == 2 { "shifted_energy" } else { "energy" };
    let floor = convex_exponent_floor(d, ratio);
    let hyps = vec![
        Hypothesis::new("obstacle_ratio", ratio, "<", df / (df - 1.0)),
        Hypothesis::new("exponent_floor", p, ">=", floor),
        Hypothesis::new(energy_name, s.energy + shift * s.mass, "<", 0.0),
        variance_hypothesis(s),
    ];
    let mut rep = CriterionReport::assemble(TheoremId::ThmConvex, d, p, hyps);
    if !rep.hypotheses[0].satisfied {
        rep.notes.push("obstacle inadmissible: M/m is not below d/(d-1)".into());
        rep.status = Status::NotSatisfied;
    }
    rep.lambda_star = lambda_star(s, p, shift);
    Ok(rep)
}

pub fn check_thm_convex(field0: &ComplexField, p: f64) -> Result<CriterionReport> {
    let ob = &field0.grid.obstacle;
    convex_report(field0.dim(), p, ob.big_m, ob.small_m, &DataSummary::of(field0, p))
}

pub fn check_thm_sym(field0: &ComplexField, p: f64) -> Result<CriterionReport> {
    let d = field0.dim();
    check_dim(d)?;
    let grid = &field0.grid;
    if !(0..d).all(|j| grid.is_reflection_symmetric(j)) {
        return Err(Error::Precondition("obstacle grid is not invariant under the coordinate reflections".into()));
    }
    let defect = field0.antisymmetry_defect(&SymmetryClass::full(d))?;
    let s = DataSummary::of(field0, p);
    let hyps = vec![
        Hypothesis::new("exponent_floor", p, ">=", 1.0 + 4.0 / d as f64),
        Hypothesis::new("energy", s.energy, "<", 0.0),
        Hypothesis::new("antisymmetry_defect", defect, "<", ANTISYMMETRY_TOL),
        variance_hypothesis(&s),
    ];
    let mut rep = CriterionReport::assemble(TheoremId::ThmSym, d, p, hyps);
    rep.lambda_star = lambda_star(&s, p, 0.0);
    Ok(rep)
}

fn threshold_range(d: usize, p: f64) -> Result<f64> {
    let s_c = critical_exponent(d, p);
    let ok = match d {
        2 => p > 3.0,
        3 => s_c > 0.0 && s_c < 1.0,
        _ => false,
    };
    if !ok {
        return Err(Error::Precondition(format!(
            "threshold criterion needs d=2, p>3 or d=3, 7/3<p<5 (got d={d}, p={p}, s_c={s_c})"
        )));
    }
    Ok(s_c)
}

pub fn threshold_report(p: f64, s: &DataSummary, profile: &GroundStateProfile) -> Result<CriterionReport> {
    let d = profile.d;
    if (profile.p - p).abs() > 1e-12 {
        return invalid(format!("profile has p = {}, criterion asked for p = {p}", profile.p));
    }
    let s_c = threshold_range(d, p)?;
    let tq = threshold_quantities(profile)?;
    let sigma = (1.0 - s_c) / s_c;
    let me = s.mass.powf(sigma) * s.energy;
    let gn = s.mass.sqrt().powf(1.0 - s_c) * s.grad_sq.sqrt().powf(s_c);
    let hyps = vec![
        Hypothesis::new("mass_energy", me, "<", tq.me_q),
        Hypothesis::new("mass_gradient", gn, ">", tq.gn_q),
    ];
    let mut rep = CriterionReport::assemble(TheoremId::ThmThreshold, d, p, hyps);
    rep.notes.push(format!("s_c = {s_c}"));
    if rep.verdict {
        if let Some((delta1, delta2)) = delta_margins_of(s, profile)? {
            rep.margins = Some(Margins { delta1, delta2 });
        }
    }
    Ok(rep)
}

pub fn check_threshold(field0: &ComplexField, profile: &GroundStateProfile, p: f64) -> Result<CriterionReport> {
    if field0.dim() != profile.d {
        return invalid(format!("field has d = {}, profile d = {}", field0.dim(), profile.d));
    }
    threshold_report(p, &DataSummary::of(field0, p), profile)
}

/// f(x) = x²/2 − C_GN/(p+1) x^{d(p−1)/2}
pub fn threshold_function(x: f64, c_gn: f64, d: usize, p: f64) -> f64 {
    0.5 * x * x - c_gn / (p + 1.0) * x.powf(d as f64 * (p - 1.0) / 2.0)
}

/// The x₂ > x₁ with f(x₂) = level, by bracketing and bisection.
pub fn threshold_root(level: f64, x1: f64, c_gn: f64, d: usize, p: f64) -> Result<f64> {
    let f = |x: f64| threshold_function(x, c_gn, d, p) - level;
    if f(x1) < 0.0 {
        return Err(Error::Consistency(format!("level {level} lies above the maximum of f")));
    }
    let mut lo = x1;
    let mut hi = 2.0 * x1;
    let mut guard = 0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Solver("no bracket for the threshold root".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// δ₁ from the M^{1−s_c}E^{s_c} products and δ₂ from the level set of f.
/// Returns None when the threshold hypotheses are violated.
pub fn delta_margins_of(s: &DataSummary, profile: &GroundStateProfile) -> Result<Option<(f64, f64)>> {
    let d = profile.d;
    let p = profile.p;
    let s_c = threshold_range(d, p)?;
    let tq = threshold_quantities(profile)?;
    let sigma = (1.0 - s_c) / s_c;
    let me = s.mass.powf(sigma) * s.energy;
    let gn = s.mass.sqrt().powf(1.0 - s_c) * s.grad_sq.sqrt().powf(s_c);
    if !(me < tq.me_q && gn > tq.gn_q) {
        return Ok(None);
    }
    let delta1 = if s.energy <= 0.0 {
        1.0
    } else {
        let q = profile.mass.powf(1.0 - s_c) * profile.energy.powf(s_c);
        1.0 - s.mass.powf(1.0 - s_c) * s.energy.powf(s_c) / q
    };
    let delta2 = delta2_of(delta1, profile)?;
    Ok(Some((delta1, delta2)))
}

pub fn delta2_of(delta1: f64, profile: &GroundStateProfile) -> Result<f64> {
    let tq = threshold_quantities(profile)?;
    let c_gn = gn_constant(profile)?;
    let (d, p) = (profile.d, profile.p);
    let level = (1.0 - delta1) * threshold_function(tq.x1, c_gn, d, p);
    Ok(threshold_root(level, tq.x1, c_gn, d, p)? / tq.x1 - 1.0)
}

pub fn delta_margins(field0: &ComplexField, profile: &GroundStateProfile) -> Result<Option<(f64, f64)>> {
    delta_margins_of(&DataSummary::of(field0, profile.p), profile)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorResult {
    pub holds: bool,
    pub rows_checked: usize,
    pub first_failure_t: Option<f64>,
    /// min over rows of ‖u₀‖^{1−s_c}‖∇u(t)‖^{s_c} / Q-product
    pub min_ratio: f64,
    /// true for an empty series
    pub vacuous: bool,
}

/// ‖u₀‖^{1−s_c}‖∇u(t)‖^{s_c} > ‖Q‖^{1−s_c}‖∇Q‖^{s_c} at every row up to
/// `t_stop` (the blow-up detection time, if any).
pub fn monitor_threshold(series: &DiagnosticsSeries, profile: &GroundStateProfile, t_stop: Option<f64>) -> Result<MonitorResult> {
    let s_c = threshold_range(profile.d, profile.p)?;
    let tq = threshold_quantities(profile)?;
    let Some(first) = series.rows.first() else {
        return Ok(MonitorResult { holds: true, rows_checked: 0, first_failure_t: None, min_ratio: f64::INFINITY, vacuous: true });
    };
    let m0 = first.mass.sqrt().powf(1.0 - s_c);
    let mut res = MonitorResult { holds: true, rows_checked: 0, first_failure_t: None, min_ratio: f64::INFINITY, vacuous: false };
    for r in &series.rows {
        if t_stop.is_some_and(|ts| r.t > ts) {
            break;
        }
        let ratio = m0 * r.grad_sq.sqrt().powf(s_c) / tq.gn_q;
        res.rows_checked += 1;
        res.min_ratio = res.min_ratio.min(ratio);
        if !(ratio > 1.0) && res.holds {
            res.holds = false;
            res.first_failure_t = Some(r.t);
        }
    }
    Ok(res)
}

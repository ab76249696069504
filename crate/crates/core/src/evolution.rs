//! Crank–Nicolson time stepping with a conservative nonlinearity, diagnostics
//! recording and numerical blow-up detection.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{ComplexField, SymmetryClass};
use crate::geometry::ExteriorGrid;
use crate::linalg::{cocg, norm_sq};
use crate::virial::{variance_weight_substituted, Terms, SYMMETRY_TOL};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-13;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_FIXED_POINT: usize = 50;
pub const DEFAULT_CONTAMINATION: f64 = 1e-6;

/// Discrete-gradient quotient [F(b) − F(a)]/(b − a) with F(ρ) = 2/(p+1) ρ^{(p+1)/2},
/// the averaged value of |u|^{p−1} between the two time levels.
pub fn nonlinear_quotient(p: f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (p + 1.0);
    if (m - m.round()).abs() < 1e-12 && m.round() >= 1.0 {
        // exact: (2/(p+1)) Σ_{k<m} a^k b^{m−1−k}
        let m = m.round() as i32;
        let mut s = 0.0;
        for k in 0..m {
            s += a.powi(k) * b.powi(m - 1 - k);
        }
        return s / m as f64;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo <= 1e-8 * hi {
        return (0.5 * (a + b)).powf(m - 1.0);
    }
    (hi.powf(m) - lo.powf(m)) / (m * (hi - lo))
}

/// One implicit step solves (I − i dt/2 (L + G)) u⁺ = (I + i dt/2 (L + G)) u with
/// G = diag(g(|u|², |u⁺|²)), iterating on G.
#[derive(Clone, Debug)]
pub struct Stepper {
    grid: Arc<ExteriorGrid>,
    pub p: f64,
    pub nonlinear: bool,
    pub solver_tol: f64,
    pub fixed_point_tol: f64,
    pub max_fixed_point: usize,
    pub max_linear_iter: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub fixed_point_iterations: usize,
    pub linear_iterations: usize,
    pub update: f64,
}

impl Stepper {
    pub fn new(grid: Arc<ExteriorGrid>, p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return invalid(format!("exponent must exceed 1, got {p}"));
        }
        Ok(Self {
            grid,
            p,
            nonlinear: true,
            solver_tol: DEFAULT_SOLVER_TOL,
            fixed_point_tol: DEFAULT_FIXED_POINT_TOL,
            max_fixed_point: DEFAULT_MAX_FIXED_POINT,
            max_linear_iter: 5000,
        })
    }

    pub fn linear(grid: Arc<ExteriorGrid>) -> Self {
        let mut s = Self::new(grid, 3.0).expect("p = 3 is valid");
        s.nonlinear = false;
        s
    }

    pub fn grid(&self) -> &Arc<ExteriorGrid> {
        &self.grid
    }

    pub fn step(&self, field: &ComplexField, dt: f64) -> Result<ComplexField> {
        if !Arc::ptr_eq(&field.grid, &self.grid) && field.grid.len() != self.grid.len() {
            return invalid("field lives on a different grid");
        }
        let (values, _) = self.step_values(&field.values, dt, None)?;
        Ok(ComplexField { grid: field.grid.clone(), values, time: field.time + dt })
    }

    /// Step with a source term: i u_t + Δu + |u|^{p−1}u = f, where `source` holds
    /// f at the half step.
    pub fn step_with_source(&self, field: &ComplexField, dt: f64, source: &[Complex64]) -> Result<ComplexField> {
        if source.len() != field.values.len() {
            return invalid("source length does not match the field");
        }
        let (values, _) = self.step_values(&field.values, dt, Some(source))?;
        Ok(ComplexField { grid: field.grid.clone(), values, time: field.time + dt })
    }

    pub fn step_values(
        &self,
        u: &[Complex64],
        dt: f64,
        source: Option<&[Complex64]>,
    ) -> Result<(Vec<Complex64>, StepStats)> {
        if !(dt > 0.0) || !dt.is_finite() {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        let n = u.len();
        let g = &self.grid;
        let a = Complex64::new(0.0, 0.5 * dt);
        let ih2 = 1.0 / (g.h * g.h);
        let lu = g.laplacian(u);
        let rho0: Vec<f64> = u.iter().map(|z| z.norm_sqr()).collect();
        let mut w = u.to_vec();
        let mut gv = vec![0.0; n];
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        let mut diag = vec![Complex64::new(0.0, 0.0); n];
        let mut stats = StepStats::default();
        let ldiag = g.laplacian_diag();

        for it in 1..=self.max_fixed_point {
            if self.nonlinear {
                gv.par_iter_mut()
                    .zip(rho0.par_iter().zip(w.par_iter()))
                    .for_each(|(gk, (r0, wk))| *gk = nonlinear_quotient(self.p, *r0, wk.norm_sqr()));
            }
            rhs.par_iter_mut().enumerate().for_each(|(k, r)| {
                *r = u[k] + a * (lu[k] + gv[k] * u[k]);
                if let Some(s) = source {
                    *r -= Complex64::new(0.0, dt) * s[k];
                }
            });
            diag.par_iter_mut()
                .enumerate()
                .for_each(|(k, dk)| *dk = Complex64::new(1.0, 0.0) - a * (ldiag[k] * ih2 + gv[k]));
            let apply = |x: &[Complex64], out: &mut [Complex64]| {
                g.apply_laplacian(x, out);
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(k, o)| *o = x[k] - a * (*o + gv[k] * x[k]));
            };
            let mut x = w.clone();
            let st = cocg(apply, &diag, &rhs, &mut x, self.solver_tol, self.max_linear_iter).map_err(|s| {
                Error::Solver(format!(
                    "linear solve stalled after {} iterations (residual {:.2e})",
                    s.iterations, s.rel_residual
                ))
            })?;
            stats.linear_iterations += st.iterations;
            stats.fixed_point_iterations = it;
            let diff = norm_sq(&x.iter().zip(&w).map(|(p, q)| p - q).collect::<Vec<_>>()).sqrt();
            let scale = norm_sq(&x).sqrt();
            stats.update = if scale > 0.0 { diff / scale } else { 0.0 };
            w = x;
            if !stats.update.is_finite() {
                return Err(Error::Solver("non-finite iterate".into()));
            }
            if !self.nonlinear || stats.update < self.fixed_point_tol {
                return Ok((w, stats));
            }
        }
        Err(Error::Solver(format!(
            "fixed point did not converge in {} iterations (update {:.2e})",
            self.max_fixed_point, stats.update
        )))
    }

    /// Advance by `dt`, halving recursively on failure; fails once the step
    /// would drop below `dt_min`.
    fn advance(&self, u: &[Complex64], dt: f64, dt_min: f64, min_used: &mut f64) -> Result<Vec<Complex64>> {
        match self.step_values(u, dt, None) {
            Ok((v, _)) => {
                *min_used = min_used.min(dt);
                Ok(v)
            }
            Err(e) => {
                let half = 0.5 * dt;
                if half < dt_min {
                    return Err(Error::Solver(format!("step collapsed below dt_min = {dt_min:e}: {e}")));
                }
                log::debug!("halving step to {half:e}: {e}");
                let mid = self.advance(u, half, dt_min, min_used)?;
                self.advance(&mid, half, dt_min, min_used)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub p: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub dt_min: f64,
    pub grad_factor: f64,
    pub contamination_fraction: f64,
    /// constant of the symmetric variance (None: recommended value of the grid)
    pub variance_c: Option<f64>,
    pub nonlinear: bool,
}

impl RunParams {
    pub fn new(p: f64, dt: f64, t_end: f64) -> Self {
        Self {
            p,
            dt,
            t_end,
            record_every: 1,
            dt_min: dt / 1024.0,
            grad_factor: 10.0,
            contamination_fraction: DEFAULT_CONTAMINATION,
            variance_c: None,
            nonlinear: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return invalid(format!("dt and t_end must be positive (dt = {}, t_end = {})", self.dt, self.t_end));
        }
        if self.record_every == 0 {
            return invalid("record_every must be at least 1");
        }
        if !(self.dt_min > 0.0) || self.dt_min > self.dt {
            return invalid(format!("need 0 < dt_min <= dt, got dt_min = {}", self.dt_min));
        }
        if !(self.grad_factor > 1.0) {
            return invalid(format!("grad_factor must exceed 1, got {}", self.grad_factor));
        }
        if !(self.contamination_fraction > 0.0) {
            return invalid("contamination fraction must be positive");
        }
        if let Some(c) = self.variance_c {
            if !(c > 0.0) {
                return invalid(format!("variance constant must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_sq: f64,
    pub lp1_norm: f64,
    pub upsilon1: f64,
    pub upsilon2: f64,
    pub gamma: Vec<f64>,
    pub variance_ball: f64,
    pub variance_sym: f64,
    /// dΥ₂/dt = 4 Im∫ū x·∇u
    pub momentum_x: f64,
    pub rhs_upsilon2: f64,
    pub rhs_upsilon1: f64,
    pub rhs_gamma: Vec<f64>,
    /// ∮|∇u|²(x·n)
    pub boundary_int_weighted: f64,
    pub annulus_mass: f64,
    pub dt_upsilon1: f64,
    pub rhs_variance_ball: f64,
    pub rhs_variance_sym: f64,
    pub bracket_ball: f64,
    pub bracket_sym: f64,
    pub min_dt: f64,
    pub on_schedule: bool,
}

impl DiagnosticsRow {
    pub fn from_terms(t: f64, terms: &Terms, center: f64, c: f64) -> Self {
        let d = terms.dim;
        Self {
            t,
            mass: terms.mass,
            energy: terms.energy,
            grad_sq: terms.grad_sq,
            lp1_norm: terms.lp1,
            upsilon1: terms.upsilon1,
            upsilon2: terms.upsilon2,
            gamma: terms.gamma.clone(),
            variance_ball: terms.variance(center),
            variance_sym: terms.variance_sym(c),
            momentum_x: terms.dt_upsilon2,
            rhs_upsilon2: terms.rhs_upsilon2(),
            rhs_upsilon1: terms.rhs_upsilon1(),
            rhs_gamma: (0..d).map(|j| terms.rhs_gamma(j)).collect(),
            boundary_int_weighted: terms.bnd_xn,
            annulus_mass: terms.annulus_mass,
            dt_upsilon1: terms.dt_upsilon1,
            rhs_variance_ball: terms.rhs_variance(center),
            rhs_variance_sym: terms.rhs_variance_sym(c),
            bracket_ball: terms.variance_bracket(center),
            bracket_sym: terms.sym_bracket(c),
            min_dt: 0.0,
            on_schedule: true,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            self.mass,
            self.energy,
            self.grad_sq,
            self.lp1_norm,
            self.upsilon1,
            self.upsilon2,
        ];
        v.extend(&self.gamma);
        v.extend([self.variance_ball, self.variance_sym, self.momentum_x, self.rhs_upsilon2, self.rhs_upsilon1]);
        v.extend(&self.rhs_gamma);
        v.extend([
            self.boundary_int_weighted,
            self.annulus_mass,
            self.dt_upsilon1,
            self.rhs_variance_ball,
            self.rhs_variance_sym,
            self.bracket_ball,
            self.bracket_sym,
            self.min_dt,
        ]);
        v
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub dim: usize,
    pub p: f64,
    pub rows: Vec<DiagnosticsRow>,
    /// initial data antisymmetric in every axis
    pub symmetric: bool,
    /// step size collapsed below dt_min
    pub stalled: bool,
    pub min_dt: f64,
    pub variance_center: f64,
    pub variance_c: f64,
    pub weight_substituted: bool,
}

impl DiagnosticsSeries {
    pub fn csv_header(dim: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "mass", "energy", "grad_sq", "lp1_norm", "upsilon1", "upsilon2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=dim).map(|j| format!("gamma_{j}")));
        for s in ["variance_ball", "variance_sym", "momentum_x", "rhs_upsilon2", "rhs_upsilon1"] {
            h.push(s.into());
        }
        h.extend((1..=dim).map(|j| format!("rhs_gamma_{j}")));
        for s in [
            "boundary_int_weighted",
            "annulus_mass",
            "dt_upsilon1",
            "rhs_variance_ball",
            "rhs_variance_sym",
            "bracket_ball",
            "bracket_sym",
            "min_dt",
            "on_schedule",
        ] {
            h.push(s.into());
        }
        h
    }

    /// CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.dim).join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.values().iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{},{}", cells.join(","), u8::from(r.on_schedule));
        }
        out
    }

    pub fn t_last(&self) -> Option<f64> {
        self.rows.last().map(|r| r.t)
    }

    /// max |M(t) − M(0)|/M(0)
    pub fn mass_drift(&self) -> f64 {
        let Some(r0) = self.rows.first() else { return 0.0 };
        self.rows.iter().map(|r| (r.mass - r0.mass).abs()).fold(0.0, f64::max) / r0.mass.max(f64::MIN_POSITIVE)
    }

    /// max |E(t) − E(0)|/(|E(0)| + 1)
    pub fn energy_drift(&self) -> f64 {
        let Some(r0) = self.rows.first() else { return 0.0 };
        self.rows.iter().map(|r| (r.energy - r0.energy).abs()).fold(0.0, f64::max) / (r0.energy.abs() + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlowupStatus {
    Completed,
    BlowupDetected,
    TruncationContaminated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupVerdict {
    pub status: BlowupStatus,
    pub t_detect: Option<f64>,
    /// ‖∇u(t)‖/‖∇u(0)‖ at detection (at the last row otherwise)
    pub growth_factor: f64,
    pub reason: String,
}

fn growth(row: &DiagnosticsRow, g0: f64) -> f64 {
    if g0 > 0.0 {
        (row.grad_sq / g0).sqrt()
    } else {
        1.0
    }
}

/// Contamination takes precedence over growth at the same row.
pub fn detect_blowup_with(series: &DiagnosticsSeries, grad_factor: f64, dt_min: f64, contamination: f64) -> BlowupVerdict {
    let Some(first) = series.rows.first() else {
        return BlowupVerdict {
            status: BlowupStatus::Completed,
            t_detect: None,
            growth_factor: 1.0,
            reason: "empty series".into(),
        };
    };
    let g0 = first.grad_sq;
    for r in &series.rows {
        if r.annulus_mass > contamination * r.mass {
            return BlowupVerdict {
                status: BlowupStatus::TruncationContaminated,
                t_detect: Some(r.t),
                growth_factor: growth(r, g0),
                reason: format!("annulus mass fraction {:.3e} exceeds {contamination:e}", r.annulus_mass / r.mass),
            };
        }
        if !r.is_finite() || r.grad_sq >= grad_factor * grad_factor * g0 {
            return BlowupVerdict {
                status: BlowupStatus::BlowupDetected,
                t_detect: Some(r.t),
                growth_factor: growth(r, g0),
                reason: format!("gradient norm grew by {:.3} (threshold {grad_factor})", growth(r, g0)),
            };
        }
    }
    let last = series.rows.last().unwrap_or(first);
    if series.stalled || (series.min_dt > 0.0 && series.min_dt < dt_min) {
        return BlowupVerdict {
            status: BlowupStatus::BlowupDetected,
            t_detect: Some(last.t),
            growth_factor: growth(last, g0),
            reason: format!("nonlinear solves failed with the step below dt_min = {dt_min:e}"),
        };
    }
    BlowupVerdict {
        status: BlowupStatus::Completed,
        t_detect: None,
        growth_factor: growth(last, g0),
        reason: "reached t_end".into(),
    }
}

pub fn detect_blowup(series: &DiagnosticsSeries, grad_factor: f64, dt_min: f64) -> BlowupVerdict {
    detect_blowup_with(series, grad_factor, dt_min, DEFAULT_CONTAMINATION)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub series: DiagnosticsSeries,
    pub verdict: BlowupVerdict,
    pub final_field: ComplexField,
}

/// Integrate to `t_end`, recording every `record_every` steps and stopping at
/// blow-up detection or truncation contamination.
pub fn run(field0: &ComplexField, params: &RunParams) -> Result<RunOutcome> {
    params.validate()?;
    if !field0.is_finite() {
        return invalid("initial field has non-finite values");
    }
    let grid = field0.grid.clone();
    let mut stepper = Stepper::new(grid.clone(), params.p)?;
    stepper.nonlinear = params.nonlinear;
    let p = params.p;
    let center = grid.obstacle.big_m;
    let c = params.variance_c.unwrap_or_else(|| grid.recommended_c());
    let full = SymmetryClass::full(grid.dim);
    let symmetric = field0.antisymmetry_defect(&full).map(|d| d < SYMMETRY_TOL).unwrap_or(false);

    let mut series = DiagnosticsSeries {
        dim: grid.dim,
        p,
        rows: vec![],
        symmetric,
        stalled: false,
        min_dt: params.dt,
        variance_center: center,
        variance_c: c,
        weight_substituted: variance_weight_substituted(center),
    };
    let probe = |series: &DiagnosticsSeries| detect_blowup_with(series, params.grad_factor, params.dt_min, params.contamination_fraction);

    let n_steps = ((params.t_end / params.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut u = field0.values.clone();
    let mut min_since = params.dt;
    let record = |series: &mut DiagnosticsSeries, u: &[Complex64], t: f64, on_schedule: bool, min_dt: f64| {
        let f = ComplexField { grid: grid.clone(), values: u.to_vec(), time: t };
        let mut row = DiagnosticsRow::from_terms(t, &Terms::compute(&f, p), center, c);
        row.on_schedule = on_schedule;
        row.min_dt = min_dt;
        series.rows.push(row);
    };
    record(&mut series, &u, field0.time, true, params.dt);

    let mut t = field0.time;
    let mut last_recorded = 0usize;
    for step in 1..=n_steps {
        let dt = if step == n_steps { params.t_end - (n_steps - 1) as f64 * params.dt } else { params.dt };
        let mut used = dt;
        match stepper.advance(&u, dt, params.dt_min, &mut used) {
            Ok(v) => u = v,
            Err(e) => {
                log::info!("run stopped at t = {t:.6}: {e}");
                series.stalled = true;
                series.min_dt = series.min_dt.min(used);
                if last_recorded != step - 1 {
                    record(&mut series, &u, t, false, min_since);
                }
                break;
            }
        }
        min_since = min_since.min(used);
        series.min_dt = series.min_dt.min(used);
        t = field0.time + step as f64 * params.dt;
        if step == n_steps {
            t = field0.time + params.t_end;
        }
        let on_schedule = step % params.record_every == 0 && (dt - params.dt).abs() <= 1e-12 * params.dt;
        if on_schedule || step == n_steps {
            record(&mut series, &u, t, on_schedule, min_since);
            last_recorded = step;
            min_since = params.dt;
            let v = probe(&series);
            if v.status != BlowupStatus::Completed {
                break;
            }
            log::debug!("t = {t:.5} grad_sq = {:.6e}", series.rows.last().map(|r| r.grad_sq).unwrap_or(0.0));
        }
    }
    let verdict = probe(&series);
    Ok(RunOutcome {
        series,
        verdict,
        final_field: ComplexField { grid, values: u, time: t },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_matches_derivative_limit() {
        for &p in &[3.0, 5.0, 4.0, 2.5] {
            let a: f64 = 0.7;
            let exact = a.powf(0.5 * (p - 1.0));
            assert!((nonlinear_quotient(p, a, a) - exact).abs() < 1e-12, "p = {p}");
            let b: f64 = 1.3;
            let m = 0.5 * (p + 1.0);
            let q = (b.powf(m) - a.powf(m)) / (m * (b - a));
            assert!((nonlinear_quotient(p, a, b) - q).abs() < 1e-12, "p = {p}");
        }
    }

    fn row(t: f64, g: f64, ann: f64) -> DiagnosticsRow {
        DiagnosticsRow { t, mass: 1.0, grad_sq: g, annulus_mass: ann, gamma: vec![0.0; 2], rhs_gamma: vec![0.0; 2], ..Default::default() }
    }

    #[test]
    fn verdict_rules() {
        let mut s = DiagnosticsSeries { dim: 2, rows: vec![row(0.0, 1.0, 0.0), row(0.1, 1.1, 0.0)], ..Default::default() };
        assert_eq!(detect_blowup(&s, 10.0, 1e-6).status, BlowupStatus::Completed);
        s.rows.push(row(0.2, 200.0, 0.0));
        let v = detect_blowup(&s, 10.0, 1e-6);
        assert_eq!(v.status, BlowupStatus::BlowupDetected);
        assert!((v.growth_factor - 200f64.sqrt()).abs() < 1e-12);
        s.rows[1].annulus_mass = 1e-3;
        assert_eq!(detect_blowup(&s, 10.0, 1e-6).status, BlowupStatus::TruncationContaminated);
    }
}

//! Variance functionals, their time-derivative identities and Pohozaev residuals.
//!
//! Every second-derivative right-hand side is the actual d²/dt² of the functional
//! (no 1/16 normalization).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::DiagnosticsSeries;
use crate::field::{ComplexField, SymmetryClass};
use crate::geometry::{dot, norm, ExteriorGrid, ObstacleSpec};

/// Node-wide accumulator width: every integral gathered in one pass.
const NODE_TERMS: usize = 16;

/// Antisymmetry tolerance for the symmetric-sector identities.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// All integrals entering the identities, evaluated once per field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    pub dim: usize,
    pub p: f64,
    pub mass: f64,
    pub grad_sq: f64,
    pub lp1: f64,
    pub energy: f64,
    pub upsilon1: f64,
    pub upsilon2: f64,
    pub dt_upsilon1: f64,
    pub dt_upsilon2: f64,
    /// ∫|u|²/|x|³
    pub mass_inv_r3: f64,
    /// ∫|∇̸u|²/|x|
    pub angular_over_r: f64,
    /// ∫|u|^{p+1}/|x|
    pub lp1_over_r: f64,
    pub gamma: Vec<f64>,
    pub dt_gamma: Vec<f64>,
    /// ∮|∇u|²(x·n)
    pub bnd_xn: f64,
    /// ∮|∇u|²(x·n)/|x|
    pub bnd_xn_over_r: f64,
    /// ∮|∇u|²|n_j|
    pub bnd_nj: Vec<f64>,
    /// ∫_{x_j=0}|∂_j u|²
    pub plane: Vec<f64>,
    pub annulus_mass: f64,
}

impl Terms {
    pub fn compute(field: &ComplexField, p: f64) -> Self {
        let g = &field.grid;
        let d = g.dim;
        let u = &field.values;
        let hd = g.cell_volume();
        let lu = g.laplacian(u);

        let chunks: Vec<[f64; NODE_TERMS]> = (0..u.len())
            .into_par_iter()
            .chunks(4096)
            .map(|ks| {
                let mut a = [0.0; NODE_TERMS];
                for k in ks {
                    let x = g.coord(k);
                    let r = norm(x);
                    let uk = u[k];
                    let rho = uk.norm_sqr();
                    let grad = g.gradient_at(u, k);
                    let mut gsq = 0.0;
                    let mut radial = Complex64::new(0.0, 0.0);
                    for j in 0..d {
                        gsq += grad[j].norm_sqr();
                        radial += grad[j] * (x[j] / r);
                    }
                    let xg = radial * r;
                    let lp = rho.powf(0.5 * (p + 1.0));
                    a[0] += rho;
                    a[1] -= (uk.conj() * lu[k]).re;
                    a[2] += lp;
                    a[3] += r * rho;
                    a[4] += r * r * rho;
                    a[5] += (uk.conj() * radial).im;
                    a[6] += (uk.conj() * xg).im;
                    a[7] += rho / (r * r * r);
                    a[8] += (gsq - radial.norm_sqr()).max(0.0) / r;
                    a[9] += lp / r;
                    for j in 0..d {
                        a[10 + j] += x[j].abs() * rho;
                        let sgn = if x[j] == 0.0 { 0.0 } else { x[j].signum() };
                        a[13 + j] += sgn * (uk.conj() * grad[j]).im;
                    }
                }
                a
            })
            .collect();
        let mut s = [0.0; NODE_TERMS];
        for c in &chunks {
            for i in 0..NODE_TERMS {
                s[i] += c[i];
            }
        }

        let dn = g.normal_derivatives(u);
        let mut bnd_xn = 0.0;
        let mut bnd_xn_over_r = 0.0;
        let mut bnd_nj = vec![0.0; d];
        for (f, z) in g.faces.iter().zip(&dn) {
            let w = z.norm_sqr() * f.weight;
            bnd_xn += w * f.x_dot_n();
            bnd_xn_over_r += w * f.x_dot_n() / f.radius();
            for j in 0..d {
                bnd_nj[j] += w * f.normal[j].abs();
            }
        }
        let hs = g.h.powi(d as i32 - 1);
        let plane = (0..d)
            .map(|j| hs * g.plane_nodes(j).iter().map(|&k| (u[k as usize] / g.h).norm_sqr()).sum::<f64>())
            .collect();
        let annulus_mass = hd * g.annulus_nodes().iter().map(|&k| u[k as usize].norm_sqr()).sum::<f64>();

        let grad_sq = hd * s[1];
        let lp1 = hd * s[2];
        Terms {
            dim: d,
            p,
            mass: hd * s[0],
            grad_sq,
            lp1,
            energy: 0.5 * grad_sq - lp1 / (p + 1.0),
            upsilon1: hd * s[3],
            upsilon2: hd * s[4],
            dt_upsilon1: 2.0 * hd * s[5],
            dt_upsilon2: 4.0 * hd * s[6],
            mass_inv_r3: hd * s[7],
            angular_over_r: hd * s[8],
            lp1_over_r: hd * s[9],
            gamma: (0..d).map(|j| hd * s[10 + j]).collect(),
            dt_gamma: (0..d).map(|j| 2.0 * hd * s[13 + j]).collect(),
            bnd_xn,
            bnd_xn_over_r,
            bnd_nj,
            plane,
            annulus_mass,
        }
    }

    fn df(&self) -> f64 {
        self.dim as f64
    }

    /// d/2 − (d+2)/(p+1)
    pub fn nonlinear_coefficient(&self) -> f64 {
        self.df() / 2.0 - (self.df() + 2.0) / (self.p + 1.0)
    }

    pub fn rhs_upsilon2(&self) -> f64 {
        16.0 * self.energy - 8.0 * self.nonlinear_coefficient() * self.lp1 - 4.0 * self.bnd_xn
    }

    pub fn rhs_upsilon1(&self) -> f64 {
        let d = self.df();
        let p = self.p;
        (d - 1.0) * (d - 3.0) * self.mass_inv_r3 + 4.0 * self.angular_over_r
            - 2.0 * (d - 1.0) * (p - 1.0) / (p + 1.0) * self.lp1_over_r
            - 2.0 * self.bnd_xn_over_r
    }

    pub fn rhs_gamma(&self, j: usize) -> f64 {
        2.0 * self.bnd_nj[j] + 4.0 * self.plane[j]
    }

    /// Variance centred on the sphere of radius `a` (a = R for a ball, a = M in general).
    pub fn variance(&self, a: f64) -> f64 {
        self.upsilon2 - 2.0 * a * self.upsilon1 + variance_shift(a) * self.mass
    }

    /// Boundary part 4∮|∇u|²(x·n)(a/|x| − 1).
    pub fn variance_bracket(&self, a: f64) -> f64 {
        4.0 * (a * self.bnd_xn_over_r - self.bnd_xn)
    }

    pub fn rhs_variance(&self, a: f64) -> f64 {
        self.rhs_upsilon2() - 2.0 * a * self.rhs_upsilon1()
    }

    pub fn variance_sym(&self, c: f64) -> f64 {
        self.upsilon2 - c * self.gamma.iter().sum::<f64>() + c * c * self.mass
    }

    pub fn rhs_variance_sym(&self, c: f64) -> f64 {
        let gsum: f64 = (0..self.dim).map(|j| self.rhs_gamma(j)).sum();
        self.rhs_upsilon2() - c * gsum
    }

    /// Boundary bracket of the symmetric variance: 4∮|∇u|²|x·n| − C Σ_j d²Γ_j.
    pub fn sym_bracket(&self, c: f64) -> f64 {
        let gsum: f64 = (0..self.dim).map(|j| self.rhs_gamma(j)).sum();
        -4.0 * self.bnd_xn - c * gsum
    }
}

/// Constant term of the variance weight |x|² − 2a|x| + K: K = 10 while a ≤ √10,
/// otherwise a² + 1 so the weight stays positive.
pub fn variance_shift(a: f64) -> f64 {
    if variance_weight_substituted(a) {
        a * a + 1.0
    } else {
        10.0
    }
}

pub fn variance_weight_substituted(a: f64) -> bool {
    a > 10f64.sqrt()
}

fn require_ball(ob: &ObstacleSpec) -> Result<f64> {
    if !ob.is_ball() {
        return invalid("this variance is defined for a ball obstacle");
    }
    Ok(ob.big_m)
}

fn require_symmetric(field: &ComplexField) -> Result<()> {
    let full = SymmetryClass::full(field.dim());
    let defect = field.antisymmetry_defect(&full)?;
    if defect > SYMMETRY_TOL {
        return Err(Error::Precondition(format!(
            "field is not antisymmetric in every axis (defect {defect:.3e})"
        )));
    }
    Ok(())
}

pub fn upsilon1(field: &ComplexField) -> f64 {
    field.weighted_mass(norm)
}

pub fn upsilon2(field: &ComplexField) -> f64 {
    field.weighted_mass(|x| dot(x, x))
}

pub fn dt_upsilon2(field: &ComplexField) -> f64 {
    Terms::compute(field, 3.0).dt_upsilon2
}

/// 2·Im∫ū x̂·∇u
pub fn dt_upsilon1(field: &ComplexField) -> f64 {
    Terms::compute(field, 3.0).dt_upsilon1
}

pub fn d2t_upsilon2_rhs(field: &ComplexField, p: f64) -> f64 {
    Terms::compute(field, p).rhs_upsilon2()
}

pub fn d2t_upsilon1_rhs(field: &ComplexField, p: f64) -> f64 {
    Terms::compute(field, p).rhs_upsilon1()
}

pub fn variance_ball(field: &ComplexField) -> Result<f64> {
    let r = require_ball(&field.grid.obstacle)?;
    Ok(Terms::compute(field, 3.0).variance(r))
}

pub fn d2t_variance_ball_rhs(field: &ComplexField, p: f64) -> Result<f64> {
    let r = require_ball(&field.grid.obstacle)?;
    Ok(Terms::compute(field, p).rhs_variance(r))
}

pub fn variance_convex(field: &ComplexField) -> f64 {
    Terms::compute(field, 3.0).variance(field.grid.obstacle.big_m)
}

pub fn d2t_variance_convex_rhs(field: &ComplexField, p: f64) -> f64 {
    Terms::compute(field, p).rhs_variance(field.grid.obstacle.big_m)
}

fn check_axis(field: &ComplexField, j: usize) -> Result<()> {
    if j >= field.dim() {
        return invalid(format!("axis {j} out of range for d = {}", field.dim()));
    }
    Ok(())
}

/// Γ_j = ∫|x_j||u|²
pub fn gamma(field: &ComplexField, j: usize) -> Result<f64> {
    check_axis(field, j)?;
    Ok(field.weighted_mass(|x| x[j].abs()))
}

pub fn dt_gamma(field: &ComplexField, j: usize) -> Result<f64> {
    check_axis(field, j)?;
    require_symmetric(field)?;
    Ok(Terms::compute(field, 3.0).dt_gamma[j])
}

/// 2∮|∇u|²|n_j| + 4∫_{x_j=0}|∂_j u|²
pub fn d2t_gamma_rhs(field: &ComplexField, j: usize) -> Result<f64> {
    check_axis(field, j)?;
    require_symmetric(field)?;
    Ok(Terms::compute(field, 3.0).rhs_gamma(j))
}

pub fn variance_sym(field: &ComplexField, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return invalid(format!("variance constant must be positive, got {c}"));
    }
    Ok(Terms::compute(field, 3.0).variance_sym(c))
}

pub fn d2t_variance_sym_rhs(field: &ComplexField, p: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return invalid(format!("variance constant must be positive, got {c}"));
    }
    require_symmetric(field)?;
    Ok(Terms::compute(field, p).rhs_variance_sym(c))
}

pub fn recommended_c(grid: &ExteriorGrid) -> f64 {
    grid.recommended_c()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevResiduals {
    pub lhs1: f64,
    pub rhs1: f64,
    pub lhs2: f64,
    pub rhs2: f64,
}

impl PohozaevResiduals {
    pub fn r1(&self) -> f64 {
        (self.lhs1 - self.rhs1).abs()
    }
    pub fn r2(&self) -> f64 {
        (self.lhs2 - self.rhs2).abs()
    }
}

/// Both sides of the two dilation identities for a field vanishing on the boundary.
pub fn pohozaev(field: &ComplexField) -> PohozaevResiduals {
    let g = &field.grid;
    let d = g.dim;
    let df = d as f64;
    let u = &field.values;
    let hd = g.cell_volume();
    if let Some(&k) = g.annulus_nodes().iter().find(|&&k| u[k as usize].norm() > 1e-8) {
        log::warn!("field reaches the truncation shell (|u| = {:.2e}); identities assume decay", u[k as usize].norm());
    }

    let chunks: Vec<[f64; 6]> = (0..u.len())
        .into_par_iter()
        .chunks(4096)
        .map(|ks| {
            let mut a = [0.0; 6];
            for k in ks {
                let x = g.coord(k);
                let r = norm(x);
                let (grad, lap) = g
                    .wide_stencil_at(u, k)
                    .unwrap_or_else(|| (g.gradient_at(u, k), g.sw_laplacian_at(u, k)));
                let mut gsq = 0.0;
                let mut radial = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    gsq += grad[j].norm_sqr();
                    radial += grad[j] * (x[j] / r);
                }
                let lc = lap.conj();
                a[0] += (lc * (u[k] * (df / 2.0) + radial * r)).re;
                a[1] += gsq;
                a[2] += (lc * (radial + u[k] * ((df - 1.0) / (2.0 * r)))).re;
                a[3] += u[k].norm_sqr() / (r * r * r);
                a[4] += (gsq - radial.norm_sqr()).max(0.0) / r;
            }
            a
        })
        .collect();
    let mut s = [0.0; 6];
    for c in &chunks {
        for i in 0..6 {
            s[i] += c[i];
        }
    }
    let dn = g.normal_derivatives(u);
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for (f, z) in g.faces.iter().zip(&dn) {
        let w = z.norm_sqr() * f.weight * f.x_dot_n();
        b1 += w;
        b2 += w / f.radius();
    }
    PohozaevResiduals {
        lhs1: hd * s[0],
        rhs1: -hd * s[1] + 0.5 * b1,
        lhs2: hd * s[2],
        rhs2: -(df - 1.0) * (df - 3.0) / 4.0 * hd * s[3] - hd * s[4] + 0.5 * b2,
    }
}

pub fn pohozaev_residuals(field: &ComplexField) -> (f64, f64) {
    let r = pohozaev(field);
    (r.r1(), r.r2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub name: String,
    /// time of the worst mismatch (None for static identities)
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_residual: f64,
    pub rel_residual: f64,
    pub samples: usize,
}

impl IdentityRecord {
    fn stationary(name: &str, lhs: f64, rhs: f64) -> Self {
        let abs = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        IdentityRecord {
            name: name.into(),
            t: None,
            lhs,
            rhs,
            abs_residual: abs,
            rel_residual: if scale > 0.0 { abs / scale } else { 0.0 },
            samples: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VirialReport {
    pub records: Vec<IdentityRecord>,
    /// spacing of the rows used for the time differences
    pub record_spacing: Option<f64>,
    pub weight_substituted: bool,
    pub notes: Vec<String>,
}

impl VirialReport {
    pub fn get(&self, name: &str) -> Option<&IdentityRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// Compares a finite-difference sequence with its analytic counterpart.
/// Relative error is max|lhs − rhs| / max|rhs| over the compared samples.
pub fn compare_sequences(name: &str, t: &[f64], lhs: &[f64], rhs: &[f64]) -> IdentityRecord {
    let mut worst = (0.0_f64, 0usize);
    let mut scale = 0.0_f64;
    for i in 0..lhs.len() {
        let e = (lhs[i] - rhs[i]).abs();
        if e >= worst.0 {
            worst = (e, i);
        }
        scale = scale.max(rhs[i].abs());
    }
    let i = worst.1;
    IdentityRecord {
        name: name.into(),
        t: t.get(i).copied(),
        lhs: lhs.get(i).copied().unwrap_or(0.0),
        rhs: rhs.get(i).copied().unwrap_or(0.0),
        abs_residual: worst.0,
        rel_residual: if scale > 0.0 { worst.0 / scale } else { worst.0 },
        samples: lhs.len(),
    }
}

/// Centered first and second differences of a uniformly spaced sequence, at interior points.
pub fn centered_differences(y: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    if y.len() < 3 {
        return (vec![], vec![]);
    }
    let d1 = y.windows(3).map(|w| (w[2] - w[0]) / (2.0 * dt)).collect();
    let d2 = y.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]) / (dt * dt)).collect();
    (d1, d2)
}

/// Time-difference closure of every identity along a recorded run.
/// Only uniformly spaced rows are used; the rows after the last uniform one are dropped.
pub fn closure_report(series: &DiagnosticsSeries, obstacle: &ObstacleSpec) -> Result<VirialReport> {
    let rows: Vec<_> = series.rows.iter().filter(|r| r.on_schedule).collect();
    let mut report = VirialReport::default();
    if rows.len() < 3 {
        report.notes.push("fewer than three uniformly spaced rows; no time-difference checks".into());
        return Ok(report);
    }
    let spacing = rows[1].t - rows[0].t;
    for w in rows.windows(2) {
        let s = w[1].t - w[0].t;
        if (s - spacing).abs() > 1e-9 * spacing.max(1e-300) {
            return Err(Error::Consistency(format!(
                "record spacing is not uniform ({s} vs {spacing})"
            )));
        }
    }
    report.record_spacing = Some(spacing);
    let a = obstacle.big_m;
    report.weight_substituted = variance_weight_substituted(a);
    let t: Vec<f64> = rows[1..rows.len() - 1].iter().map(|r| r.t).collect();
    let mid = |f: &dyn Fn(&crate::evolution::DiagnosticsRow) -> f64| -> Vec<f64> {
        rows[1..rows.len() - 1].iter().map(|r| f(r)).collect()
    };
    let col = |f: &dyn Fn(&crate::evolution::DiagnosticsRow) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };

    let (d1, d2) = centered_differences(&col(&|r| r.upsilon2), spacing);
    report.records.push(compare_sequences("dt_ups2", &t, &d1, &mid(&|r| r.momentum_x)));
    report.records.push(compare_sequences("d2t_ups2", &t, &d2, &mid(&|r| r.rhs_upsilon2)));
    let (d1, d2) = centered_differences(&col(&|r| r.upsilon1), spacing);
    report.records.push(compare_sequences("dt_ups1", &t, &d1, &mid(&|r| r.dt_upsilon1)));
    report.records.push(compare_sequences("d2t_ups1", &t, &d2, &mid(&|r| r.rhs_upsilon1)));
    let (_, d2) = centered_differences(&col(&|r| r.variance_ball), spacing);
    let name = if obstacle.is_ball() { "d2t_V_ball" } else { "d2t_V_convex" };
    report.records.push(compare_sequences(name, &t, &d2, &mid(&|r| r.rhs_variance_ball)));

    if series.symmetric {
        let d = rows[0].gamma.len();
        for j in 0..d {
            let (_, d2) = centered_differences(&col(&|r| r.gamma[j]), spacing);
            let name = format!("d2t_gamma_{}", j + 1);
            report.records.push(compare_sequences(&name, &t, &d2, &mid(&|r| r.rhs_gamma[j])));
        }
        let (_, d2) = centered_differences(&col(&|r| r.variance_sym), spacing);
        report.records.push(compare_sequences("d2t_V_sym", &t, &d2, &mid(&|r| r.rhs_variance_sym)));
    } else {
        report.notes.push("field is not in the symmetric sector; gamma and V identities skipped".into());
    }
    Ok(report)
}

/// Static identities of a single field.
pub fn pohozaev_records(field: &ComplexField) -> Vec<IdentityRecord> {
    let r = pohozaev(field);
    vec![
        IdentityRecord::stationary("poho1", r.lhs1, r.rhs1),
        IdentityRecord::stationary("poho2", r.lhs2, r.rhs2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_differences_exact_on_quadratics() {
        let y: Vec<f64> = (0..6).map(|i| 3.0 * (i as f64 * 0.1).powi(2) - (i as f64 * 0.1)).collect();
        let (d1, d2) = centered_differences(&y, 0.1);
        for (i, v) in d2.iter().enumerate() {
            assert!((v - 6.0).abs() < 1e-9);
            let t = (i + 1) as f64 * 0.1;
            assert!((d1[i] - (6.0 * t - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_constant_substitution() {
        assert_eq!(variance_shift(1.0), 10.0);
        assert_eq!(variance_shift(4.0), 17.0);
        assert!(!variance_weight_substituted(10f64.sqrt()));
    }
}

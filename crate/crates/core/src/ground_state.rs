//! Radial ground state of `-Q + ΔQ + |Q|^{p-1} Q = 0` by shooting on `Q(0)`.

use ode_solvers::{Dopri5, OutputType, System, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Sampling step of the radial profile.
pub const SAMPLE_STEP: f64 = 1e-3;
/// Fraction of `Q(0)` below which the tail is replaced by the linear asymptotics.
const MATCH_FRACTION: f64 = 1e-4;
/// The profile is extended until `Q < TAIL_FRACTION * Q(0)`.
const TAIL_FRACTION: f64 = 1e-11;
const SHOOT_LIMIT: f64 = 60.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundStateProfile {
    pub d: usize,
    pub p: f64,
    pub r_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
    pub dq_samples: Vec<f64>,
    pub q0: f64,
    pub r_max: f64,
    /// ‖Q‖²
    pub mass: f64,
    /// ‖∇Q‖²
    pub grad_sq: f64,
    /// ‖Q‖^{p+1}_{p+1}
    pub lp1: f64,
    pub energy: f64,
    pub c_gn: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ThresholdQuantities {
    pub s_c: f64,
    /// M[Q]^{(1-s_c)/s_c} E[Q]
    pub me_q: f64,
    /// ‖Q‖^{1-s_c} ‖∇Q‖^{s_c}
    pub gn_q: f64,
    /// ‖∇Q‖ ‖Q‖^{(1-s_c)/s_c}, the maximiser of the threshold function f
    pub x1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shot {
    /// became negative: Q(0) too large
    Crosses,
    /// turned back up while positive: Q(0) too small
    TurnsUp,
    Undecided,
}

struct Radial {
    d: f64,
    p: f64,
    stop: Shot,
}

impl System<f64, Vector2<f64>> for Radial {
    fn system(&self, r: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let q = y[0];
        dy[0] = y[1];
        dy[1] = -(self.d - 1.0) / r * y[1] + q - q.abs().powf(self.p - 1.0) * q;
    }

    fn solout(&mut self, _r: f64, y: &Vector2<f64>, _dy: &Vector2<f64>) -> bool {
        if y[0] < 0.0 {
            self.stop = Shot::Crosses;
        } else if y[1] > 0.0 {
            self.stop = Shot::TurnsUp;
        }
        self.stop != Shot::Undecided
    }
}

fn area_of_unit_sphere(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => unreachable!(),
    }
}

struct Trajectory {
    r: Vec<f64>,
    q: Vec<f64>,
    dq: Vec<f64>,
    shot: Shot,
}

fn shoot(d: usize, p: f64, q0: f64, rtol: f64) -> Result<Trajectory> {
    let r0 = SAMPLE_STEP;
    let c = (q0 - q0.powf(p)) / d as f64;
    let y0 = Vector2::new(q0 + 0.5 * c * r0 * r0, c * r0);
    let sys = Radial { d: d as f64, p, stop: Shot::Undecided };
    let mut stepper = Dopri5::from_param(
        sys,
        r0,
        SHOOT_LIMIT,
        SAMPLE_STEP,
        y0,
        rtol,
        rtol * 1e-6 * q0,
        0.9,
        0.04,
        0.2,
        10.0,
        SHOOT_LIMIT - r0,
        0.0,
        10_000_000,
        // the (d-1)/r term trips the stiffness heuristic near the origin
        u32::MAX,
        OutputType::Dense,
    );
    if let Err(e) = stepper.integrate() {
        return Err(Error::Solver(format!("radial integration failed at q0 = {q0}: {e:?}")));
    }
    let mut r = vec![0.0];
    let mut q = vec![q0];
    let mut dq = vec![0.0];
    let mut shot = Shot::Undecided;
    for (ri, yi) in stepper.x_out().iter().zip(stepper.y_out()) {
        if shot != Shot::Undecided {
            break;
        }
        if yi[0] < 0.0 {
            shot = Shot::Crosses;
        } else if yi[1] > 0.0 {
            shot = Shot::TurnsUp;
        }
        r.push(*ri);
        q.push(yi[0]);
        dq.push(yi[1]);
    }
    Ok(Trajectory { r, q, dq, shot })
}

/// Asymptotic decay `K(r)` of the linearised equation and its log-derivative.
fn linear_tail(d: usize, r: f64) -> (f64, f64) {
    match d {
        1 => ((-r).exp(), -1.0),
        3 => ((-r).exp() / r, -1.0 - 1.0 / r),
        _ => {
            // large-argument expansion of K0, differentiated term by term
            let c = [1.0, -1.0, 9.0 / 2.0, -225.0 / 6.0, 11025.0 / 24.0];
            let z = 8.0 * r;
            let mut k0s = 0.0;
            let mut dk0s = 0.0;
            for (n, cn) in c.iter().enumerate() {
                k0s += cn * z.powi(-(n as i32));
                dk0s -= 8.0 * n as f64 * cn * z.powi(-(n as i32) - 1);
            }
            let pre = (std::f64::consts::PI / (2.0 * r)).sqrt() * (-r).exp();
            (pre * k0s, -1.0 - 0.5 / r + dk0s / k0s)
        }
    }
}

fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    assert!(n >= 3 && n % 2 == 1);
    let mut s = f[0] + f[n - 1];
    for (i, v) in f.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

pub fn validate_exponent(d: usize, p: f64) -> Result<()> {
    if !(1..=3).contains(&d) {
        return invalid(format!("ground states are computed for d in 1..=3, got {d}"));
    }
    if !(p > 1.0) || !p.is_finite() {
        return invalid(format!("exponent must satisfy p > 1, got {p}"));
    }
    if d >= 3 && p >= (d as f64 + 2.0) / (d as f64 - 2.0) {
        return invalid(format!("p = {p} is energy-supercritical in d = {d}"));
    }
    Ok(())
}

/// Shooting solve. `tol` is the integrator's relative tolerance; `Q(0)` is
/// bisected to machine precision.
pub fn solve_ground_state(d: usize, p: f64, tol: f64) -> Result<GroundStateProfile> {
    validate_exponent(d, p)?;
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let rtol = tol.clamp(1e-14, 1e-6);

    let mut lo = 1.0;
    let mut hi = 2.0;
    let mut found = false;
    for _ in 0..60 {
        match shoot(d, p, hi, rtol)?.shot {
            Shot::Crosses => {
                found = true;
                break;
            }
            _ => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    if !found {
        return Err(Error::Solver(format!(
            "no sign-changing trajectory found for Q(0) up to {hi} (d={d}, p={p})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(d, p, mid, rtol)?.shot {
            Shot::Crosses => hi = mid,
            _ => lo = mid,
        }
    }

    let a = shoot(d, p, lo, rtol)?;
    let b = shoot(d, p, hi, rtol)?;
    if a.shot == Shot::Undecided && b.shot == Shot::Undecided {
        return Err(Error::Solver("bisection bracket collapsed without a decision".into()));
    }
    let q0 = lo;
    // match before the two bracketing shots separate or the linear regime is reached
    let n_common = a.q.len().min(b.q.len());
    let mut im = None;
    for i in 1..n_common {
        let sep = (a.q[i] - b.q[i]).abs();
        if a.q[i] < MATCH_FRACTION * q0 || sep > 1e-7 * a.q[i] || a.dq[i] > 0.0 {
            im = Some(i - 1);
            break;
        }
    }
    let im = im.ok_or_else(|| Error::Solver("could not locate a matching radius".into()))?;
    if a.q[im] > 0.05 * q0 {
        return Err(Error::Solver(format!(
            "shots separate too early (Q = {} at r = {})",
            a.q[im], a.r[im]
        )));
    }

    let mut r: Vec<f64> = (0..=im).map(|i| i as f64 * SAMPLE_STEP).collect();
    let mut q = a.q[..=im].to_vec();
    let mut dq = a.dq[..=im].to_vec();
    let rm = r[im];
    let (km, _) = linear_tail(d, rm);
    let qm = q[im];
    let mut i = im + 1;
    loop {
        let ri = i as f64 * SAMPLE_STEP;
        let (k, dlog) = linear_tail(d, ri);
        let v = qm * k / km;
        r.push(ri);
        q.push(v);
        dq.push(v * dlog);
        if v < TAIL_FRACTION * q0 && r.len() % 2 == 1 {
            break;
        }
        i += 1;
    }
    let r_max = *r.last().unwrap();

    let area = area_of_unit_sphere(d);
    let w: Vec<f64> = r.iter().map(|ri| ri.powi(d as i32 - 1)).collect();
    let integrand = |f: &dyn Fn(usize) -> f64| -> f64 {
        let vals: Vec<f64> = (0..r.len()).map(|i| f(i) * w[i]).collect();
        area * simpson(&vals, SAMPLE_STEP)
    };
    let mass = integrand(&|i| q[i] * q[i]);
    let grad_sq = integrand(&|i| dq[i] * dq[i]);
    let lp1 = integrand(&|i| q[i].abs().powf(p + 1.0));
    let energy = 0.5 * grad_sq - lp1 / (p + 1.0);

    let mut prof = GroundStateProfile {
        d,
        p,
        r_samples: r,
        q_samples: q,
        dq_samples: dq,
        q0,
        r_max,
        mass,
        grad_sq,
        lp1,
        energy,
        c_gn: 0.0,
    };
    prof.c_gn = gn_constant(&prof)?;
    Ok(prof)
}

/// Sharp constant as the ratio attained by Q.
pub fn gn_constant_direct(prof: &GroundStateProfile) -> f64 {
    let d = prof.d as f64;
    let p = prof.p;
    let grad = prof.grad_sq.sqrt();
    let l2 = prof.mass.sqrt();
    prof.lp1 / (grad.powf(d * (p - 1.0) / 2.0) * l2.powf(2.0 - (d - 2.0) * (p - 1.0) / 2.0))
}

/// Sharp constant from the closed form in terms of ‖∇Q‖ and ‖Q‖.
pub fn gn_constant_closed_form(prof: &GroundStateProfile) -> f64 {
    let d = prof.d as f64;
    let p = prof.p;
    let grad = prof.grad_sq.sqrt();
    let l2 = prof.mass.sqrt();
    2.0 * (p + 1.0) / (d * (p - 1.0))
        * grad.powf((4.0 - d * (p - 1.0)) / 2.0)
        * l2.powf(-(4.0 - (d - 2.0) * (p - 1.0)) / 2.0)
}

pub fn gn_constant(prof: &GroundStateProfile) -> Result<f64> {
    let a = gn_constant_direct(prof);
    let b = gn_constant_closed_form(prof);
    if !(a > 0.0) || ((a - b) / a).abs() > 1e-6 {
        return Err(Error::Consistency(format!(
            "sharp constant disagrees: ratio {a}, closed form {b}"
        )));
    }
    Ok(a)
}

pub fn critical_exponent(d: usize, p: f64) -> f64 {
    d as f64 / 2.0 - 2.0 / (p - 1.0)
}

pub fn threshold_quantities(prof: &GroundStateProfile) -> Result<ThresholdQuantities> {
    let s_c = critical_exponent(prof.d, prof.p);
    if s_c <= 0.0 {
        return Err(Error::Precondition(format!(
            "s_c = {s_c} <= 0 (d={}, p={}): threshold theorem needs s_c > 0",
            prof.d, prof.p
        )));
    }
    if prof.d >= 3 && s_c >= 1.0 {
        return Err(Error::Precondition(format!("s_c = {s_c} >= 1 in d = {}", prof.d)));
    }
    let sigma = (1.0 - s_c) / s_c;
    let l2 = prof.mass.sqrt();
    let grad = prof.grad_sq.sqrt();
    Ok(ThresholdQuantities {
        s_c,
        me_q: prof.mass.powf(sigma) * prof.energy,
        gn_q: l2.powf(1.0 - s_c) * grad.powf(s_c),
        x1: grad * l2.powf(sigma),
    })
}

impl GroundStateProfile {
    /// Q at radius `r` by cubic Hermite interpolation of the samples (0 beyond `r_max`).
    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.r_max {
            return 0.0;
        }
        let h = SAMPLE_STEP;
        let i = ((r / h).floor() as usize).min(self.r_samples.len() - 2);
        let t = (r - self.r_samples[i]) / h;
        let (y0, y1) = (self.q_samples[i], self.q_samples[i + 1]);
        let (m0, m1) = (self.dq_samples[i] * h, self.dq_samples[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// Residuals of the integral identities, relative.
    pub fn identity_residuals(&self) -> [f64; 3] {
        let d = self.d as f64;
        let p = self.p;
        let r1 = self.grad_sq / self.mass / (d * (p - 1.0) / ((d + 2.0) - p * (d - 2.0))) - 1.0;
        let r2 = self.lp1 / (2.0 * (p + 1.0) / (d * (p - 1.0)) * self.grad_sq) - 1.0;
        let e_pred = (d * (p - 1.0) - 4.0) / (2.0 * d * (p - 1.0)) * self.grad_sq;
        let r3 = (self.energy - e_pred) / self.grad_sq;
        [r1.abs(), r2.abs(), r3.abs()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let h = 0.1;
        let f: Vec<f64> = (0..11).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&f, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn linear_tail_log_derivative() {
        for d in 1..=3 {
            let r = 12.0;
            let e = 1e-5;
            let (k1, dl) = linear_tail(d, r);
            let (k2, _) = linear_tail(d, r + e);
            let (k0, _) = linear_tail(d, r - e);
            let fd = (k2 - k0) / (2.0 * e) / k1;
            assert!((fd - dl).abs() < 1e-6, "d={d}: {fd} vs {dl}");
        }
    }

    #[test]
    fn rejects_supercritical() {
        assert!(solve_ground_state(3, 5.0, 1e-10).is_err());
        assert!(solve_ground_state(2, 1.0, 1e-10).is_err());
    }
}

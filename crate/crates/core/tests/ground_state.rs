use std::f64::consts::PI;

use extnls_core::ground_state::{
    gn_constant, gn_constant_closed_form, gn_constant_direct, solve_ground_state, threshold_quantities, SAMPLE_STEP,
};

/// Fixed-step RK4 shooting for d=2, p=3, bisecting on Q(0). Returns (Q(0), mass).
fn townes_oracle() -> (f64, f64) {
    let step = 2e-4;
    let rhs = |r: f64, q: f64, dq: f64| -> (f64, f64) { (dq, -dq / r + q - q * q * q) };
    // +1: crosses zero, -1: turns up, with the trapezoid mass up to the event
    let shoot = |q0: f64| -> (i32, f64) {
        let mut r = 1e-3;
        let mut q = q0 + (q0 - q0.powi(3)) * r * r / 4.0;
        let mut dq = (q0 - q0.powi(3)) * r / 2.0;
        let mut mass = 0.5 * q0 * q0 * r * r;
        while r < 20.0 {
            let (k1q, k1d) = rhs(r, q, dq);
            let (k2q, k2d) = rhs(r + step / 2.0, q + step / 2.0 * k1q, dq + step / 2.0 * k1d);
            let (k3q, k3d) = rhs(r + step / 2.0, q + step / 2.0 * k2q, dq + step / 2.0 * k2d);
            let (k4q, k4d) = rhs(r + step, q + step * k3q, dq + step * k3d);
            let qn = q + step / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            let dn = dq + step / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            mass += 0.5 * step * (q * q * r + qn * qn * (r + step));
            r += step;
            q = qn;
            dq = dn;
            if q < 0.0 {
                return (1, mass);
            }
            if dq > 0.0 {
                return (-1, mass);
            }
        }
        (0, mass)
    };
    let (mut lo, mut hi) = (0.5, 4.0);
    assert_eq!(shoot(lo).0, -1);
    assert_eq!(shoot(hi).0, 1);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid).0 > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (_, m) = shoot(lo);
    (lo, 2.0 * PI * m)
}

#[test]
fn one_dimensional_soliton_is_sech() {
    let g = solve_ground_state(1, 3.0, 1e-12).unwrap();
    assert!((g.q0 - 2f64.sqrt()).abs() < 1e-8);
    let mut worst = 0.0_f64;
    for i in 0..8000 {
        let r = i as f64 * 1e-3;
        let exact = 2f64.sqrt() / r.cosh();
        worst = worst.max((g.eval(r) - exact).abs());
    }
    assert!(worst < 1e-8, "max |Q - sqrt2 sech| = {worst:e}");
    // ||Q||^2 = 2 * integral over the line of 2 sech^2 = 4
    assert!((g.mass - 4.0).abs() < 1e-7);
}

#[test]
fn townes_mass_agrees_with_independent_shooting() {
    let (q0, mass) = townes_oracle();
    let g = solve_ground_state(2, 3.0, 1e-10).unwrap();
    assert!((g.q0 - q0).abs() < 1e-6, "{} vs {q0}", g.q0);
    assert!((g.mass - mass).abs() / mass < 1e-3, "{} vs {mass}", g.mass);
    assert!((g.mass - 11.70).abs() < 0.01);
}

#[test]
fn integral_identities_hold() {
    for (d, p) in [(2, 3.0), (2, 5.0), (3, 3.0)] {
        let g = solve_ground_state(d, p, 1e-10).unwrap();
        for (i, r) in g.identity_residuals().iter().enumerate() {
            assert!(*r < 1e-6, "d={d} p={p} identity {i}: {r:e}");
        }
        let direct = gn_constant_direct(&g);
        let closed = gn_constant_closed_form(&g);
        assert!((direct - closed).abs() / direct < 1e-6, "d={d} p={p}: {direct} vs {closed}");
        assert!(gn_constant(&g).unwrap() > 0.0);
        assert!(g.q_samples.windows(2).all(|w| w[1] < w[0]));
        assert!(*g.q_samples.last().unwrap() < 1e-10 * g.q0);
    }
}

#[test]
fn mass_critical_energy_vanishes() {
    let g = solve_ground_state(2, 3.0, 1e-10).unwrap();
    assert!(g.energy.abs() < 1e-6 * g.grad_sq);
    // the exponent of ||grad Q|| drops out, leaving 2/||Q||^2
    let c = gn_constant(&g).unwrap();
    assert!((c - 2.0 / g.mass).abs() < 1e-8, "{c}");
}

#[test]
fn one_dimensional_sharp_constant() {
    let g = solve_ground_state(1, 3.0, 1e-12).unwrap();
    let c = gn_constant(&g).unwrap();
    assert!((c - 1.0 / 3f64.sqrt()).abs() < 1e-6, "{c}");
}

#[test]
fn tolerance_refinement_is_cauchy() {
    let a = solve_ground_state(2, 5.0, 1e-8).unwrap();
    let b = solve_ground_state(2, 5.0, 1e-9).unwrap();
    assert!((a.mass - b.mass).abs() / b.mass < 1e-8);
}

#[test]
fn samples_satisfy_the_radial_ode() {
    let g = solve_ground_state(3, 3.0, 1e-10).unwrap();
    let q = &g.q_samples;
    // max residual of the centered discretization with sample stride s
    let residual = |s: usize| {
        let h = s as f64 * SAMPLE_STEP;
        let mut worst = 0.0_f64;
        for i in (200..8000).step_by(2) {
            let r = g.r_samples[i];
            let q2 = (q[i + s] - 2.0 * q[i] + q[i - s]) / (h * h);
            let q1 = (q[i + s] - q[i - s]) / (2.0 * h);
            worst = worst.max((q2 + 2.0 / r * q1 - q[i] + q[i].powi(3)).abs());
        }
        worst
    };
    let (fine, coarse) = (residual(1), residual(2));
    assert!(fine < 1e-3, "{fine:e}");
    assert!(coarse / fine > 3.5, "{coarse:e} {fine:e}");
}

#[test]
fn threshold_constants() {
    let g = solve_ground_state(3, 3.0, 1e-10).unwrap();
    let t = threshold_quantities(&g).unwrap();
    assert_eq!(t.s_c, 0.5);
    assert!((t.me_q - g.mass * g.energy).abs() < 1e-12 * t.me_q);
    let g5 = solve_ground_state(2, 5.0, 1e-10).unwrap();
    assert_eq!(threshold_quantities(&g5).unwrap().s_c, 0.5);
    let g3 = solve_ground_state(2, 3.0, 1e-10).unwrap();
    assert!(threshold_quantities(&g3).is_err());
}

#[test]
fn rejects_supercritical_exponents() {
    assert!(solve_ground_state(3, 5.0, 1e-8).is_err());
    assert!(solve_ground_state(3, 6.0, 1e-8).is_err());
    assert!(solve_ground_state(2, 1.0, 1e-8).is_err());
    assert!(solve_ground_state(2, 3.0, 0.0).is_err());
}

use std::sync::Arc;

use extnls_core::evolution::{detect_blowup, detect_blowup_with, run, BlowupStatus, DiagnosticsRow, DiagnosticsSeries, RunParams, Stepper};
use extnls_core::{Complex64, ComplexField, ExteriorGrid, InitialData, ObstacleSpec, SymmetryClass};

fn grid(h: f64, r_out: f64) -> Arc<ExteriorGrid> {
    Arc::new(ExteriorGrid::build(&ObstacleSpec::ball(2, 1.0).unwrap(), r_out, h).unwrap())
}

fn bump(g: &Arc<ExteriorGrid>, amplitude: f64) -> ComplexField {
    InitialData::GaussianBump { amplitude, center: vec![1.8, 0.6], widths: vec![0.5, 0.5], wavevector: vec![1.0, -0.5] }
        .build(g.clone(), &SymmetryClass::none(), None)
        .unwrap()
}

fn still_bump(g: &Arc<ExteriorGrid>) -> ComplexField {
    InitialData::GaussianBump { amplitude: 0.5, center: vec![1.8, 0.0], widths: vec![0.5, 0.5], wavevector: vec![] }
        .build(g.clone(), &SymmetryClass::none(), None)
        .unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn mass_and_energy_are_conserved() {
    let g = grid(1.0 / 16.0, 5.0);
    let u0 = bump(&g, 2.0);

    let lin = Stepper::linear(g.clone());
    let mut u = u0.clone();
    for _ in 0..20 {
        u = lin.step(&u, 0.01).unwrap();
    }
    assert!((u.mass() - u0.mass()).abs() < 1e-11 * u0.mass());
    assert!((u.grad_sq() - u0.grad_sq()).abs() < 1e-10 * u0.grad_sq());

    let nl = Stepper::new(g, 3.0).unwrap();
    let mut u = u0.clone();
    for _ in 0..20 {
        u = nl.step(&u, 0.01).unwrap();
    }
    assert!((u.mass() - u0.mass()).abs() < 1e-11 * u0.mass());
    let e0 = u0.energy(3.0);
    assert!((u.energy(3.0) - e0).abs() < 1e-10 * (1.0 + e0.abs()), "{} vs {e0}", u.energy(3.0));
    assert!((u.time - 0.2).abs() < 1e-12);
}

#[test]
fn step_is_time_reversible() {
    let g = grid(1.0 / 16.0, 5.0);
    let u0 = bump(&g, 2.0);
    let s = Stepper::new(g, 3.0).unwrap();
    let mut u = u0.clone();
    for _ in 0..5 {
        u = s.step(&u, 0.02).unwrap();
    }
    // conj S conj inverts S for a symmetric scheme
    let mut v = u.conj();
    for _ in 0..5 {
        v = s.step(&v, 0.02).unwrap();
    }
    let back = v.conj();
    let scale = u0.values.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    assert!(max_diff(&back.values, &u0.values) < 1e-9 * scale);
    assert!(max_diff(&u.values, &u0.values) > 1e-2 * scale);
}

#[test]
fn manufactured_solution_is_second_order_in_time() {
    // u_k(t) = a (1 + t) phi_k e^{it} solves the semidiscrete problem exactly once
    // the source is built from the discrete Laplacian of phi
    let g = grid(1.0 / 16.0, 4.0);
    let phi: Vec<Complex64> = g
        .coords()
        .iter()
        .map(|x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let e2 = (x[0] - 1.6).powi(2) + (x[1] - 0.4).powi(2);
            Complex64::new((r2 - 1.0) * (-e2).exp(), 0.0)
        })
        .collect();
    let lphi = g.laplacian(&phi);
    let a = 0.8;
    let i = Complex64::new(0.0, 1.0);
    let exact = |t: f64| -> Vec<Complex64> { phi.iter().map(|z| z * a * (1.0 + t) * (i * t).exp()).collect() };
    let source = |t: f64| -> Vec<Complex64> {
        let e = (i * t).exp();
        phi.iter()
            .zip(&lphi)
            .map(|(z, lz)| {
                let u = z * a * (1.0 + t) * e;
                let ut = z * a * e * (1.0 + i * (1.0 + t));
                i * ut + lz * a * (1.0 + t) * e + u * u.norm_sqr()
            })
            .collect()
    };
    let s = Stepper::new(g.clone(), 3.0).unwrap();
    let t_end = 0.4;
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| {
            let n = (t_end / dt as f64).round() as usize;
            let mut u = ComplexField { grid: g.clone(), values: exact(0.0), time: 0.0 };
            for k in 0..n {
                let f = source((k as f64 + 0.5) * dt);
                u = s.step_with_source(&u, dt, &f).unwrap();
            }
            max_diff(&u.values, &exact(t_end))
        })
        .collect();
    let r1 = errs[0] / errs[1];
    let r2 = errs[1] / errs[2];
    assert!(r1 > 3.5 && r1 < 4.5 && r2 > 3.5 && r2 < 4.5, "{errs:?}");
}

#[test]
fn rejects_bad_inputs() {
    let g = grid(1.0 / 10.0, 3.0);
    assert!(Stepper::new(g.clone(), 1.0).is_err());
    assert!(Stepper::new(g.clone(), f64::NAN).is_err());
    let s = Stepper::linear(g.clone());
    let u = ComplexField::zeros(g.clone());
    assert!(s.step(&u, 0.0).is_err());
    assert!(s.step_with_source(&u, 0.1, &[]).is_err());

    let mut p = RunParams::new(3.0, 0.01, 0.1);
    assert!(p.validate().is_ok());
    p.record_every = 0;
    assert!(p.validate().is_err());
    let mut p = RunParams::new(3.0, 0.01, 0.1);
    p.dt_min = 0.1;
    assert!(p.validate().is_err());
    let mut p = RunParams::new(3.0, 0.01, 0.1);
    p.grad_factor = 1.0;
    assert!(p.validate().is_err());
    let mut p = RunParams::new(3.0, 0.01, 0.1);
    p.variance_c = Some(-1.0);
    assert!(p.validate().is_err());
}

#[test]
fn small_data_run_completes() {
    let g = grid(1.0 / 10.0, 8.0);
    let u0 = still_bump(&g);
    let mut params = RunParams::new(3.0, 0.01, 0.2);
    params.record_every = 5;
    let out = run(&u0, &params).unwrap();
    assert_eq!(out.verdict.status, BlowupStatus::Completed, "{:?}", out.verdict);
    assert_eq!(out.series.rows.len(), 5);
    assert!(out.series.rows.iter().all(|r| r.on_schedule));
    assert!((out.series.t_last().unwrap() - 0.2).abs() < 1e-12);
    assert!(out.series.mass_drift() < 1e-11);
    assert!(out.series.energy_drift() < 1e-11);
    assert!(!out.series.symmetric);

    let csv = out.series.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    let width = DiagnosticsSeries::csv_header(2).len();
    assert!(lines.iter().all(|l| l.split(',').count() == width));
    let mass: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(mass, out.series.rows[0].mass);
}

#[test]
fn partial_last_step_is_off_schedule() {
    let g = grid(1.0 / 10.0, 8.0);
    let u0 = still_bump(&g);
    let mut params = RunParams::new(3.0, 0.02, 0.05);
    params.record_every = 1;
    let out = run(&u0, &params).unwrap();
    let last = out.series.rows.last().unwrap();
    assert!((last.t - 0.05).abs() < 1e-12);
    assert!(!last.on_schedule);
    assert_eq!(out.series.rows.len(), 4);
}

fn row(t: f64, grad_sq: f64) -> DiagnosticsRow {
    DiagnosticsRow { t, mass: 2.0, grad_sq, gamma: vec![0.0; 2], rhs_gamma: vec![0.0; 2], ..Default::default() }
}

#[test]
fn detection_rules() {
    let base = DiagnosticsSeries { dim: 2, rows: vec![row(0.0, 4.0), row(0.1, 30.0)], ..Default::default() };
    assert_eq!(detect_blowup(&base, 3.0, 1e-6).status, BlowupStatus::Completed);

    // growth is measured on the norm, not its square
    let mut s = base.clone();
    s.rows.push(row(0.2, 36.0));
    let v = detect_blowup(&s, 3.0, 1e-6);
    assert_eq!(v.status, BlowupStatus::BlowupDetected);
    assert_eq!(v.t_detect, Some(0.2));
    assert!((v.growth_factor - 3.0).abs() < 1e-12);

    let mut s = base.clone();
    s.rows[1].upsilon1 = f64::NAN;
    assert_eq!(detect_blowup(&s, 3.0, 1e-6).status, BlowupStatus::BlowupDetected);

    let mut s = base.clone();
    s.stalled = true;
    let v = detect_blowup(&s, 3.0, 1e-6);
    assert_eq!(v.status, BlowupStatus::BlowupDetected);
    assert_eq!(v.t_detect, Some(0.1));

    let mut s = base.clone();
    s.rows.push(row(0.2, 36.0));
    s.rows[2].annulus_mass = 1e-5;
    let v = detect_blowup(&s, 3.0, 1e-6);
    assert_eq!(v.status, BlowupStatus::TruncationContaminated);
    // a looser contamination threshold lets the growth through
    assert_eq!(detect_blowup_with(&s, 3.0, 1e-6, 1e-3).status, BlowupStatus::BlowupDetected);

    let empty = DiagnosticsSeries::default();
    assert_eq!(detect_blowup(&empty, 3.0, 1e-6).status, BlowupStatus::Completed);
}

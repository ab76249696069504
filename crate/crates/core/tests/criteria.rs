use std::sync::Arc;

use extnls_core::criteria::{
    ball_report, check_thm_ball, check_thm_convex, check_thm_sym, check_threshold, convex_exponent_floor, convex_report, delta2_of,
    delta_margins_of, lambda_star, monitor_threshold, threshold_function, threshold_report, threshold_root, DataSummary, Status,
};
use extnls_core::ground_state::{gn_constant, solve_ground_state, threshold_quantities};
use extnls_core::{Complex64, ComplexField, DiagnosticsRow, DiagnosticsSeries, ExteriorGrid, InitialData, ObstacleSpec, SymmetryClass, TheoremId};

fn ball_grid(h: f64) -> Arc<ExteriorGrid> {
    Arc::new(ExteriorGrid::build(&ObstacleSpec::ball(2, 1.0).unwrap(), 6.0, h).unwrap())
}

fn summary(mass: f64, energy: f64) -> DataSummary {
    DataSummary { mass, energy, grad_sq: 1.0, lp1: 1.0, upsilon2: 1.0 }
}

fn sym_bump(g: &Arc<ExteriorGrid>, amplitude: f64) -> ComplexField {
    InitialData::GaussianBump { amplitude, center: vec![1.6, 1.6], widths: vec![0.45, 0.45], wavevector: vec![] }
        .build(g.clone(), &SymmetryClass::full(2), None)
        .unwrap()
}

#[test]
fn ball_examples() {
    let r = ball_report(2, 5.0, 1.0, &summary(1.0, -0.5)).unwrap();
    assert!(r.verdict);
    assert_eq!(r.status, Status::Satisfied);
    assert!((r.hypothesis("shifted_energy").unwrap().value + 0.375).abs() < 1e-15);

    let r = ball_report(2, 5.0, 1.0, &summary(1.0, -0.1)).unwrap();
    assert!(!r.verdict);
    assert!(r.hypothesis("exponent_floor").unwrap().satisfied);

    let r = ball_report(2, 4.9, 1.0, &summary(1.0, -100.0)).unwrap();
    assert!(!r.hypothesis("exponent_floor").unwrap().satisfied);
    assert!(!r.verdict);

    // no mass shift in three dimensions
    let r = ball_report(3, 5.0, 1.0, &summary(1.0, -0.01)).unwrap();
    assert!(r.verdict);
    assert!(r.hypothesis("energy").is_some());
    assert!(ball_report(1, 5.0, 1.0, &summary(1.0, -1.0)).is_err());
}

#[test]
fn convex_floors_match_hand_values() {
    assert!((convex_exponent_floor(3, 1.2) - 23.0 / 3.0).abs() < 1e-12);
    assert!((convex_exponent_floor(2, 1.5) - 9.0).abs() < 1e-12);
    for d in [2, 3] {
        assert!((convex_exponent_floor(d, 1.0) - 5.0).abs() < 1e-12);
    }
    // an eccentric obstacle is reported, not rejected
    let r = convex_report(2, 100.0, 2.5, 1.0, &summary(1.0, -10.0)).unwrap();
    assert!(!r.verdict);
    assert!(!r.hypothesis("obstacle_ratio").unwrap().satisfied);
    assert!(!r.notes.is_empty());
    // d = 2 shift M/(8 m^3)
    let r = convex_report(2, 9.5, 1.5, 1.0, &summary(2.0, -0.3)).unwrap();
    assert!((r.hypothesis("shifted_energy").unwrap().value - (-0.3 + 1.5 / 8.0 * 2.0)).abs() < 1e-15);
    assert!(!r.verdict);
    assert!(convex_report(2, 9.0, 0.5, 1.0, &summary(1.0, -1.0)).is_err());
}

#[test]
fn convex_on_grid_data() {
    let g = Arc::new(ExteriorGrid::build(&ObstacleSpec::ellipsoid(&[1.2, 0.8]).unwrap(), 5.0, 1.0 / 16.0).unwrap());
    let u = sym_bump(&g, 30.0);
    let r = check_thm_convex(&u, 9.0).unwrap();
    assert_eq!(r.theorem, TheoremId::ThmConvex);
    assert!((r.hypothesis("obstacle_ratio").unwrap().value - 1.5).abs() < 1e-12);
    assert!((r.hypothesis("exponent_floor").unwrap().bound - 9.0).abs() < 1e-12);
    assert!(r.verdict, "{r:?}");
    assert!(check_thm_ball(&u, 9.0).is_err());
}

#[test]
fn symmetric_examples() {
    let g = ball_grid(1.0 / 16.0);
    let u = sym_bump(&g, 45.0);
    let r = check_thm_sym(&u, 3.0).unwrap();
    // p = 1 + 4/d is admitted at equality
    assert!(r.hypothesis("exponent_floor").unwrap().satisfied);
    assert!(r.hypothesis("energy").unwrap().value < 0.0);
    assert!(r.verdict, "{r:?}");

    let even = ComplexField::from_fn(g.clone(), |x| {
        Complex64::new(45.0 * x[1] * (-((x[0] * x[0] + (x[1] - 2.0).powi(2)) / 0.4)).exp(), 0.0)
    });
    let r = check_thm_sym(&even, 3.0).unwrap();
    assert!(!r.hypothesis("antisymmetry_defect").unwrap().satisfied);
    assert!(!r.verdict);

    // small data fail the energy sign only
    let r = check_thm_sym(&sym_bump(&g, 0.5), 3.0).unwrap();
    assert!(!r.hypothesis("energy").unwrap().satisfied);
    assert_eq!(r.status, Status::NotSatisfied);

    // below the mass-critical exponent there is nothing conjectural about it
    let r = check_thm_sym(&u, 2.5).unwrap();
    assert_eq!(r.status, Status::NotSatisfied);
}

#[test]
fn conjectural_label_above_mass_critical() {
    let r = ball_report(2, 4.0, 1.0, &summary(1.0, -1.0)).unwrap();
    assert_eq!(r.status, Status::Conjectural);
    assert!(!r.verdict);
}

#[test]
fn scaling_beyond_lambda_star_gives_blowup_data() {
    let g = ball_grid(1.0 / 16.0);
    let u = sym_bump(&g, 1.0);
    let p = 5.0;
    let lam = check_thm_ball(&u, p).unwrap().lambda_star.unwrap();
    assert!(lam > 1.0);
    assert!(check_thm_ball(&u.scaled(1.05 * lam), p).unwrap().verdict);
    assert!(!check_thm_ball(&u.scaled(0.95 * lam), p).unwrap().verdict);
    let s = DataSummary::of(&u.scaled(lam), p);
    assert!((s.energy + s.mass / 8.0).abs() < 1e-9 * s.grad_sq);
    assert!(lambda_star(&DataSummary { lp1: 0.0, ..s }, p, 0.0).is_none());
}

#[test]
fn threshold_needs_positive_sc() {
    let q23 = solve_ground_state(2, 3.0, 1e-10).unwrap();
    assert!(threshold_report(3.0, &summary(1.0, 1.0), &q23).is_err());
    let q33 = solve_ground_state(3, 3.0, 1e-10).unwrap();
    assert!(threshold_report(2.9, &summary(1.0, 1.0), &q33).is_err());
}

#[test]
fn ground_state_sits_exactly_on_the_threshold() {
    let q = solve_ground_state(3, 3.0, 1e-10).unwrap();
    let s = DataSummary { mass: q.mass, energy: q.energy, grad_sq: q.grad_sq, lp1: 0.0, upsilon2: 0.0 };
    let r = threshold_report(3.0, &s, &q).unwrap();
    let (me, gn) = (r.hypothesis("mass_energy").unwrap(), r.hypothesis("mass_gradient").unwrap());
    // s_c = 1/2: M E against M[Q] E[Q]
    assert!((me.bound - q.mass * q.energy).abs() < 1e-12 * me.bound);
    assert!((me.value - me.bound).abs() < 1e-12 * me.bound);
    assert!((gn.value - gn.bound).abs() < 1e-12 * gn.bound);
    assert!(!r.verdict);
    assert!(r.margins.is_none());
}

#[test]
fn large_scaled_data_pass_the_threshold() {
    let q = solve_ground_state(2, 5.0, 1e-10).unwrap();
    let g = ball_grid(1.0 / 16.0);
    let u = sym_bump(&g, 1.0);
    let r = check_threshold(&u, &q, 5.0).unwrap();
    assert!(!r.verdict);
    let big = u.scaled(20.0);
    let r = check_threshold(&big, &q, 5.0).unwrap();
    assert!(r.verdict, "{r:?}");
    let m = r.margins.unwrap();
    // negative energy: maximal first margin
    assert_eq!(m.delta1, 1.0);
    assert!(m.delta2 > 0.0);
    // exact phase invariance up to rounding
    let rot = check_threshold(&big.rotated(0.7), &q, 5.0).unwrap();
    for (a, b) in r.hypotheses.iter().zip(&rot.hypotheses) {
        assert!((a.value - b.value).abs() < 1e-12 * a.value.abs());
        assert_eq!(a.satisfied, b.satisfied);
    }
    let q3 = solve_ground_state(3, 3.0, 1e-8).unwrap();
    assert!(check_threshold(&u, &q3, 3.0).is_err());
}

#[test]
fn threshold_function_geometry() {
    for (d, p) in [(2, 5.0), (3, 3.0), (2, 4.0)] {
        let q = solve_ground_state(d, p, 1e-10).unwrap();
        let c = gn_constant(&q).unwrap();
        let tq = threshold_quantities(&q).unwrap();
        // f'(x1) = 0: x1^{k-2} = (p+1)/(k C) with k = d(p-1)/2
        let k = d as f64 * (p - 1.0) / 2.0;
        let x1 = ((p + 1.0) / (k * c)).powf(1.0 / (k - 2.0));
        assert!((tq.x1 - x1).abs() < 1e-8 * x1, "d={d} p={p}: {} vs {x1}", tq.x1);
        let f = |x: f64| threshold_function(x, c, d, p);
        let n = 400;
        for i in 1..n {
            let (a, b) = (x1 * i as f64 / n as f64, x1 * (i + 1) as f64 / n as f64);
            assert!(f(b) > f(a));
            let (a, b) = (x1 * (1.0 + i as f64 / n as f64), x1 * (1.0 + (i + 1) as f64 / n as f64));
            assert!(f(b) < f(a));
        }
    }
}

#[test]
fn delta_margins_by_definition() {
    let q = solve_ground_state(3, 3.0, 1e-10).unwrap();
    let tq = threshold_quantities(&q).unwrap();
    // s_c = 1/2: M^{1/2} E^{1/2} = 0.8 Q-product with M = M[Q], E = 0.64 E[Q]
    let s = DataSummary { mass: q.mass, energy: 0.64 * q.energy, grad_sq: 4.0 * q.grad_sq, lp1: 0.0, upsilon2: 0.0 };
    let (d1, d2) = delta_margins_of(&s, &q).unwrap().unwrap();
    assert!((d1 - 0.2).abs() < 1e-12, "{d1}");
    assert!(d2 > 0.0 && d2 < 1.0);
    let c = gn_constant(&q).unwrap();
    let x2 = (1.0 + d2) * tq.x1;
    let lhs = threshold_function(x2, c, 3, 3.0);
    let rhs = 0.8 * threshold_function(tq.x1, c, 3, 3.0);
    assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());

    // below the gradient threshold: no margins
    let small = DataSummary { grad_sq: 0.25 * q.grad_sq, ..s };
    assert!(delta_margins_of(&small, &q).unwrap().is_none());

    let tiny = delta2_of(1e-10, &q).unwrap();
    assert!(tiny > 0.0 && tiny < 1e-4, "{tiny}");
    assert!(delta2_of(0.3, &q).unwrap() > delta2_of(0.2, &q).unwrap());
}

#[test]
fn root_finder_meets_the_level_set() {
    let q = solve_ground_state(2, 5.0, 1e-10).unwrap();
    let c = gn_constant(&q).unwrap();
    let x1 = threshold_quantities(&q).unwrap().x1;
    let fmax = threshold_function(x1, c, 2, 5.0);
    for frac in [0.9, 0.5, 0.0, -3.0] {
        let level = frac * fmax;
        let x2 = threshold_root(level, x1, c, 2, 5.0).unwrap();
        assert!(x2 > x1);
        assert!((threshold_function(x2, c, 2, 5.0) - level).abs() < 1e-10 * fmax);
    }
    assert!(threshold_root(1.1 * fmax, x1, c, 2, 5.0).is_err());
}

fn row(t: f64, mass: f64, grad_sq: f64) -> DiagnosticsRow {
    DiagnosticsRow { t, mass, grad_sq, gamma: vec![0.0; 3], rhs_gamma: vec![0.0; 3], ..Default::default() }
}

#[test]
fn monitor_rules() {
    let q = solve_ground_state(3, 3.0, 1e-10).unwrap();
    let empty = DiagnosticsSeries { dim: 3, ..Default::default() };
    let m = monitor_threshold(&empty, &q, None).unwrap();
    assert!(m.holds && m.vacuous);

    let big = 4.0 * q.grad_sq;
    let s = DiagnosticsSeries {
        dim: 3,
        rows: vec![row(0.0, q.mass, big), row(0.1, q.mass, 2.0 * q.grad_sq), row(0.2, q.mass, 0.5 * q.grad_sq)],
        ..Default::default()
    };
    let m = monitor_threshold(&s, &q, None).unwrap();
    assert!(!m.holds);
    assert_eq!(m.first_failure_t, Some(0.2));
    assert_eq!(m.rows_checked, 3);
    // ratio is (grad_sq / grad_sq[Q])^{1/4} at equal mass
    assert!((m.min_ratio - 0.5f64.powf(0.25)).abs() < 1e-9);
    // rows after the detection time are ignored
    let m = monitor_threshold(&s, &q, Some(0.15)).unwrap();
    assert!(m.holds && !m.vacuous);
    assert_eq!(m.rows_checked, 2);

    let small = DiagnosticsSeries { dim: 3, rows: vec![row(0.0, q.mass, 0.1 * q.grad_sq)], ..Default::default() };
    let m = monitor_threshold(&small, &q, None).unwrap();
    assert_eq!(m.first_failure_t, Some(0.0));
}

#[test]
fn theorem_ids_parse() {
    for (s, id) in [("ball", TheoremId::ThmBall), ("THM_CONVEX", TheoremId::ThmConvex), ("thm-sym", TheoremId::ThmSym), ("threshold", TheoremId::ThmThreshold)] {
        assert_eq!(s.parse::<TheoremId>().unwrap(), id);
    }
    assert!("nope".parse::<TheoremId>().is_err());
}

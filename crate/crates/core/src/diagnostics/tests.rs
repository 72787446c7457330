use std::sync::OnceLock;

use super::*;
use crate::dynamics::integrate_state;
use crate::linalg::expm;
use crate::perturbation::{case1_bump, case2_bump, combination, perturbed};
use crate::potential::Polynomial;
use crate::shooting::{solve_asymmetric_pulse, solve_front, solve_symmetric_pulse, ShootingOptions};
use approx::assert_relative_eq;
use proptest::prelude::*;

const A: f64 = 0.25;

fn nagumo() -> PotentialModel {
    PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, A / 2.0, -(1.0 + A) / 3.0, 0.25]))
}

fn cubic() -> PotentialModel {
    PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, 0.5, -1.0 / 3.0]))
}

fn cp(model: &PotentialModel, e: &[f64]) -> CriticalPoint {
    CriticalPoint::refine(model, e).unwrap()
}

fn front() -> &'static ConnectionSolution {
    static SOL: OnceLock<ConnectionSolution> = OnceLock::new();
    SOL.get_or_init(|| {
        let m = nagumo();
        let p = FrontProblem::new(m.clone(), cp(&m, &[1.0]), cp(&m, &[0.0]), (0.05, 1.0)).unwrap();
        solve_front(&p, None, &ShootingOptions::default()).unwrap()
    })
}

fn pulse() -> &'static ConnectionSolution {
    static SOL: OnceLock<ConnectionSolution> = OnceLock::new();
    SOL.get_or_init(|| {
        let m = cubic();
        solve_symmetric_pulse(&m, &cp(&m, &[0.0]), None, &ShootingOptions::default()).unwrap()
    })
}

fn terminal() -> Vec<f64> {
    vec![0.8, -0.6]
}

fn front_adjoint() -> &'static AdjointSolution {
    static ADJ: OnceLock<AdjointSolution> = OnceLock::new();
    ADJ.get_or_init(|| adjoint_integrate(front(), &terminal(), None, &DiagnosticsOptions::default()).unwrap())
}

/// `<mismatch(V + eps W) - mismatch(V - eps W), terminal> / (2 eps)`.
fn fd_directional(w: &crate::perturbation::BumpPerturbation, eps: f64) -> f64 {
    let sol = front();
    let base = front_problem(sol);
    let at = |a: f64| -> Vec<f64> {
        let p = base.with_model(perturbed(&sol.model, w, a));
        let map = FrontMap {
            problem: &p,
            unstable: sol.unstable_size,
            stable: sol.stable_size.unwrap(),
            opts: &sol.options,
        };
        map.mismatch(&sol.b_u, sol.b_s.as_ref().unwrap(), sol.transit, sol.speed).unwrap()
    };
    let (p, m) = (at(eps), at(-eps));
    let diff: Vec<f64> = p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    dot(&diff, &terminal())
}

#[test]
fn nagumo_front_is_transverse() {
    let opts = DiagnosticsOptions::default();
    let r = transversality_front(front(), &opts).unwrap();
    assert_eq!(r.dims, [2, 2]);
    assert_eq!(r.rank, 2);
    assert_eq!(r.verdict, Verdict::Transverse);
    assert!(r.margin > 1e-3, "{}", r.margin);
    assert_eq!(r.details.columns, vec!["xi".to_string(), "c".to_string()]);
    // xi column is the field at the endpoint
    assert!(r.details.xi_column_fd_error.unwrap() < 1e-7);
    let dup = r.with_column_copied(0, 1, &opts);
    assert_eq!(dup.verdict, Verdict::Degenerate);
    assert!(dup.rank < 2);
}

#[test]
fn sech_pulse_is_elementary() {
    let opts = DiagnosticsOptions::default();
    let r = elementarity_symmetric(pulse(), &opts).unwrap();
    assert_eq!(r.dims, [1, 1]);
    assert_eq!(r.verdict, Verdict::Elementary);
    assert_relative_eq!(r.jacobian[0][0], -0.75, max_relative = 1e-6);
    assert!((r.margin - 0.75).abs() <= 0.0075);
    assert!(r.details.xi_column_fd_error.unwrap() < 1e-7);
    assert!(matches!(
        elementarity_symmetric(front(), &opts),
        Err(DiagnosticsError::Precondition(_))
    ));
    assert!(matches!(transversality_front(pulse(), &opts), Err(DiagnosticsError::Precondition(_))));
}

#[test]
fn scalar_asymmetric_report_flags_symmetric_input() {
    let m = cubic();
    let sol = solve_asymmetric_pulse(&m, &cp(&m, &[0.0]), None, &ShootingOptions::default()).unwrap();
    let opts = DiagnosticsOptions::default();
    let r = transversality_asymmetric(&sol, &opts).unwrap();
    assert_eq!(r.dims, [1, 1]);
    assert_eq!(r.target_rank, 1);
    assert_eq!(r.details.symmetric_input, Some(true));
    assert_eq!(r.verdict, Verdict::Transverse);
}

#[test]
fn symmetric_pulse_level_set_report() {
    let opts = DiagnosticsOptions::default();
    let r = level_set_transversality_symmetric(pulse(), &opts).unwrap();
    assert_eq!(r.kind, ConnectionKind::AsymmetricPulse);
    assert_eq!(r.details.symmetric_input, Some(true));
    assert_eq!(r.verdict, Verdict::Transverse);
    assert!(matches!(
        level_set_transversality_symmetric(front(), &opts),
        Err(DiagnosticsError::Precondition(_))
    ));
}

#[test]
fn duplicated_unknown_column_is_degenerate() {
    let opts = DiagnosticsOptions::default();
    let j = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 1.0, 0.0, 1.5, 0.0, -0.3, 0.4, -0.3]);
    let cols = vec!["b_u[0]".into(), "b_s[0]".into(), "xi".into()];
    let r = classify(ConnectionKind::AsymmetricPulse, j, 3, cols, &opts);
    assert_eq!(r.verdict, Verdict::Degenerate);
    assert_eq!(r.rank, 2);
}

#[test]
fn near_threshold_is_inconclusive() {
    let opts = DiagnosticsOptions::default();
    let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2e-6]);
    let r = classify(ConnectionKind::Front, j, 2, vec!["xi".into(), "c".into()], &opts);
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert_relative_eq!(r.margin, 2e-6);
}

#[test]
fn zero_terminal_gives_zero_adjoint() {
    let adj = adjoint_integrate(front(), &[0.0, 0.0], None, &DiagnosticsOptions::default()).unwrap();
    assert!(adj.samples().iter().all(|(_, p, q)| p[0] == 0.0 && q[0] == 0.0));
}

#[test]
fn adjoint_at_rest_is_a_matrix_exponential() {
    let m = PotentialModel::new(Polynomial::isotropic_quadratic(1));
    let base = integrate_state(&m, 0.0, &[0.0, 0.0], (0.0, 3.0), &IntegrateOptions::default(), &[])
        .unwrap()
        .trajectory;
    let t1 = [0.3, -1.1];
    let adj = adjoint_along(&m, &base, &t1, (3.0, 0.0), &DiagnosticsOptions::default().adjoint).unwrap();
    // A^T for A = ((0, 1), (1, 0))
    let at = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    for xi in [0.0, 0.5, 1.7, 2.9] {
        let exact = expm(&(-(xi - 3.0) * &at)) * crate::linalg::to_dvector(&t1);
        let (p, q) = adj.at(xi).unwrap();
        assert_relative_eq!(p[0], exact[0], max_relative = 1e-10);
        assert_relative_eq!(q[0], exact[1], max_relative = 1e-10);
    }
}

#[test]
fn adjoint_pairing_is_conserved() {
    let sol = front();
    let opts = DiagnosticsOptions::default();
    let adj = front_adjoint();
    assert!(adj.pairing_drift(&sol.model, &sol.trajectory) <= 1e-8);
    let w0 = [0.2, -0.7];
    let lin = linearized_along(&sol.model, &sol.trajectory, &w0, (0.0, sol.transit), &opts.adjoint).unwrap();
    let p0 = {
        let (p, q) = adj.at(0.0).unwrap();
        p[0] * w0[0] + q[0] * w0[1]
    };
    for (t, w) in lin.times().iter().zip(lin.states()) {
        let (p, q) = adj.at(*t).unwrap();
        assert!((p[0] * w[0] + q[0] * w[1] - p0).abs() <= 1e-8 * (1.0 + p0.abs()));
    }
}

#[test]
fn case3_exclusion_identity() {
    // a terminal vector orthogonal to U_1'(xi_1) keeps <(phi, psi), U_1'> = 0,
    // which rules out psi = alpha u_1' with constant nonzero alpha
    let sol = front();
    let xi1 = sol.transit;
    let f1 = vector_field_state(&sol.model, sol.speed, &sol.trajectory.state_at(xi1).unwrap());
    let n = norm(&f1);
    let t1 = [-f1[1] / n, f1[0] / n];
    let adj = adjoint_integrate(sol, &t1, None, &DiagnosticsOptions::default()).unwrap();
    let c = sol.speed;
    let (a, b) = (0.2 * xi1, 0.8 * xi1);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..=200 {
        let t = a + (b - a) * k as f64 / 200.0;
        let y = sol.trajectory.state_at(t).unwrap();
        let (p, q) = adj.at(t).unwrap();
        let f = vector_field_state(&sol.model, c, &y);
        worst = worst.max((p[0] * f[0] + q[0] * f[1]).abs());
        num += q[0] * y[1];
        den += y[1] * y[1];
    }
    assert!(worst <= 1e-8, "{worst}");
    // with psi = alpha u', the pairing equals c alpha |u'|^2
    let alpha = num / den;
    let mut fit: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..=200 {
        let t = a + (b - a) * k as f64 / 200.0;
        let y = sol.trajectory.state_at(t).unwrap();
        let (_, q) = adj.at(t).unwrap();
        fit = fit.max((q[0] - alpha * y[1]).abs());
        scale = scale.max(q[0].abs());
        let implied = c * alpha * y[1] * y[1];
        if fit <= 1e-6 * scale {
            assert!(implied.abs() <= 1e-8);
        }
    }
    assert!(alpha.abs() <= 1e-8 || fit > 1e-6 * scale);
}

#[test]
fn melnikov_vanishes_for_flat_or_distant_perturbations() {
    let sol = front();
    let adj = front_adjoint();
    let opts = DiagnosticsOptions::default();
    let constant = PotentialModel::new(Polynomial::univariate(&[3.0]));
    assert_eq!(melnikov_sensitivity(&sol.trajectory, adj, &constant, &opts), 0.0);
    let far = PotentialModel::new(case1_bump(&[3.0], 0.5, &[1.0]).unwrap());
    assert_eq!(melnikov_sensitivity(&sol.trajectory, adj, &far, &opts), 0.0);
}

#[test]
fn melnikov_matches_finite_differences() {
    let sol = front();
    let adj = front_adjoint();
    let opts = DiagnosticsOptions::default();
    for w in [
        case1_bump(&[0.5], 0.2, &[1.0]).unwrap(),
        case2_bump(&[0.4], 0.15).unwrap(),
        case1_bump(&[0.7], 0.1, &[-1.0]).unwrap(),
    ] {
        let s = melnikov_sensitivity(&sol.trajectory, adj, &PotentialModel::new(w.clone()), &opts);
        let fd = fd_directional(&w, 1e-4);
        assert!(s.abs() > 1e-4, "{s}");
        assert_relative_eq!(s, fd, max_relative = 1e-4);
    }
}

#[test]
fn case2_integration_by_parts() {
    // psi = alpha u' in d = 1, so int W'(u) psi = -int alpha' W(u)
    let sol = front();
    let adj = front_adjoint();
    let opts = DiagnosticsOptions::default();
    let w = case2_bump(&[0.5], 0.2).unwrap();
    let wm = PotentialModel::new(w.clone());
    let direct = melnikov_sensitivity(&sol.trajectory, adj, &wm, &opts);
    let c = sol.speed;
    let (nodes, weights) = gauss_legendre_unit();
    let n = 4000;
    let h = sol.transit / n as f64;
    let mut other = 0.0;
    for k in 0..n {
        for (x, wt) in nodes.iter().zip(&weights) {
            let t = h * (k as f64 + x);
            let y = sol.trajectory.state_at(t).unwrap();
            let (p, q) = adj.at(t).unwrap();
            let (u, du) = (y[0], y[1]);
            let dpsi = -p[0] + c * q[0];
            let ddu = sol.model.gradient(&[u])[0] - c * du;
            let dalpha = (dpsi * du - q[0] * ddu) / (du * du);
            other -= wt * h * dalpha * wm.value(&[u]);
        }
    }
    assert!(direct.abs() > 1e-3);
    assert_relative_eq!(direct, other, max_relative = 1e-6);
}

#[test]
fn tangency_in_the_anisotropic_quadratic() {
    let m = PotentialModel::new(Polynomial::diagonal_quadratic(&[1.0, 4.0]));
    let e = cp(&m, &[0.0, 0.0]);
    let opts = IntegrateOptions {
        rtol: 1e-12,
        atol: 1e-30,
        ..IntegrateOptions::default()
    };
    // explicit stable solution a e^{-xi} (e1, -e1) + b e^{-2 xi} (e2, -2 e2)
    let exact = |a: f64, b: f64, xi: f64| -> Vec<f64> {
        let (p, q) = ((-xi).exp(), (-2.0 * xi).exp());
        vec![a * p, b * q, -a * p, -2.0 * b * q]
    };
    let orbit = |a: f64, b: f64| {
        integrate_state(&m, 0.0, &exact(a, b, 30.0), (30.0, 0.0), &opts, &[]).unwrap().trajectory
    };
    let t = orbit(0.01, 0.02);
    let r = tangency_of(&m, &t, &e, End::Right, &TangencyOptions::default()).unwrap();
    assert_eq!(r.verdict, TangencyVerdict::SlowTangent);
    assert!((r.fitted_rate.unwrap() + 1.0).abs() <= 1e-3);
    assert!(r.direction_cosine.unwrap() >= 1.0 - 1e-4);
    let strong = orbit(0.0, 0.02);
    let r = tangency_of(&m, &strong, &e, End::Right, &TangencyOptions::default()).unwrap();
    assert_eq!(r.verdict, TangencyVerdict::Fast);
    assert_relative_eq!(r.fitted_rate.unwrap(), -2.0, max_relative = 1e-3);

    let iso = PotentialModel::new(Polynomial::isotropic_quadratic(2));
    let ei = cp(&iso, &[0.0, 0.0]);
    let r = tangency_of(&iso, &t, &ei, End::Right, &TangencyOptions::default()).unwrap();
    assert_eq!(r.verdict, TangencyVerdict::Unavailable);

    let short = integrate_state(&m, 0.0, &exact(0.01, 0.0, 0.0), (0.0, 1.0), &opts, &[]).unwrap().trajectory;
    assert!(matches!(
        tangency_of(&m, &short, &e, End::Right, &TangencyOptions::default()),
        Err(DiagnosticsError::Window(_))
    ));
}

#[test]
fn nagumo_front_approaches_along_slow_directions() {
    let sol = front();
    for end in [End::Left, End::Right] {
        let r = tangency_check(sol, end, &TangencyOptions::default()).unwrap();
        assert_eq!(r.verdict, TangencyVerdict::SlowTangent, "{r:?}");
        assert!((r.fitted_rate.unwrap() - r.expected_rate.unwrap()).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn melnikov_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let sol = front();
        let adj = front_adjoint();
        let opts = DiagnosticsOptions::default();
        let w1 = case1_bump(&[0.5], 0.2, &[1.0]).unwrap();
        let w2 = case2_bump(&[0.35], 0.1).unwrap();
        let s = |w: PotentialModel| melnikov_sensitivity(&sol.trajectory, adj, &w, &opts);
        let s1 = s(PotentialModel::new(w1.clone()));
        let s2 = s(PotentialModel::new(w2.clone()));
        let both = s(combination(1, vec![(alpha, w1), (beta, w2)]));
        prop_assert!((both - alpha * s1 - beta * s2).abs() <= 1e-10 * (1.0 + both.abs()));
    }
}

proptest! {
    #[test]
    fn rank_verdict_is_scale_and_order_invariant(
        entries in proptest::collection::vec(-0.3f64..0.3, 12),
        rows in proptest::collection::vec(-3i32..=3, 4),
        cols in proptest::collection::vec(-3i32..=3, 3),
        dup in proptest::bool::ANY,
    ) {
        let opts = DiagnosticsOptions::default();
        let mut j = DMatrix::from_fn(4, 3, |i, k| entries[3 * i + k] + if i == k { 1.0 } else { 0.0 });
        if dup {
            let c0 = j.column(0).clone_owned();
            j.set_column(2, &c0);
        }
        let labels = || vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let base = classify(ConnectionKind::Front, j.clone(), 3, labels(), &opts);
        let scaled = DMatrix::from_fn(4, 3, |i, k| j[(i, k)] * 2f64.powi(rows[i] + cols[k]));
        let s = classify(ConnectionKind::Front, scaled, 3, labels(), &opts);
        prop_assert_eq!(base.verdict, s.verdict);
        let mut perm = j.clone();
        perm.swap_columns(0, 2);
        perm.swap_columns(1, 2);
        let p = classify(ConnectionKind::Front, perm, 3, labels(), &opts);
        prop_assert_eq!(base.verdict, p.verdict);
        prop_assert_eq!(base.rank, p.rank);
        prop_assert_eq!(base.verdict, if dup { Verdict::Degenerate } else { Verdict::Transverse });
    }
}

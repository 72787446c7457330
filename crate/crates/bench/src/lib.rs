//! Shared fixtures for the benchmarks.

use wavefront::shooting::solve_front;
use wavefront::potential::Polynomial;
use wavefront::{ConnectionSolution, CriticalPoint, FrontProblem, PotentialModel, ShootingOptions};

/// Nagumo potential with detuning `a`; fronts run from `u = 1` to `u = 0`.
pub fn nagumo(a: f64) -> PotentialModel {
    PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, a / 2.0, -(1.0 + a) / 3.0, 0.25]))
}

/// `u^2/2 - u^3/3`, whose pulse is `1.5 sech^2(xi/2)`.
pub fn cubic() -> PotentialModel {
    PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, 0.5, -1.0 / 3.0]))
}

pub fn critical(model: &PotentialModel, guess: &[f64]) -> CriticalPoint {
    CriticalPoint::refine(model, guess).expect("critical point")
}

pub fn nagumo_problem(a: f64) -> FrontProblem {
    let m = nagumo(a);
    FrontProblem::new(m.clone(), critical(&m, &[1.0]), critical(&m, &[0.0]), (0.05, 1.0)).expect("valid problem")
}

pub fn nagumo_front(a: f64) -> ConnectionSolution {
    solve_front(&nagumo_problem(a), None, &ShootingOptions::default()).expect("front")
}

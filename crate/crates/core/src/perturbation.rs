//! Localized bump perturbations of the potential and the experiments built
//! on them.
//!
//! All bumps use `rho(r) = exp(1 - 1/(1 - r^2))` on `|r| < 1`, zero
//! outside, scaled to the ball of radius `eps`: `rho_eps(x) = rho(|x|/eps)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{front_jacobian, melnikov_vector, DiagnosticsError, DiagnosticsOptions};
use crate::linalg::{distance, dot, norm, pseudo_inverse, to_dvector};
use crate::potential::{CriticalPoint, Potential, PotentialConfig, PotentialError, PotentialModel};
use crate::shooting::{solve_front, ConnectionKind, ConnectionSolution, FrontGuess, ShootingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("invalid perturbation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// `rho(s)` with `q = rho'(s)/s` and `p = q'(s)/s`, all zero for `|s| >= 1`.
pub fn bump_profile(s: f64) -> (f64, f64, f64) {
    let t = 1.0 - s * s;
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let g = (1.0 - 1.0 / t).exp();
    let q = -2.0 * g / (t * t);
    let p = 4.0 * g * (1.0 - 2.0 * t) / t.powi(4);
    (g, q, p)
}

/// `rho_eps(x)` with gradient and Hessian.
fn radial(x: &[f64], eps: f64) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
    let s = norm(x) / eps;
    if s >= 1.0 {
        return None;
    }
    let (g, q, p) = bump_profile(s);
    let e2 = eps * eps;
    let grad: Vec<f64> = x.iter().map(|xi| q * xi / e2).collect();
    let d = x.len();
    let hess = DMatrix::from_fn(d, d, |i, j| {
        let delta = if i == j { q / e2 } else { 0.0 };
        delta + p * x[i] * x[j] / (e2 * e2)
    });
    Some((g, grad, hess))
}

/// `W(u) = rho_eps(u - center) (n . (u - center))` with a direction `n`
/// (case 1), or `W = rho_eps(u - center)` without one (case 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpPerturbation {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
}

impl BumpPerturbation {
    pub fn validate(&self) -> Result<(), PerturbationError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(PerturbationError::Invalid(format!("bump radius must be positive, got {}", self.radius)));
        }
        if self.center.is_empty() || self.center.iter().any(|x| !x.is_finite()) {
            return Err(PerturbationError::Invalid("bump center must be finite".into()));
        }
        if let Some(n) = &self.direction {
            if n.len() != self.center.len() {
                return Err(PerturbationError::Invalid("direction and center differ in dimension".into()));
            }
            if (norm(n) - 1.0).abs() > 1e-12 {
                return Err(PerturbationError::Invalid("direction must be a unit vector".into()));
            }
        }
        Ok(())
    }

    fn offset(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.center).map(|(a, b)| a - b).collect()
    }

    /// Value, gradient and Hessian; `None` outside the closed support.
    fn evaluate(&self, u: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let x = self.offset(u);
        let (r, gr, hr) = radial(&x, self.radius)?;
        let Some(n) = &self.direction else {
            return Some((r, gr, hr));
        };
        let nx = dot(n, &x);
        let d = x.len();
        let grad: Vec<f64> = (0..d).map(|i| r * n[i] + nx * gr[i]).collect();
        let hess = DMatrix::from_fn(d, d, |i, j| n[i] * gr[j] + gr[i] * n[j] + nx * hr[(i, j)]);
        Some((r * nx, grad, hess))
    }
}

impl Potential for BumpPerturbation {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.evaluate(u).map_or(0.0, |(v, _, _)| v)
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        match self.evaluate(u) {
            Some((_, g, _)) => out.copy_from_slice(&g),
            None => out.iter_mut().for_each(|x| *x = 0.0),
        }
    }

    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        match self.evaluate(u) {
            Some((_, _, h)) => out.copy_from(&h),
            None => out.fill(0.0),
        }
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }
}

pub fn case1_bump(center: &[f64], eps: f64, direction: &[f64]) -> Result<BumpPerturbation, PerturbationError> {
    let b = BumpPerturbation {
        center: center.to_vec(),
        radius: eps,
        direction: Some(direction.to_vec()),
    };
    b.validate()?;
    Ok(b)
}

pub fn case2_bump(center: &[f64], eps: f64) -> Result<BumpPerturbation, PerturbationError> {
    let b = BumpPerturbation {
        center: center.to_vec(),
        radius: eps,
        direction: None,
    };
    b.validate()?;
    Ok(b)
}

/// `V + sum_k a_k W_k`.
#[derive(Debug, Clone)]
pub struct PerturbedPotential {
    pub base: PotentialModel,
    pub terms: Vec<(f64, BumpPerturbation)>,
}

impl Potential for PerturbedPotential {
    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.terms.iter().fold(self.base.value(u), |acc, (a, w)| acc + a * w.value(u))
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        self.base.gradient_into(u, out);
        for (a, w) in &self.terms {
            if let Some((_, g, _)) = w.evaluate(u) {
                out.iter_mut().zip(&g).for_each(|(o, gi)| *o += a * gi);
            }
        }
    }

    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.base.hessian(u));
        for (a, w) in &self.terms {
            if let Some((_, _, h)) = w.evaluate(u) {
                *out += h * *a;
            }
        }
    }

    fn has_analytic_derivatives(&self) -> bool {
        self.base.mode() == crate::potential::DerivativeMode::Analytic
    }
}

/// `V + amplitude W`.
pub fn perturbed(base: &PotentialModel, w: &BumpPerturbation, amplitude: f64) -> PotentialModel {
    PotentialModel::new(PerturbedPotential {
        base: base.clone(),
        terms: vec![(amplitude, w.clone())],
    })
}

/// Weighted sum of bumps on a zero base.
pub fn combination(dimension: usize, terms: Vec<(f64, BumpPerturbation)>) -> PotentialModel {
    PotentialModel::new(PerturbedPotential {
        base: PotentialModel::new(crate::potential::Polynomial::new(dimension, Vec::new()).expect("empty polynomial")),
        terms,
    })
}

/// `V(u) - (eps/2) ((u - e) . u_1)^2 rho(|u - e| / delta)`.
#[derive(Debug, Clone)]
pub struct EigenvalueSplitter {
    base: PotentialModel,
    e: Vec<f64>,
    u1: Vec<f64>,
    amplitude: f64,
    delta: f64,
}

impl EigenvalueSplitter {
    /// The quadratic correction, or `None` outside the ball.
    fn correction(&self, u: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let x: Vec<f64> = u.iter().zip(&self.e).map(|(a, b)| a - b).collect();
        let (r, gr, hr) = radial(&x, self.delta)?;
        let a = self.amplitude;
        let p = dot(&x, &self.u1);
        let d = x.len();
        let value = -0.5 * a * p * p * r;
        let grad: Vec<f64> = (0..d).map(|i| -a * p * self.u1[i] * r - 0.5 * a * p * p * gr[i]).collect();
        let hess = DMatrix::from_fn(d, d, |i, j| {
            -a * (self.u1[i] * self.u1[j] * r
                + p * (self.u1[i] * gr[j] + gr[i] * self.u1[j])
                + 0.5 * p * p * hr[(i, j)])
        });
        Some((value, grad, hess))
    }
}

impl Potential for EigenvalueSplitter {
    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn value(&self, u: &[f64]) -> f64 {
        let v = self.base.value(u);
        match self.correction(u) {
            Some((w, _, _)) => v + w,
            None => v,
        }
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        self.base.gradient_into(u, out);
        if let Some((_, g, _)) = self.correction(u) {
            out.iter_mut().zip(&g).for_each(|(o, gi)| *o += gi);
        }
    }

    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.base.hessian(u));
        if let Some((_, _, h)) = self.correction(u) {
            *out += h;
        }
    }

    fn has_analytic_derivatives(&self) -> bool {
        self.base.mode() == crate::potential::DerivativeMode::Analytic
    }
}

/// Lowers the smallest Hessian eigenvalue at the minimum `e` by
/// `amplitude` inside the ball of radius `delta`, leaving the others.
pub fn smallest_eigenvalue_splitter(
    model: &PotentialModel,
    e: &CriticalPoint,
    amplitude: f64,
    delta: f64,
) -> Result<PotentialModel, PerturbationError> {
    if !e.is_minimum() {
        return Err(PerturbationError::Invalid("the splitter needs a minimum".into()));
    }
    let mu1 = e.hessian_eigenvalues[0];
    if !(0.0..mu1).contains(&amplitude) {
        return Err(PerturbationError::Invalid(format!(
            "amplitude must lie in [0, mu_1) = [0, {mu1}), got {amplitude}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(PerturbationError::Invalid(format!("delta must be positive, got {delta}")));
    }
    if amplitude == 0.0 {
        return Ok(model.clone());
    }
    Ok(PotentialModel::new(EigenvalueSplitter {
        base: model.clone(),
        e: e.e.clone(),
        u1: e.hessian_eigenvectors[0].clone(),
        amplitude,
        delta,
    }))
}

/// A bump with its amplitude, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedBump {
    pub amplitude: f64,
    #[serde(flatten)]
    pub bump: BumpPerturbation,
}

/// `{ "base": ..., "perturbations": [...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbedConfig {
    pub base: PotentialConfig,
    #[serde(default)]
    pub perturbations: Vec<WeightedBump>,
}

impl PerturbedConfig {
    pub fn build(&self) -> Result<PotentialModel, PerturbationError> {
        let base = self.base.build()?;
        if self.perturbations.is_empty() {
            return Ok(base);
        }
        let mut terms = Vec::with_capacity(self.perturbations.len());
        for p in &self.perturbations {
            p.bump.validate()?;
            if p.bump.center.len() != base.dimension() {
                return Err(PerturbationError::Invalid("bump dimension differs from the base".into()));
            }
            terms.push((p.amplitude, p.bump.clone()));
        }
        Ok(PotentialModel::new(PerturbedPotential { base, terms }))
    }
}

/// Geometric ladder `1e-6, 1e-5, ..., 1e-2`.
pub fn default_ladder() -> Vec<f64> {
    (0..5).map(|k| 10f64.powi(k - 6)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub amplitude: f64,
    pub converged: bool,
    pub speed: Option<f64>,
    pub speed_drift: Option<f64>,
    /// `max |u_eps(xi) - u(xi)|` on the base transit, both orbits leaving
    /// the unstable boundary at `xi = 0`.
    pub profile_drift: Option<f64>,
    pub mismatch: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub base_speed: f64,
    /// `dc/d eps` from the Melnikov vector and the front Jacobian.
    pub predicted_slope: f64,
    pub rungs: Vec<Rung>,
    /// Largest amplitude below which every rung converged.
    pub survival_amplitude: Option<f64>,
}

/// `dc/d eps = -(J^+ m_W)_c` at a transverse front.
pub fn predicted_speed_slope(
    sol: &ConnectionSolution,
    w: &BumpPerturbation,
    opts: &DiagnosticsOptions,
) -> Result<f64, PerturbationError> {
    let (j, _, _) = front_jacobian(sol, opts)?;
    let m = melnikov_vector(sol, &PotentialModel::new(w.clone()), opts)?;
    let dx = pseudo_inverse(&j, opts.rank_tol) * to_dvector(&m);
    Ok(-dx[dx.len() - 1])
}

fn profile_drift(base: &ConnectionSolution, other: &ConnectionSolution) -> f64 {
    let d = base.model.dimension();
    base.trajectory
        .xi()
        .iter()
        .filter(|t| **t >= 0.0 && **t <= base.transit)
        .filter_map(|t| {
            let a = base.trajectory.state_at(*t)?;
            let b = other.trajectory.state_at(*t)?;
            Some(distance(&a[..d], &b[..d]))
        })
        .fold(0.0, f64::max)
}

/// Re-solves a front under `V + a W` for each amplitude, warm-started from
/// the unperturbed solution.
pub fn robustness_experiment(
    sol: &ConnectionSolution,
    w: &BumpPerturbation,
    amplitudes: &[f64],
    opts: &DiagnosticsOptions,
) -> Result<RobustnessReport, PerturbationError> {
    if sol.kind != ConnectionKind::Front {
        return Err(PerturbationError::Invalid("robustness experiments need a front".into()));
    }
    w.validate()?;
    let problem = crate::diagnostics::front_problem(sol);
    let slope = predicted_speed_slope(sol, w, opts)?;
    let guess = FrontGuess {
        b_u: sol.b_u.clone(),
        b_s: sol.b_s.clone().expect("fronts carry b_s"),
        xi: sol.transit,
        c: sol.speed,
    };
    let rungs: Vec<Rung> = amplitudes
        .par_iter()
        .map(|&a| {
            let p = problem.with_model(perturbed(&sol.model, w, a));
            let out: Result<ConnectionSolution, ShootingError> = solve_front(&p, Some(guess.clone()), &sol.options);
            match out {
                Ok(s) => Rung {
                    amplitude: a,
                    converged: true,
                    speed: Some(s.speed),
                    speed_drift: Some(s.speed - sol.speed),
                    profile_drift: Some(profile_drift(sol, &s)),
                    mismatch: Some(s.mismatch),
                    error: None,
                },
                Err(e) => Rung {
                    amplitude: a,
                    converged: false,
                    speed: None,
                    speed_drift: None,
                    profile_drift: None,
                    mismatch: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..rungs.len()).collect();
    order.sort_by(|&i, &j| rungs[i].amplitude.abs().total_cmp(&rungs[j].amplitude.abs()));
    let survival = order
        .iter()
        .take_while(|&&k| rungs[k].converged)
        .last()
        .map(|&k| rungs[k].amplitude.abs());
    Ok(RobustnessReport {
        base_speed: sol.speed,
        predicted_slope: slope,
        rungs,
        survival_amplitude: survival,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::potential::{fd_gradient, Polynomial};

    fn fd_check(w: &dyn Potential, u: &[f64]) -> (f64, f64) {
        let d = u.len();
        let mut g = vec![0.0; d];
        let mut gf = vec![0.0; d];
        w.gradient(u, &mut g);
        fd_gradient(&|x| w.value(x), u, &mut gf);
        let mut h = DMatrix::zeros(d, d);
        w.hessian(u, &mut h);
        // central differences of the analytic gradient
        let step = 1e-6;
        let mut hf = DMatrix::zeros(d, d);
        for j in 0..d {
            let (mut p, mut m) = (u.to_vec(), u.to_vec());
            p[j] += step;
            m[j] -= step;
            let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
            w.gradient(&p, &mut gp);
            w.gradient(&m, &mut gm);
            for i in 0..d {
                hf[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let eg = g.iter().zip(&gf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (eg, (h - hf).abs().max())
    }

    #[test]
    fn case1_at_center() {
        let w = case1_bump(&[0.5, -1.0], 0.3, &[0.6, 0.8]).unwrap();
        assert_eq!(w.value(&[0.5, -1.0]), 0.0);
        let mut g = vec![0.0; 2];
        w.gradient(&[0.5, -1.0], &mut g);
        assert_relative_eq!(g[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.8, epsilon = 1e-15);
        assert_eq!(w.value(&[0.8, -1.0]), 0.0);
        assert_eq!(w.value(&[0.5, -0.5]), 0.0);
        assert!(case1_bump(&[0.0], 0.3, &[2.0]).is_err());
    }

    #[test]
    fn case1_across_an_orthogonal_line() {
        // along u = center + t e_1 with n = e_2, grad W = rho_eps n
        let w = case1_bump(&[1.0, 2.0], 0.5, &[0.0, 1.0]).unwrap();
        for k in -10..=10 {
            let t = 0.05 * k as f64;
            let u = [1.0 + t, 2.0];
            let mut g = vec![0.0; 2];
            w.gradient(&u, &mut g);
            let (rho, _, _) = bump_profile(t.abs() / 0.5);
            assert_relative_eq!(g[0], 0.0, epsilon = 1e-15);
            assert_relative_eq!(g[1], rho, epsilon = 1e-15);
        }
    }

    #[test]
    fn case2_properties() {
        let w = case2_bump(&[0.0, 0.0], 0.2).unwrap();
        assert_eq!(w.value(&[0.0, 0.0]), 1.0);
        assert_eq!(w.value(&[0.2, 0.0]), 0.0);
        assert_eq!(w.value(&[0.15, 0.15]), 0.0);
        let mut g = vec![1.0; 2];
        w.gradient(&[0.0, 0.0], &mut g);
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(case2_bump(&[0.0], 0.0).is_err());
    }

    #[test]
    fn gradient_scales_like_inverse_radius() {
        let sup = |eps: f64| -> f64 {
            let w = case2_bump(&[0.0], eps).unwrap();
            (0..=2000)
                .map(|k| {
                    let mut g = [0.0];
                    w.gradient(&[eps * (k as f64 / 1000.0 - 1.0)], &mut g);
                    g[0].abs()
                })
                .fold(0.0, f64::max)
        };
        let base = sup(1.0);
        for eps in [0.5, 0.1, 0.01] {
            assert_relative_eq!(sup(eps) * eps, base, max_relative = 1e-3);
        }
    }

    #[test]
    fn splitter_on_isotropic_minimum() {
        let m = PotentialModel::new(Polynomial::isotropic_quadratic(2));
        let e = CriticalPoint::refine(&m, &[0.0, 0.0]).unwrap();
        let p = smallest_eigenvalue_splitter(&m, &e, 0.1, 0.5).unwrap();
        let c = CriticalPoint::classify(&p, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(c.hessian_eigenvalues[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(c.hessian_eigenvalues[1], 1.0, epsilon = 1e-12);
        assert!(norm(&p.gradient(&[0.0, 0.0])) <= 1e-12);
        let same = smallest_eigenvalue_splitter(&m, &e, 0.0, 0.5).unwrap();
        assert_eq!(same.value(&[0.3, 0.1]), m.value(&[0.3, 0.1]));
        assert!(smallest_eigenvalue_splitter(&m, &e, 1.0, 0.5).is_err());
        assert!(smallest_eigenvalue_splitter(&m, &e, -0.1, 0.5).is_err());
    }

    #[test]
    fn splitter_keeps_other_eigenvalues() {
        let m = PotentialModel::new(Polynomial::diagonal_quadratic(&[1.0, 3.0, 5.0]));
        let e = CriticalPoint::refine(&m, &[0.0; 3]).unwrap();
        let p = smallest_eigenvalue_splitter(&m, &e, 0.25, 1.0).unwrap();
        let c = CriticalPoint::classify(&p, &[0.0; 3]).unwrap();
        for (a, b) in c.hessian_eigenvalues.iter().zip([0.75, 3.0, 5.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn config_composes_bumps() {
        let cfg: PerturbedConfig = serde_json::from_str(
            r#"{"base": {"dimension": 1, "monomials": [{"exponents": [2], "coefficient": 0.5}]},
                "perturbations": [{"amplitude": 0.1, "center": [0.0], "radius": 0.5}]}"#,
        )
        .unwrap();
        let m = cfg.build().unwrap();
        assert_relative_eq!(m.value(&[0.0]), 0.1, epsilon = 1e-15);
        assert_eq!(m.value(&[1.0]), 0.5);
        let bad: Result<PerturbedConfig, _> = serde_json::from_str(
            r#"{"base": {"dimension": 1, "monomials": []}, "perturbations": [{"amplitude": 1, "center": [0], "radius": 1, "x": 0}]}"#,
        );
        assert!(bad.is_err());
    }

    fn nagumo_front() -> ConnectionSolution {
        let a = 0.25;
        let m = PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, a / 2.0, -(1.0 + a) / 3.0, 0.25]));
        let (em, ep) = (CriticalPoint::refine(&m, &[1.0]).unwrap(), CriticalPoint::refine(&m, &[0.0]).unwrap());
        let p = crate::shooting::FrontProblem::new(m, em, ep, (0.05, 1.0)).unwrap();
        solve_front(&p, None, &crate::shooting::ShootingOptions::default()).unwrap()
    }

    #[test]
    fn robustness_ladders() {
        let sol = nagumo_front();
        let opts = DiagnosticsOptions::default();

        let off = case1_bump(&[3.0], 0.5, &[1.0]).unwrap();
        let r = robustness_experiment(&sol, &off, &[0.0, 1e-3, 1e-2], &opts).unwrap();
        assert_eq!(r.predicted_slope, 0.0);
        for rung in &r.rungs {
            assert!(rung.converged);
            assert_eq!(rung.speed_drift, Some(0.0));
            assert_eq!(rung.profile_drift, Some(0.0));
        }

        let on = case1_bump(&[0.5], 0.2, &[1.0]).unwrap();
        let r = robustness_experiment(&sol, &on, &default_ladder(), &opts).unwrap();
        assert_eq!(r.survival_amplitude, Some(1e-2));
        assert!(r.predicted_slope.abs() > 1e-3);
        for rung in &r.rungs[..4] {
            let slope = rung.speed_drift.unwrap() / rung.amplitude;
            assert_relative_eq!(slope, r.predicted_slope, max_relative = 0.05);
        }
        let zero = robustness_experiment(&sol, &on, &[0.0], &opts).unwrap();
        assert_eq!(zero.rungs[0].speed, Some(sol.speed));
        assert_eq!(zero.rungs[0].profile_drift, Some(0.0));
    }

    proptest! {
        #[test]
        fn bump_derivatives_match_finite_differences(
            x in -1.2f64..1.2, y in -1.2f64..1.2, eps in 0.5f64..2.0, angle in 0.0f64..6.3,
        ) {
            let n = [angle.cos(), angle.sin()];
            let w1 = case1_bump(&[0.1, -0.2], eps, &n).unwrap();
            let w2 = case2_bump(&[0.1, -0.2], eps).unwrap();
            for w in [&w1, &w2] {
                let (eg, eh) = fd_check(w, &[x, y]);
                prop_assert!(eg < 1e-6, "gradient error {eg}");
                prop_assert!(eh < 1e-6, "hessian error {eh}");
            }
        }

        #[test]
        fn support_is_confined(r in 1.0f64..5.0, angle in 0.0f64..6.3, eps in 0.01f64..1.0) {
            let w = case1_bump(&[0.3, 0.4], eps, &[1.0, 0.0]).unwrap();
            let u = [0.3 + r * eps * angle.cos(), 0.4 + r * eps * angle.sin()];
            if distance(&u, &[0.3, 0.4]) >= eps {
                prop_assert_eq!(w.value(&u).to_bits(), 0f64.to_bits());
                let mut g = [1.0, 1.0];
                w.gradient(&u, &mut g);
                prop_assert_eq!(g, [0.0, 0.0]);
            }
        }

        #[test]
        fn splitter_is_exact_outside_its_ball(r in 1.0f64..4.0, angle in 0.0f64..6.3) {
            let m = PotentialModel::new(Polynomial::diagonal_quadratic(&[1.0, 2.0]));
            let e = CriticalPoint::refine(&m, &[0.0, 0.0]).unwrap();
            let p = smallest_eigenvalue_splitter(&m, &e, 0.5, 0.7).unwrap();
            let u = [0.7 * r * angle.cos(), 0.7 * r * angle.sin()];
            if norm(&u) >= 0.7 {
                prop_assert_eq!(p.value(&u).to_bits(), m.value(&u).to_bits());
            }
        }

        #[test]
        fn splitter_derivatives_match_finite_differences(x in -0.8f64..0.8, y in -0.8f64..0.8) {
            let m = PotentialModel::new(Polynomial::diagonal_quadratic(&[1.0, 2.0]));
            let e = CriticalPoint::refine(&m, &[0.0, 0.0]).unwrap();
            let p = smallest_eigenvalue_splitter(&m, &e, 0.5, 0.7).unwrap();
            let (eg, eh) = fd_check(p.source().as_ref(), &[x, y]);
            prop_assert!(eg < 1e-6 && eh < 1e-6, "{eg} {eh}");
        }
    }
}

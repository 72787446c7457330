//! Potentials `V: R^d -> R`, their derivatives and critical points.

mod config;
mod critical;
mod extension;
mod polynomial;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::PotentialConfig;
pub use critical::{
    find_critical_points, DEDUP_RADIUS, newton_tolerance, CriticalPoint, CriticalSearch, DegenerateCritical, SearchBox,
};
pub use extension::{quadratic_extension, smooth_step, QuadraticExtension};
pub use polynomial::{Monomial, Polynomial, RotatedPotential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("non-finite potential evaluation at u = {at:?}")]
    Evaluation { at: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid search box: {0}")]
    SearchBox(String),
    #[error("degenerate critical point at {at:?} (smallest |eigenvalue| {smallest:e})")]
    DegenerateCritical { at: Vec<f64>, smallest: f64 },
    #[error("Newton iteration did not converge from {from:?}")]
    NoConvergence { from: Vec<f64> },
}

/// A smooth scalar field on `R^d`.
///
/// Only [`Potential::value`] is mandatory. The default derivative
/// implementations are central finite differences; implementors with
/// closed-form derivatives override them and return `true` from
/// [`Potential::has_analytic_derivatives`].
pub trait Potential: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;

    fn value(&self, u: &[f64]) -> f64;

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        fd_gradient(&|x| self.value(x), u, out);
    }

    /// Writes the Hessian into `out` (`d x d`).
    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        fd_hessian(&|x| self.value(x), u, out);
    }

    fn has_analytic_derivatives(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// Value, gradient and (symmetrized) Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Shared, immutable handle on a potential together with the way its
/// derivatives are obtained.
#[derive(Clone)]
pub struct PotentialModel {
    source: Arc<dyn Potential>,
    mode: DerivativeMode,
}

impl fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialModel")
            .field("dimension", &self.dimension())
            .field("mode", &self.mode)
            .field("source", &self.source)
            .finish()
    }
}

impl PotentialModel {
    pub fn new<P: Potential + 'static>(potential: P) -> Self {
        Self::from_arc(Arc::new(potential))
    }

    pub fn from_arc(source: Arc<dyn Potential>) -> Self {
        let mode = if source.has_analytic_derivatives() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference
        };
        Self { source, mode }
    }

    /// Same potential, derivatives forced through finite differences.
    pub fn finite_difference(&self) -> Self {
        Self {
            source: Arc::clone(&self.source),
            mode: DerivativeMode::FiniteDifference,
        }
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn source(&self) -> &Arc<dyn Potential> {
        &self.source
    }

    pub fn dimension(&self) -> usize {
        self.source.dimension()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.source.value(u)
    }

    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        match self.mode {
            DerivativeMode::Analytic => self.source.gradient(u, out),
            DerivativeMode::FiniteDifference => fd_gradient(&|x| self.source.value(x), u, out),
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        self.gradient_into(u, &mut g);
        g
    }

    /// Symmetrized Hessian.
    pub fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let d = u.len();
        let mut h = DMatrix::zeros(d, d);
        match self.mode {
            DerivativeMode::Analytic => self.source.hessian(u, &mut h),
            DerivativeMode::FiniteDifference => fd_hessian(&|x| self.source.value(x), u, &mut h),
        }
        (&h + h.transpose()) * 0.5
    }

    pub fn eval(&self, u: &[f64]) -> Result<Evaluation, PotentialError> {
        if u.len() != self.dimension() {
            return Err(PotentialError::Dimension {
                expected: self.dimension(),
                found: u.len(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(PotentialError::Evaluation { at: u.to_vec() });
        }
        let value = self.value(u);
        let gradient = self.gradient(u);
        let hessian = self.hessian(u);
        let finite = value.is_finite()
            && gradient.iter().all(|x| x.is_finite())
            && hessian.iter().all(|x| x.is_finite());
        if !finite {
            return Err(PotentialError::Evaluation { at: u.to_vec() });
        }
        Ok(Evaluation {
            value,
            gradient,
            hessian,
        })
    }
}

fn fd_step(u: &[f64], power: f64) -> f64 {
    f64::EPSILON.powf(power) * (1.0 + crate::linalg::norm(u))
}

/// Central differences with `h = cbrt(eps) (1 + |u|)`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, u: &[f64], out: &mut [f64]) {
    let h = fd_step(u, 1.0 / 3.0);
    let mut x = u.to_vec();
    for i in 0..u.len() {
        x[i] = u[i] + h;
        let fp = f(&x);
        x[i] = u[i] - h;
        let fm = f(&x);
        x[i] = u[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Second central differences of the value. The step is `eps^(1/4) (1 + |u|)`,
/// the balance point for a second derivative taken from function values.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, u: &[f64], out: &mut DMatrix<f64>) {
    let d = u.len();
    let h = fd_step(u, 0.25);
    let f0 = f(u);
    let mut x = u.to_vec();
    for i in 0..d {
        x[i] = u[i] + h;
        let fp = f(&x);
        x[i] = u[i] - h;
        let fm = f(&x);
        x[i] = u[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let mut corner = |si: f64, sj: f64| {
                x[i] = u[i] + si * h;
                x[j] = u[j] + sj * h;
                let v = f(&x);
                x[i] = u[i];
                x[j] = u[j];
                v
            };
            let hij = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h * h);
            out[(i, j)] = hij;
            out[(j, i)] = hij;
        }
    }
}

/// A potential backed by closures, for library users who do not want to
/// write a type. Derivatives fall back to finite differences unless given.
pub struct FnPotential<F> {
    dimension: usize,
    value: F,
}

impl<F> FnPotential<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dimension: usize, value: F) -> Self {
        Self { dimension, value }
    }
}

impl<F> fmt::Debug for FnPotential<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPotential").field("dimension", &self.dimension).finish()
    }
}

impl<F> Potential for FnPotential<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, u: &[f64]) -> f64 {
        (self.value)(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn double_well() -> PotentialModel {
        // (u^2 - 1)^2 / 4 = u^4/4 - u^2/2 + 1/4
        PotentialModel::new(Polynomial::univariate(&[0.25, 0.0, -0.5, 0.0, 0.25]))
    }

    #[test]
    fn eval_identity_quadratic() {
        let m = PotentialModel::new(Polynomial::isotropic_quadratic(2));
        let e = m.eval(&[0.0, 0.0]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.gradient, vec![0.0, 0.0]);
        assert_eq!(e.hessian, DMatrix::identity(2, 2));
    }

    #[test]
    fn eval_double_well_at_minimum_and_top() {
        let m = double_well();
        let e = m.eval(&[1.0]).unwrap();
        assert_relative_eq!(e.value, 0.0, epsilon = 1e-15);
        assert_relative_eq!(e.gradient[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(e.hessian[(0, 0)], 2.0, epsilon = 1e-14);
        let e = m.eval(&[0.0]).unwrap();
        assert_relative_eq!(e.value, 0.25);
        assert_eq!(e.gradient[0], 0.0);
        assert_relative_eq!(e.hessian[(0, 0)], -1.0);
    }

    #[test]
    fn eval_rejects_non_finite() {
        let m = double_well();
        assert!(matches!(m.eval(&[f64::NAN]), Err(PotentialError::Evaluation { .. })));
        let blow = PotentialModel::new(FnPotential::new(1, |u: &[f64]| 1.0 / u[0]));
        assert!(m.eval(&[1.0, 2.0]).is_err());
        assert!(matches!(blow.eval(&[0.0]), Err(PotentialError::Evaluation { .. })));
    }

    #[test]
    fn finite_difference_mode_tracks_analytic() {
        let p = Polynomial::new(
            2,
            vec![
                Monomial::new(vec![4, 0], 0.25),
                Monomial::new(vec![2, 0], -0.5),
                Monomial::new(vec![1, 2], 0.3),
                Monomial::new(vec![0, 2], 0.5),
            ],
        )
        .unwrap();
        let analytic = PotentialModel::new(p);
        let fd = analytic.finite_difference();
        assert_eq!(fd.mode(), DerivativeMode::FiniteDifference);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let ga = analytic.gradient(&u);
            let gf = fd.gradient(&u);
            let scale = 1.0 + crate::linalg::norm(&ga);
            for i in 0..2 {
                // O(h^2) with h ~ 6e-6 (1+|u|)
                assert!((ga[i] - gf[i]).abs() <= 1e-8 * scale, "{ga:?} vs {gf:?}");
            }
            let ha = analytic.hessian(&u);
            let hf = fd.hessian(&u);
            assert!((&ha - &hf).amax() <= 1e-5 * (1.0 + ha.amax()));
            assert_eq!(hf, hf.transpose());
        }
    }

    #[test]
    fn closure_potential_uses_finite_differences() {
        let m = PotentialModel::new(FnPotential::new(1, |u: &[f64]| u[0].sin()));
        assert_eq!(m.mode(), DerivativeMode::FiniteDifference);
        assert_relative_eq!(m.gradient(&[0.3])[0], 0.3_f64.cos(), epsilon = 1e-9);
        assert_relative_eq!(m.hessian(&[0.3])[(0, 0)], -(0.3_f64.sin()), epsilon = 1e-6);
    }
}

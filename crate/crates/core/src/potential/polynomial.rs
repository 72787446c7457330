use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Potential, PotentialError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>, coefficient: f64) -> Self {
        Self {
            exponents,
            coefficient,
        }
    }
}

/// Multivariate polynomial `sum_k c_k prod_i u_i^{e_ki}` with analytic
/// derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dimension: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(dimension: usize, terms: Vec<Monomial>) -> Result<Self, PotentialError> {
        for t in &terms {
            if t.exponents.len() != dimension {
                return Err(PotentialError::Dimension {
                    expected: dimension,
                    found: t.exponents.len(),
                });
            }
        }
        Ok(Self { dimension, terms })
    }

    /// `sum_k coefficients[k] * u^k` in one variable.
    pub fn univariate(coefficients: &[f64]) -> Self {
        let terms = coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| Monomial::new(vec![k as u32], *c))
            .collect();
        Self { dimension: 1, terms }
    }

    /// `|u|^2 / 2`.
    pub fn isotropic_quadratic(dimension: usize) -> Self {
        Self::diagonal_quadratic(&vec![1.0; dimension])
    }

    /// `sum_i mu_i u_i^2 / 2`.
    pub fn diagonal_quadratic(mu: &[f64]) -> Self {
        let d = mu.len();
        let terms = mu
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut e = vec![0; d];
                e[i] = 2;
                Monomial::new(e, 0.5 * m)
            })
            .collect();
        Self { dimension: d, terms }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Sum of the two polynomials (same dimension).
    pub fn plus(&self, other: &Polynomial) -> Result<Polynomial, PotentialError> {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Polynomial::new(self.dimension, terms)
    }

    /// `u -> p(R u)` for a `d x d` matrix `R` given row-major; used to build
    /// rotated test problems.
    pub fn compose_linear(&self, rows: &[Vec<f64>]) -> RotatedPotential {
        RotatedPotential {
            inner: self.clone(),
            matrix: DMatrix::from_fn(self.dimension, self.dimension, |i, j| rows[i][j]),
        }
    }
}

fn term_product(e: &[u32], u: &[f64], skip: &[usize], drop: &[u32]) -> f64 {
    let mut p = 1.0;
    for (i, (&ei, &ui)) in e.iter().zip(u).enumerate() {
        let mut k = ei;
        for (s, dd) in skip.iter().zip(drop) {
            if *s == i {
                k -= dd;
            }
        }
        if k > 0 {
            p *= ui.powi(k as i32);
        }
    }
    p
}

impl Potential for Polynomial {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * term_product(&t.exponents, u, &[], &[]))
            .sum()
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for t in &self.terms {
            for i in 0..self.dimension {
                let ei = t.exponents[i];
                if ei == 0 {
                    continue;
                }
                out[i] += t.coefficient * ei as f64 * term_product(&t.exponents, u, &[i], &[1]);
            }
        }
    }

    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for t in &self.terms {
            for i in 0..self.dimension {
                let ei = t.exponents[i];
                if ei == 0 {
                    continue;
                }
                if ei >= 2 {
                    out[(i, i)] += t.coefficient
                        * (ei * (ei - 1)) as f64
                        * term_product(&t.exponents, u, &[i], &[2]);
                }
                for j in (i + 1)..self.dimension {
                    let ej = t.exponents[j];
                    if ej == 0 {
                        continue;
                    }
                    let v = t.coefficient
                        * (ei * ej) as f64
                        * term_product(&t.exponents, u, &[i, j], &[1, 1]);
                    out[(i, j)] += v;
                    out[(j, i)] += v;
                }
            }
        }
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }
}

/// `u -> p(M u)`.
#[derive(Debug, Clone)]
pub struct RotatedPotential {
    inner: Polynomial,
    matrix: DMatrix<f64>,
}

impl RotatedPotential {
    fn map(&self, u: &[f64]) -> Vec<f64> {
        (0..self.inner.dimension)
            .map(|i| (0..u.len()).map(|j| self.matrix[(i, j)] * u[j]).sum())
            .collect()
    }
}

impl Potential for RotatedPotential {
    fn dimension(&self) -> usize {
        self.inner.dimension
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.inner.value(&self.map(u))
    }
    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let x = self.map(u);
        let mut g = vec![0.0; x.len()];
        self.inner.gradient(&x, &mut g);
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..g.len()).map(|i| self.matrix[(i, j)] * g[i]).sum();
        }
    }
    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        let x = self.map(u);
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        self.inner.hessian(&x, &mut h);
        out.copy_from(&(self.matrix.transpose() * h * &self.matrix));
    }
    fn has_analytic_derivatives(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mixed_monomial_derivatives() {
        // 3 x^2 y^3
        let p = Polynomial::new(2, vec![Monomial::new(vec![2, 3], 3.0)]).unwrap();
        let u = [1.5, -0.5];
        assert_relative_eq!(p.value(&u), 3.0 * 2.25 * -0.125);
        let mut g = [0.0; 2];
        p.gradient(&u, &mut g);
        assert_relative_eq!(g[0], 6.0 * 1.5 * -0.125);
        assert_relative_eq!(g[1], 9.0 * 2.25 * 0.25);
        let mut h = DMatrix::zeros(2, 2);
        p.hessian(&u, &mut h);
        assert_relative_eq!(h[(0, 0)], 6.0 * -0.125);
        assert_relative_eq!(h[(0, 1)], 18.0 * 1.5 * 0.25);
        assert_relative_eq!(h[(1, 1)], 18.0 * 2.25 * -0.5);
    }

    #[test]
    fn wrong_exponent_length_is_rejected() {
        assert!(Polynomial::new(2, vec![Monomial::new(vec![1], 1.0)]).is_err());
    }

    #[test]
    fn rotation_preserves_value_and_transforms_gradient() {
        let p = Polynomial::diagonal_quadratic(&[1.0, 4.0]);
        let (c, s) = (0.6, 0.8);
        let r = p.compose_linear(&[vec![c, s], vec![-s, c]]);
        let u = [0.3, -0.7];
        let x = [c * u[0] + s * u[1], -s * u[0] + c * u[1]];
        assert_relative_eq!(r.value(&u), p.value(&x));
        let mut g = [0.0; 2];
        r.gradient(&u, &mut g);
        let fd = |i: usize| {
            let h = 1e-6;
            let mut a = u;
            a[i] += h;
            let mut b = u;
            b[i] -= h;
            (r.value(&a) - r.value(&b)) / (2.0 * h)
        };
        assert_relative_eq!(g[0], fd(0), epsilon = 1e-8);
        assert_relative_eq!(g[1], fd(1), epsilon = 1e-8);
    }
}

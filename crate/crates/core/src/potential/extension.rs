use nalgebra::DMatrix;

use super::{Potential, PotentialModel};
use crate::linalg::norm;

fn bump_half(t: f64) -> (f64, f64, f64) {
    // f(t) = exp(-1/t) and its first two derivatives, zero for t <= 0
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = (-1.0 / t).exp();
    let f1 = f / (t * t);
    let f2 = f * (1.0 - 2.0 * t) / t.powi(4);
    (f, f1, f2)
}

/// C-infinity step: 1 for `s <= 0`, 0 for `s >= 1`. Returns `(g, g', g'')`.
pub fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let (a, a1, a2) = bump_half(1.0 - s);
    let (b, b1, b2) = bump_half(s);
    // a(s) = f(1-s) so a' = -f'(1-s), a'' = f''(1-s)
    let (a1, a2) = (-a1, a2);
    let sum = a + b;
    let g = a / sum;
    let num1 = a1 * b - a * b1;
    let g1 = num1 / (sum * sum);
    let g2 = (a2 * b - a * b2) / (sum * sum) - 2.0 * num1 * (a1 + b1) / (sum * sum * sum);
    (g, g1, g2)
}

/// `V` inside `|u| <= R`, `|u|^2/2` for `|u| >= R + 1`, smooth blend between.
#[derive(Debug, Clone)]
pub struct QuadraticExtension {
    inner: PotentialModel,
    radius: f64,
}

impl QuadraticExtension {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn inner(&self) -> &PotentialModel {
        &self.inner
    }
}

pub fn quadratic_extension(model: &PotentialModel, radius: f64) -> PotentialModel {
    assert!(radius > 0.0, "extension radius must be positive");
    PotentialModel::new(QuadraticExtension {
        inner: model.clone(),
        radius,
    })
}

impl Potential for QuadraticExtension {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn value(&self, u: &[f64]) -> f64 {
        let r = norm(u);
        if r <= self.radius {
            return self.inner.value(u);
        }
        let q = 0.5 * r * r;
        if r >= self.radius + 1.0 {
            return q;
        }
        let (chi, _, _) = smooth_step(r - self.radius);
        q + chi * (self.inner.value(u) - q)
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let r = norm(u);
        if r <= self.radius {
            self.inner.gradient_into(u, out);
            return;
        }
        if r >= self.radius + 1.0 {
            out.copy_from_slice(u);
            return;
        }
        let (chi, chi1, _) = smooth_step(r - self.radius);
        let diff = self.inner.value(u) - 0.5 * r * r;
        let gv = self.inner.gradient(u);
        for i in 0..u.len() {
            out[i] = u[i] + chi * (gv[i] - u[i]) + chi1 * diff * u[i] / r;
        }
    }

    fn hessian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        let d = u.len();
        let r = norm(u);
        if r <= self.radius {
            out.copy_from(&self.inner.hessian(u));
            return;
        }
        if r >= self.radius + 1.0 {
            out.fill_with_identity();
            return;
        }
        let (chi, chi1, chi2) = smooth_step(r - self.radius);
        let diff = self.inner.value(u) - 0.5 * r * r;
        let gv = self.inner.gradient(u);
        let hv = self.inner.hessian(u);
        let w: Vec<f64> = gv.iter().zip(u).map(|(g, x)| g - x).collect();
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                let nn = u[i] * u[j] / (r * r);
                out[(i, j)] = delta
                    + chi * (hv[(i, j)] - delta)
                    + chi1 / r * (w[i] * u[j] + u[i] * w[j])
                    + diff * (chi2 * nn + chi1 * (delta - nn) / r);
            }
        }
    }

    fn has_analytic_derivatives(&self) -> bool {
        self.inner.mode() == super::DerivativeMode::Analytic
    }
}

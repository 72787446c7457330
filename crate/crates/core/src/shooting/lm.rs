//! Levenberg-Marquardt on a product of unit spheres and a Euclidean factor.
//!
//! Steps live in the tangent spaces of the spheres and are mapped back by
//! renormalization. Jacobians are central differences in those local
//! coordinates, one independent residual pair per column.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::linalg::{norm, pseudo_inverse, sphere_tangent_basis, to_dvector};

#[derive(Debug, Clone, PartialEq)]
pub struct Unknowns {
    /// Unit vectors; a sphere of length 1 is a fixed sign.
    pub spheres: Vec<Vec<f64>>,
    pub reals: Vec<f64>,
}

impl Unknowns {
    pub fn local_dimension(&self) -> usize {
        self.spheres.iter().map(|s| s.len() - 1).sum::<usize>() + self.reals.len()
    }

    /// Moves by `step` in local coordinates.
    pub fn retract(&self, step: &[f64]) -> Self {
        assert_eq!(step.len(), self.local_dimension());
        let mut k = 0;
        let spheres = self
            .spheres
            .iter()
            .map(|b| {
                let mut out = b.clone();
                for t in sphere_tangent_basis(b) {
                    for (o, ti) in out.iter_mut().zip(&t) {
                        *o += step[k] * ti;
                    }
                    k += 1;
                }
                let n = norm(&out);
                out.iter_mut().for_each(|x| *x /= n);
                out
            })
            .collect();
        let reals = self.reals.iter().map(|x| {
            let y = x + step[k];
            k += 1;
            y
        });
        Self {
            spheres,
            reals: reals.collect(),
        }
    }

    /// Finite-difference step for local coordinate `j`.
    fn fd_step(&self, j: usize, h: f64) -> f64 {
        let nsphere = self.local_dimension() - self.reals.len();
        if j < nsphere {
            h
        } else {
            h * (1.0 + self.reals[j - nsphere].abs())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: Unknowns,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference Jacobian in local coordinates.
pub fn jacobian<E, F>(f: &F, x: &Unknowns, fd_step: f64) -> Result<DMatrix<f64>, E>
where
    F: Fn(&Unknowns) -> Result<Vec<f64>, E> + Sync,
    E: Send,
{
    let n = x.local_dimension();
    let cols: Vec<Result<Vec<f64>, E>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = x.fd_step(j, fd_step);
            let mut e = vec![0.0; n];
            e[j] = h;
            let plus = f(&x.retract(&e))?;
            e[j] = -h;
            let minus = f(&x.retract(&e))?;
            Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect();
    let mut m = 0;
    let mut out = Vec::with_capacity(n);
    for c in cols {
        let c = c?;
        m = c.len();
        out.push(c);
    }
    if n == 0 {
        m = f(x)?.len();
    }
    Ok(DMatrix::from_fn(m, n, |i, j| out[j][i]))
}

/// Minimizes `|f(x)|` from `x0`. Returns `Err` only when `f(x0)` or a
/// Jacobian fails; failed trial points count as rejected steps.
pub fn solve<E, F>(f: &F, x0: Unknowns, opts: &LmOptions) -> Result<LmReport, E>
where
    F: Fn(&Unknowns) -> Result<Vec<f64>, E> + Sync,
    E: Send,
{
    let mut x = x0;
    let mut r = f(&x)?;
    let mut rn = norm(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut slow = 0;
    while rn > opts.tol && iterations < opts.max_iter && x.local_dimension() > 0 {
        iterations += 1;
        let j = jacobian(f, &x, opts.fd_step)?;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * to_dvector(&r);
        let dmax = jtj.diagonal().iter().fold(0.0_f64, |m, v| m.max(*v));
        let mut accepted: Option<(Unknowns, Vec<f64>, f64)> = None;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * dmax.max(1e-300));
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 4.0;
                continue;
            };
            let trial = x.retract(step.as_slice());
            if let Ok(rt) = f(&trial) {
                let tn = norm(&rt);
                if tn < rn {
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = Some((trial, rt, tn));
                    break;
                }
            }
            lambda *= 4.0;
        }
        if accepted.is_none() {
            accepted = newton_fallback(f, &x, &j, &r, rn);
        }
        let Some((xn, rnew, nn)) = accepted else {
            break;
        };
        slow = if nn > 0.9 * rn { slow + 1 } else { 0 };
        x = xn;
        r = rnew;
        rn = nn;
        if slow >= 8 {
            break;
        }
    }
    Ok(LmReport {
        converged: rn <= opts.tol,
        x,
        residual: r,
        residual_norm: rn,
        iterations,
    })
}

/// Damped Gauss-Newton step `-J^+ r` with step halving.
fn newton_fallback<E, F>(
    f: &F,
    x: &Unknowns,
    j: &DMatrix<f64>,
    r: &[f64],
    rn: f64,
) -> Option<(Unknowns, Vec<f64>, f64)>
where
    F: Fn(&Unknowns) -> Result<Vec<f64>, E> + Sync,
{
    let full: DVector<f64> = -(pseudo_inverse(j, 1e-12) * to_dvector(r));
    let mut t = 1.0;
    for _ in 0..10 {
        let step: Vec<f64> = full.iter().map(|s| t * s).collect();
        let trial = x.retract(&step);
        if let Ok(rt) = f(&trial) {
            let tn = norm(&rt);
            if tn < rn {
                return Some((trial, rt, tn));
            }
        }
        t *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn retraction_stays_on_the_sphere() {
        let x = Unknowns {
            spheres: vec![vec![1.0, 0.0, 0.0], vec![-1.0]],
            reals: vec![2.0],
        };
        assert_eq!(x.local_dimension(), 3);
        let y = x.retract(&[0.3, -0.2, 0.5]);
        assert_relative_eq!(norm(&y.spheres[0]), 1.0, epsilon = 1e-15);
        assert_eq!(y.spheres[1], vec![-1.0]);
        assert_eq!(y.reals, vec![2.5]);
    }

    #[test]
    fn finds_a_point_on_a_circle_and_a_scalar() {
        // b on the unit circle with b . (1, 2) = 1, and t^2 = 2
        let f = |x: &Unknowns| -> Result<Vec<f64>, ()> {
            let b = &x.spheres[0];
            let t = x.reals[0];
            Ok(vec![b[0] + 2.0 * b[1] - 1.0, t * t - 2.0])
        };
        let x0 = Unknowns {
            spheres: vec![vec![0.0, 1.0]],
            reals: vec![1.0],
        };
        let opts = LmOptions {
            tol: 1e-13,
            max_iter: 50,
            fd_step: 1e-6,
        };
        let out = solve(&f, x0, &opts).unwrap();
        assert!(out.converged, "{out:?}");
        assert_relative_eq!(out.x.reals[0], 2f64.sqrt(), epsilon = 1e-12);
        let b = &out.x.spheres[0];
        assert_relative_eq!(b[0] + 2.0 * b[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_of_linear_map() {
        let f = |x: &Unknowns| -> Result<Vec<f64>, ()> { Ok(vec![3.0 * x.reals[0] - x.reals[1], x.reals[1]]) };
        let x = Unknowns {
            spheres: vec![],
            reals: vec![0.5, -1.0],
        };
        let j = jacobian(&f, &x, 1e-6).unwrap();
        assert_relative_eq!(j[(0, 0)], 3.0, epsilon = 1e-8);
        assert_relative_eq!(j[(0, 1)], -1.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 1)], 1.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 0)], 0.0, epsilon = 1e-8);
    }
}

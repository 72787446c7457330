use std::fmt::Write as _;

use super::integrator::DenseSolution;
use super::{hamiltonian_state, PhasePoint};
use crate::linalg::{dot, gauss_legendre_unit};
use crate::potential::PotentialModel;

/// A solution curve of the first-order system at speed `c`, with the
/// Hamiltonian recorded at every accepted point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    speed: f64,
    d: usize,
    dense: DenseSolution,
    energy: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn from_dense(model: &PotentialModel, c: f64, dense: DenseSolution) -> Self {
        let energy = dense.states().iter().map(|y| hamiltonian_state(model, y)).collect();
        Self {
            speed: c,
            d: model.dimension(),
            dense,
            energy,
        }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Degree of the dense-output polynomial.
    pub fn interpolation_order(&self) -> usize {
        4
    }

    pub fn len(&self) -> usize {
        self.dense.times().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn xi(&self) -> &[f64] {
        self.dense.times()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        self.dense.states()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energy
    }

    pub fn xi_start(&self) -> f64 {
        self.dense.t_start()
    }

    pub fn xi_end(&self) -> f64 {
        self.dense.t_end()
    }

    pub fn dense(&self) -> &DenseSolution {
        &self.dense
    }

    pub fn first_point(&self) -> PhasePoint {
        PhasePoint::from_state(&self.states()[0])
    }

    pub fn last_point(&self) -> PhasePoint {
        PhasePoint::from_state(self.states().last().expect("nonempty"))
    }

    pub fn state_at(&self, xi: f64) -> Option<Vec<f64>> {
        self.dense.eval(xi)
    }

    pub fn eval(&self, xi: f64) -> Option<PhasePoint> {
        self.state_at(xi).map(|y| PhasePoint::from_state(&y))
    }

    pub fn position_at(&self, xi: f64) -> Option<Vec<f64>> {
        self.state_at(xi).map(|mut y| {
            y.truncate(self.d);
            y
        })
    }

    pub fn shifted(&self, dxi: f64) -> Self {
        let mut out = self.clone();
        out.dense.shift(dxi);
        out
    }

    /// Time reversal about `xi_t`: `xi -> 2 xi_t - xi`, `(u, v) -> (u, -v)`.
    pub fn reflected_about(&self, xi_t: f64) -> Self {
        let d = self.d;
        let n = 2 * d;
        let flip = |i: usize, x: f64| if i >= d { -x } else { x };
        let mut dense = self.dense.clone();
        dense.times = dense.times.iter().map(|t| 2.0 * xi_t - t).collect();
        for y in dense.states.iter_mut() {
            for (i, x) in y.iter_mut().enumerate() {
                *x = flip(i, *x);
            }
        }
        for seg in dense.segments.iter_mut() {
            seg.t0 = 2.0 * xi_t - seg.t0;
            seg.h = -seg.h;
            seg.map_components(n, flip);
        }
        dense.times.reverse();
        dense.states.reverse();
        dense.segments.reverse();
        let mut energy = self.energy.clone();
        energy.reverse();
        Self {
            speed: self.speed,
            d,
            dense,
            energy,
        }
    }

    /// Concatenates `other`, which must start at this trajectory's end time.
    pub fn concat(&self, other: &Trajectory) -> Self {
        assert!(
            (other.xi_start() - self.xi_end()).abs() <= 1e-9 * (1.0 + self.xi_end().abs()),
            "trajectories do not meet"
        );
        let mut out = self.clone();
        let mut tail = other.dense.clone();
        tail.shift(self.xi_end() - other.xi_start());
        out.dense.append(&tail);
        out.energy.extend_from_slice(&other.energy[1..]);
        out
    }

    /// Restriction to `[a, b]` (accepted points inside plus the two ends).
    pub fn window(&self, a: f64, b: f64) -> Vec<(f64, Vec<f64>)> {
        self.xi()
            .iter()
            .zip(self.states())
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(t, y)| (*t, y.clone()))
            .collect()
    }

    /// Gauss-Legendre quadrature of `f(xi, state)` over every segment.
    pub fn integrate_fn(&self, mut f: impl FnMut(f64, &[f64]) -> f64) -> f64 {
        let (nodes, weights) = gauss_legendre_unit();
        let times = self.xi();
        let mut y = vec![0.0; 2 * self.d];
        let mut total = 0.0;
        for k in 0..times.len().saturating_sub(1) {
            let (a, b) = (times[k], times[k + 1]);
            let h = b - a;
            for (x, w) in nodes.iter().zip(&weights) {
                let t = a + x * h;
                self.dense.eval_into(t, &mut y);
                total += w * h * f(t, &y);
            }
        }
        total
    }

    /// `integral |v|^2 dxi` over the whole trajectory.
    pub fn kinetic_integral(&self) -> f64 {
        let d = self.d;
        self.integrate_fn(|_, y| dot(&y[d..], &y[d..]))
    }

    /// CSV with header `xi,u1..ud,v1..vd,H`, one row per accepted point.
    pub fn to_csv(&self) -> String {
        let d = self.d;
        let mut s = String::from("xi");
        for i in 1..=d {
            let _ = write!(s, ",u{i}");
        }
        for i in 1..=d {
            let _ = write!(s, ",v{i}");
        }
        s.push_str(",H\n");
        for ((t, y), h) in self.xi().iter().zip(self.states()).zip(&self.energy) {
            let _ = write!(s, "{t:e}");
            for x in y {
                let _ = write!(s, ",{x:e}");
            }
            let _ = writeln!(s, ",{h:e}");
        }
        s
    }
}

/// `max |H(xi) - H(xi_0) + c int_{xi_0}^{xi} |v|^2|` over accepted points,
/// with the integral taken on the dense output.
pub fn dissipation_residual(traj: &Trajectory) -> f64 {
    let (nodes, weights) = gauss_legendre_unit();
    let d = traj.dimension();
    let c = traj.speed();
    let times = traj.xi();
    let h0 = traj.energies()[0];
    let mut y = vec![0.0; 2 * d];
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        let (a, b) = (times[k], times[k + 1]);
        let h = b - a;
        for (x, w) in nodes.iter().zip(&weights) {
            traj.dense().eval_into(a + x * h, &mut y);
            acc += w * h * dot(&y[d..], &y[d..]);
        }
        worst = worst.max((traj.energies()[k + 1] - h0 + c * acc).abs());
    }
    worst
}

//! The travelling-wave system `u' = v, v' = grad V(u) - c v`.

mod events;
mod integrator;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::PotentialModel;

pub use events::{Crossing, EventHit, EventKind, EventSpec};
pub use integrator::{integrate_system, DenseSolution, IntegrateOptions, OdeOutcome, OdeSystem};
pub use trajectory::{dissipation_residual, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at xi = {xi} (h = {step:e})")]
    Stiffness { xi: f64, step: f64 },
    #[error("solution left the ball of radius blowup_radius at xi = {xi} (|U| = {norm:e})")]
    Escape { xi: f64, norm: f64 },
    #[error("non-finite vector field at xi = {xi}")]
    Evaluation { xi: f64 },
}

/// `U = (u, v)` in `R^{2d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(u.len(), v.len(), "position and velocity dimensions differ");
        Self { u, v }
    }

    /// `(e, 0)`.
    pub fn at_rest(e: &[f64]) -> Self {
        Self::new(e.to_vec(), vec![0.0; e.len()])
    }

    pub fn from_state(y: &[f64]) -> Self {
        let d = y.len() / 2;
        Self::new(y[..d].to_vec(), y[d..].to_vec())
    }

    pub fn to_state(&self) -> Vec<f64> {
        let mut y = self.u.clone();
        y.extend_from_slice(&self.v);
        y
    }

    pub fn dimension(&self) -> usize {
        self.u.len()
    }

    /// `(u, -v)`.
    pub fn reflected(&self) -> Self {
        Self::new(self.u.clone(), self.v.iter().map(|x| -x).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// `F_{c,V}(u, v) = (v, grad V(u) - c v)`.
pub fn vector_field(model: &PotentialModel, c: f64, point: &PhasePoint) -> Result<PhasePoint, IntegrationError> {
    let g = model.gradient(&point.u);
    let dv: Vec<f64> = g.iter().zip(&point.v).map(|(g, v)| g - c * v).collect();
    let out = PhasePoint::new(point.v.clone(), dv);
    if !out.is_finite() {
        return Err(IntegrationError::Evaluation { xi: f64::NAN });
    }
    Ok(out)
}

pub(crate) fn field_into(model: &PotentialModel, c: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
    let d = y.len() / 2;
    let (u, v) = y.split_at(d);
    let (du, dv) = dy.split_at_mut(d);
    du.copy_from_slice(v);
    model.gradient_into(u, dv);
    for i in 0..d {
        dv[i] -= c * v[i];
    }
    Ok(())
}

/// Phase-space field on flat states `[u, v]`.
pub fn vector_field_state(model: &PotentialModel, c: f64, y: &[f64]) -> Vec<f64> {
    let mut dy = vec![0.0; y.len()];
    let _ = field_into(model, c, y, &mut dy);
    dy
}

/// `H(u, v) = |v|^2 / 2 - V(u)`.
pub fn hamiltonian(model: &PotentialModel, point: &PhasePoint) -> f64 {
    0.5 * crate::linalg::dot(&point.v, &point.v) - model.value(&point.u)
}

pub fn hamiltonian_state(model: &PotentialModel, y: &[f64]) -> f64 {
    let d = y.len() / 2;
    0.5 * crate::linalg::dot(&y[d..], &y[d..]) - model.value(&y[..d])
}

/// Gradient of `H` in `R^{2d}`: `(-grad V(u), v)`.
pub fn hamiltonian_gradient(model: &PotentialModel, y: &[f64]) -> Vec<f64> {
    let d = y.len() / 2;
    let mut out: Vec<f64> = model.gradient(&y[..d]).iter().map(|g| -g).collect();
    out.extend_from_slice(&y[d..]);
    out
}

struct PhaseSystem<'a> {
    model: &'a PotentialModel,
    c: f64,
}

impl OdeSystem for PhaseSystem<'_> {
    fn dimension(&self) -> usize {
        2 * self.model.dimension()
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        field_into(self.model, self.c, y, dy)
    }
}

/// A finished integration of the phase-space system.
#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub events: Vec<EventHit>,
    pub terminated_by: Option<usize>,
}

impl Integration {
    pub fn final_point(&self) -> PhasePoint {
        self.trajectory.last_point()
    }

    /// First recorded hit of event `index`.
    pub fn first_hit(&self, index: usize) -> Option<&EventHit> {
        self.events.iter().find(|h| h.index == index)
    }
}

/// Integrates from `U0` at `span.0` to `span.1` (backward when
/// `span.1 < span.0`).
pub fn integrate(
    model: &PotentialModel,
    c: f64,
    start: &PhasePoint,
    span: (f64, f64),
    opts: &IntegrateOptions,
    events: &[EventSpec],
) -> Result<Integration, IntegrationError> {
    integrate_state(model, c, &start.to_state(), span, opts, events)
}

pub fn integrate_state(
    model: &PotentialModel,
    c: f64,
    y0: &[f64],
    span: (f64, f64),
    opts: &IntegrateOptions,
    events: &[EventSpec],
) -> Result<Integration, IntegrationError> {
    assert_eq!(y0.len(), 2 * model.dimension(), "state dimension mismatch");
    let sys = PhaseSystem { model, c };
    let out = integrate_system(&sys, y0, span.0, span.1, opts, events)?;
    Ok(Integration {
        trajectory: Trajectory::from_dense(model, c, out.solution),
        events: out.events,
        terminated_by: out.terminated_by,
    })
}

/// Flow map `S_{c,V}(xi, U0)`.
pub fn flow(
    model: &PotentialModel,
    c: f64,
    y0: &[f64],
    xi: f64,
    opts: &IntegrateOptions,
) -> Result<Vec<f64>, IntegrationError> {
    let sys = PhaseSystem { model, c };
    let out = integrate_system(&sys, y0, 0.0, xi, opts, &[])?;
    Ok(if xi >= 0.0 {
        out.solution.states().last().expect("nonempty").clone()
    } else {
        out.solution.states()[0].clone()
    })
}

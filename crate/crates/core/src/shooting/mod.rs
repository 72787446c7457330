//! Connecting orbits by shooting between local manifolds.
//!
//! Fronts solve `S_c(xi, h^u(b^u)) = h^s(b^s)` for the boundary coordinates,
//! the transit time and the speed. Symmetric pulses shoot from the unstable
//! boundary to the reversibility subspace `v = 0`; asymmetric pulses shoot to
//! the stable boundary inside the energy level of the equilibrium.

mod front;
pub mod lm;
mod pulse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{IntegrateOptions, IntegrationError, Trajectory};
use crate::linalg::distance;
use crate::manifolds::{LocalManifold, ManifoldError, ManifoldKind, ManifoldOptions};
use crate::potential::{CriticalPoint, PotentialModel, DEDUP_RADIUS};
use crate::spectral::EquilibriumSpectrum;

pub use front::{mismatch_front, overshoot, scan_speed, solve_front, FrontGuess, FrontMap, FrontProblem, SpeedSample};
pub use pulse::{solve_asymmetric_pulse, solve_symmetric_pulse, AsymmetricSeed, PulseMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShootingError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("no bracket: the overshoot indicator keeps its sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("no convergence after {iterations} iterations (mismatch {mismatch:e})")]
    MaxIterations { iterations: usize, mismatch: f64 },
    #[error("no homoclinic: {0}")]
    NoConvergence(String),
    #[error("no homoclinic: the orbit returns to the equilibrium at xi = {xi} without a symmetry crossing")]
    ReturnsToEquilibrium { xi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

impl ShootingError {
    /// Machine-readable reason.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::Infeasible(_) => "infeasible",
            Self::NoBracket { .. } => "no_bracket",
            Self::MaxIterations { .. } => "max_iterations",
            Self::NoConvergence(_) => "no homoclinic",
            Self::ReturnsToEquilibrium { .. } => "no homoclinic",
            Self::InvalidInput(_) => "invalid_input",
            Self::Manifold(_) => "manifold",
            Self::Integration(_) => "integration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    /// Mismatch tolerance; `None` means `1e-9 (1 + |E|)` with `E` the
    /// arrival rest state.
    pub solve_tol: Option<f64>,
    pub symmetry_margin: f64,
    /// Relative tolerance on potential levels, scaled by `1 + |V|`.
    pub level_tol: f64,
    pub max_iter: usize,
    /// Longest transit integrated while seeding.
    pub xi_max: f64,
    /// Manifold radius as a fraction of the distance scale.
    pub radius_fraction: f64,
    /// Distance scale for pulses (fronts use `|e_+ - e_-|`).
    pub pulse_separation: f64,
    /// Target distance to the equilibrium at the ends of tails.
    pub tail_depth: f64,
    pub fd_step: f64,
    /// Grid size used to bracket the speed.
    pub bracket_samples: usize,
    pub integrate: IntegrateOptions,
    pub manifold: ManifoldOptions,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            solve_tol: None,
            symmetry_margin: 1e-6,
            level_tol: 1e-10,
            max_iter: 200,
            xi_max: 200.0,
            radius_fraction: 0.025,
            pulse_separation: 1.0,
            tail_depth: 1e-9,
            fd_step: 1e-6,
            bracket_samples: 16,
            integrate: IntegrateOptions {
                rtol: 1e-12,
                atol: 1e-15,
                ..IntegrateOptions::default()
            },
            manifold: ManifoldOptions::default(),
        }
    }
}

impl ShootingOptions {
    pub fn solve_tol_for(&self, rest: &[f64]) -> f64 {
        self.solve_tol
            .unwrap_or_else(|| 1e-9 * (1.0 + crate::linalg::norm(rest)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    Front,
    SymmetricPulse,
    AsymmetricPulse,
}

/// Radius and refine factor of a local manifold, held fixed while solving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSize {
    pub radius: f64,
    pub refine_factor: f64,
}

impl ManifoldSize {
    pub fn of(w: &LocalManifold) -> Self {
        Self {
            radius: w.radius(),
            refine_factor: w.refine_factor(),
        }
    }

    pub fn build(
        &self,
        model: &PotentialModel,
        spectrum: &EquilibriumSpectrum,
        kind: ManifoldKind,
        opts: &ManifoldOptions,
    ) -> Result<LocalManifold, ManifoldError> {
        LocalManifold::with_refine_factor(model, spectrum, kind, self.radius, self.refine_factor, opts)
    }
}

#[derive(Debug, Clone)]
pub struct ConnectionSolution {
    pub kind: ConnectionKind,
    pub model: PotentialModel,
    pub speed: f64,
    pub departure: CriticalPoint,
    pub arrival: CriticalPoint,
    /// Unit coordinate on the unstable boundary sphere.
    pub b_u: Vec<f64>,
    /// Unit coordinate on the stable boundary sphere (not used by
    /// symmetric pulses).
    pub b_s: Option<Vec<f64>>,
    /// Transit time from the unstable boundary (at `xi = 0`) to the stable
    /// boundary, or to the turning point for symmetric pulses.
    pub transit: f64,
    pub trajectory: Trajectory,
    pub mismatch: f64,
    pub turning_time: Option<f64>,
    /// `min |v|` along the transit.
    pub symmetry_distance: Option<f64>,
    /// The orbit meets `v = 0` within the symmetry margin.
    pub symmetric: bool,
    pub iterations: usize,
    pub unstable_size: ManifoldSize,
    pub stable_size: Option<ManifoldSize>,
    pub options: ShootingOptions,
}

/// The unknowns of a solved connection, enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub kind: ConnectionKind,
    pub speed: f64,
    pub departure: CriticalPoint,
    pub arrival: CriticalPoint,
    pub b_u: Vec<f64>,
    pub b_s: Option<Vec<f64>>,
    pub transit: f64,
    pub turning_time: Option<f64>,
    pub mismatch: f64,
    pub symmetry_distance: Option<f64>,
    pub symmetric: bool,
    pub iterations: usize,
    pub unstable_size: ManifoldSize,
    pub stable_size: Option<ManifoldSize>,
}

impl ConnectionSolution {
    pub fn record(&self) -> SolutionRecord {
        SolutionRecord {
            kind: self.kind,
            speed: self.speed,
            departure: self.departure.clone(),
            arrival: self.arrival.clone(),
            b_u: self.b_u.clone(),
            b_s: self.b_s.clone(),
            transit: self.transit,
            turning_time: self.turning_time,
            mismatch: self.mismatch,
            symmetry_distance: self.symmetry_distance,
            symmetric: self.symmetric,
            iterations: self.iterations,
            unstable_size: self.unstable_size,
            stable_size: self.stable_size,
        }
    }

    /// Re-integrates a recorded connection under `model`; the mismatch is
    /// recomputed, not copied.
    pub fn rebuild(model: &PotentialModel, rec: &SolutionRecord, opts: &ShootingOptions) -> Result<Self, ShootingError> {
        let missing = |what: &str| ShootingError::InvalidInput(format!("{what} missing from the record"));
        let d = model.dimension();
        if rec.b_u.len() != rec.departure.e.len() || rec.departure.e.len() != d {
            return Err(ShootingError::InvalidInput("record dimension differs from the potential".into()));
        }
        let (mismatch, trajectory) = match rec.kind {
            ConnectionKind::Front => {
                let problem = FrontProblem {
                    model: model.clone(),
                    departure: rec.departure.clone(),
                    arrival: rec.arrival.clone(),
                    speeds: (0.0, f64::INFINITY),
                };
                let stable = rec.stable_size.ok_or_else(|| missing("stable_size"))?;
                let b_s = rec.b_s.as_ref().ok_or_else(|| missing("b_s"))?;
                let map = FrontMap {
                    problem: &problem,
                    unstable: rec.unstable_size,
                    stable,
                    opts,
                };
                let r = map.mismatch(&rec.b_u, b_s, rec.transit, rec.speed)?;
                let (wu, ws) = map.manifolds(rec.speed)?;
                let t = front::assemble(model, rec.speed, &wu, &rec.b_u, rec.transit, Some((&ws, b_s)), opts)?;
                (crate::linalg::norm(&r), t)
            }
            ConnectionKind::SymmetricPulse | ConnectionKind::AsymmetricPulse => {
                let map = PulseMap {
                    model,
                    spectrum: crate::spectral::spectrum_at(model, &rec.departure, 0.0),
                    unstable: rec.unstable_size,
                    stable: rec.stable_size.unwrap_or(rec.unstable_size),
                    opts,
                };
                let wu = map.unstable_manifold()?;
                if rec.kind == ConnectionKind::SymmetricPulse {
                    let xi_t = rec.turning_time.ok_or_else(|| missing("turning_time"))?;
                    let r = map.symmetric_residual(&rec.b_u, xi_t)?;
                    let half = front::assemble(model, 0.0, &wu, &rec.b_u, xi_t, None, opts)?;
                    (crate::linalg::norm(&r), half.concat(&half.reflected_about(xi_t)))
                } else {
                    let b_s = rec.b_s.as_ref().ok_or_else(|| missing("b_s"))?;
                    let r = map.level_mismatch(&rec.b_u, b_s, rec.transit)?;
                    let ws = map.stable_manifold()?;
                    let t = front::assemble(model, 0.0, &wu, &rec.b_u, rec.transit, Some((&ws, b_s)), opts)?;
                    (crate::linalg::norm(&r), t)
                }
            }
        };
        Ok(Self {
            kind: rec.kind,
            model: model.clone(),
            speed: rec.speed,
            departure: rec.departure.clone(),
            arrival: rec.arrival.clone(),
            b_u: rec.b_u.clone(),
            b_s: rec.b_s.clone(),
            transit: rec.transit,
            trajectory,
            mismatch,
            turning_time: rec.turning_time,
            symmetry_distance: rec.symmetry_distance,
            symmetric: rec.symmetric,
            iterations: rec.iterations,
            unstable_size: rec.unstable_size,
            stable_size: rec.stable_size,
            options: *opts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Obstruction {
    /// Levels differ, so no standing front can exist.
    Obstructed { gap: f64 },
    /// Equal levels; nothing more is decided.
    PossiblyConnectable { gap: f64 },
}

/// Standing fronts need `V(e_-) = V(e_+)`.
pub fn check_standing_front_obstruction(
    model: &PotentialModel,
    departure: &CriticalPoint,
    arrival: &CriticalPoint,
    opts: &ShootingOptions,
) -> Result<Obstruction, ShootingError> {
    if distance(&departure.e, &arrival.e) <= DEDUP_RADIUS {
        return Err(ShootingError::InvalidInput(
            "a front needs two distinct critical points".into(),
        ));
    }
    let a = model.value(&departure.e);
    let b = model.value(&arrival.e);
    let gap = (a - b).abs();
    let tol = opts.level_tol * (1.0 + a.abs().max(b.abs()));
    Ok(if gap > tol {
        Obstruction::Obstructed { gap }
    } else {
        Obstruction::PossiblyConnectable { gap }
    })
}

/// Tail depth at which round-off near `E` stays below the fast tangent
/// coordinates (only matters when the tangent space mixes rates).
pub(crate) fn tail_depth(w: &LocalManifold, target: f64) -> f64 {
    let (slow, fast) = w.rates();
    let scale = w.spectrum().equilibrium.e.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if w.tangent_dimension() < 2 || fast <= slow * (1.0 + 1e-9) || scale == 0.0 {
        return target;
    }
    let eta = 4.0 * f64::EPSILON * scale;
    let r = w.radius();
    target.max(r * (1e4 * eta / r).min(1.0).powf(slow / fast))
}

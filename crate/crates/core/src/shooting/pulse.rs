use serde::{Deserialize, Serialize};

use super::front::assemble;
use super::lm::{self, LmOptions, Unknowns};
use super::{ConnectionKind, ConnectionSolution, ManifoldSize, ShootingError, ShootingOptions};
use crate::dynamics::{flow, hamiltonian_gradient, integrate_state, Crossing, EventSpec, IntegrationError, Trajectory};
use crate::linalg::{dot, norm, sphere_tangent_basis};
use crate::manifolds::{LocalManifold, ManifoldKind};
use crate::potential::{CriticalPoint, PotentialModel};
use crate::spectral::{spectrum_at, EquilibriumSpectrum};

/// Starting point for the asymmetric pulse solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymmetricSeed {
    pub b_u: Vec<f64>,
    pub b_s: Vec<f64>,
    pub xi: f64,
}

/// Shooting maps at `c = 0` around one equilibrium.
#[derive(Debug, Clone)]
pub struct PulseMap<'a> {
    pub model: &'a PotentialModel,
    pub spectrum: EquilibriumSpectrum,
    pub unstable: ManifoldSize,
    pub stable: ManifoldSize,
    pub opts: &'a ShootingOptions,
}

impl<'a> PulseMap<'a> {
    pub fn new(model: &'a PotentialModel, e: &CriticalPoint, opts: &'a ShootingOptions) -> Result<Self, ShootingError> {
        let spectrum = spectrum_at(model, e, 0.0);
        let (sep, f) = (opts.pulse_separation, opts.radius_fraction);
        let wu = LocalManifold::for_shooting(model, &spectrum, ManifoldKind::Unstable, sep, f, &opts.manifold)?;
        let ws = LocalManifold::for_shooting(model, &spectrum, ManifoldKind::Stable, sep, f, &opts.manifold)?;
        Ok(Self {
            model,
            spectrum,
            unstable: ManifoldSize::of(&wu),
            stable: ManifoldSize::of(&ws),
            opts,
        })
    }

    /// Map with the sizes recorded in a pulse solution.
    pub fn from_solution(sol: &'a ConnectionSolution) -> Self {
        let spectrum = spectrum_at(&sol.model, &sol.departure, 0.0);
        let stable = sol.stable_size.unwrap_or(sol.unstable_size);
        Self {
            model: &sol.model,
            spectrum,
            unstable: sol.unstable_size,
            stable,
            opts: &sol.options,
        }
    }

    pub fn unstable_manifold(&self) -> Result<LocalManifold, ShootingError> {
        Ok(self
            .unstable
            .build(self.model, &self.spectrum, ManifoldKind::Unstable, &self.opts.manifold)?)
    }

    pub fn stable_manifold(&self) -> Result<LocalManifold, ShootingError> {
        Ok(self
            .stable
            .build(self.model, &self.spectrum, ManifoldKind::Stable, &self.opts.manifold)?)
    }

    /// `S_0(xi, h^u(b^u))`.
    pub fn endpoint(&self, b_u: &[f64], xi: f64) -> Result<Vec<f64>, ShootingError> {
        let start = self.unstable_manifold()?.sample_boundary(b_u)?;
        Ok(flow(self.model, 0.0, &start, xi, &self.opts.integrate)?)
    }

    /// Velocity part of the endpoint: zero exactly at a symmetric turning
    /// point.
    pub fn symmetric_residual(&self, b_u: &[f64], xi: f64) -> Result<Vec<f64>, ShootingError> {
        let d = self.spectrum.dimension();
        Ok(self.endpoint(b_u, xi)?[d..].to_vec())
    }

    /// Endpoint mismatch against `h^s(b^s)` in coordinates of the
    /// orthogonal complement of `grad H` at the target (`2d - 1` values).
    pub fn level_mismatch(&self, b_u: &[f64], b_s: &[f64], xi: f64) -> Result<Vec<f64>, ShootingError> {
        let end = self.endpoint(b_u, xi)?;
        let target = self.stable_manifold()?.sample_boundary(b_s)?;
        let diff: Vec<f64> = end.iter().zip(&target).map(|(a, b)| a - b).collect();
        Ok(level_basis(self.model, &target).iter().map(|q| dot(q, &diff)).collect())
    }
}

/// Orthonormal basis of `grad H(y)^perp`.
pub(crate) fn level_basis(model: &PotentialModel, y: &[f64]) -> Vec<Vec<f64>> {
    let g = hamiltonian_gradient(model, y);
    let n = norm(&g);
    let unit: Vec<f64> = g.iter().map(|x| x / n).collect();
    sphere_tangent_basis(&unit)
}

/// Smallest `|v|` on `[a, b]`, from a fine sample followed by
/// golden-section refinement.
pub(crate) fn min_speed(traj: &Trajectory, a: f64, b: f64) -> f64 {
    let d = traj.dimension();
    let speed = |xi: f64| -> f64 {
        let y = traj.state_at(xi).expect("inside trajectory");
        norm(&y[d..])
    };
    let n = 400;
    let h = (b - a) / n as f64;
    let (mut best, mut k) = (f64::INFINITY, 0usize);
    for i in 0..=n {
        let s = speed(a + h * i as f64);
        if s < best {
            best = s;
            k = i;
        }
    }
    let (mut lo, mut hi) = (a + h * k.saturating_sub(1) as f64, (a + h * (k + 1) as f64).min(b));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if speed(x1) < speed(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    best.min(speed(0.5 * (lo + hi)))
}

fn negated(b: &[f64]) -> Vec<f64> {
    b.iter().map(|x| -x).collect()
}

fn unit(b: &[f64]) -> Vec<f64> {
    let n = norm(b);
    b.iter().map(|x| x / n).collect()
}

fn symmetric_attempt(
    map: &PulseMap,
    e: &CriticalPoint,
    b: Vec<f64>,
) -> Result<ConnectionSolution, ShootingError> {
    let opts = map.opts;
    let d = map.spectrum.dimension();
    let wu = map.unstable_manifold()?;
    let start = wu.sample_boundary(&b)?;
    let turn = if d == 1 {
        EventSpec::symmetry_crossing(vec![1.0], true)
    } else {
        EventSpec::distance_extremum(e.e.clone(), Crossing::Falling, true)
    };
    let back = EventSpec::ball_entry(wu.rest_state().to_vec(), 0.5 * wu.radius(), true);
    let out = match integrate_state(map.model, 0.0, &start, (0.0, opts.xi_max), &opts.integrate, &[turn, back]) {
        Ok(out) => out,
        Err(IntegrationError::Escape { .. }) => {
            return Err(ShootingError::NoConvergence("the unstable orbit escapes to infinity".into()))
        }
        Err(err) => return Err(err.into()),
    };
    let xi0 = match out.terminated_by {
        Some(0) => out.events[0].xi,
        Some(_) => {
            return Err(ShootingError::ReturnsToEquilibrium {
                xi: out.events[0].xi,
            })
        }
        None => {
            return Err(ShootingError::NoConvergence(format!(
                "no turning point before xi = {}",
                opts.xi_max
            )))
        }
    };
    let tol = opts.solve_tol_for(wu.rest_state());
    let report = lm::solve(
        &|x: &Unknowns| map.symmetric_residual(&x.spheres[0], x.reals[0]),
        Unknowns {
            spheres: vec![unit(&b)],
            reals: vec![xi0],
        },
        &LmOptions {
            tol,
            max_iter: opts.max_iter,
            fd_step: opts.fd_step,
        },
    )?;
    if !report.converged {
        return Err(ShootingError::MaxIterations {
            iterations: report.iterations,
            mismatch: report.residual_norm,
        });
    }
    let b_u = report.x.spheres[0].clone();
    let xi_t = report.x.reals[0];
    let half = assemble(map.model, 0.0, &wu, &b_u, xi_t, None, opts)?;
    // the turning time is unique: no earlier near-stop on the transit
    let early = half
        .xi()
        .iter()
        .zip(half.states())
        .filter(|(t, _)| **t >= 0.0 && **t < xi_t * (1.0 - 1e-3))
        .any(|(_, y)| norm(&y[d..]) < opts.symmetry_margin);
    if early {
        return Err(ShootingError::NoConvergence("turning time is not unique".into()));
    }
    let trajectory = half.concat(&half.reflected_about(xi_t));
    Ok(ConnectionSolution {
        kind: ConnectionKind::SymmetricPulse,
        model: map.model.clone(),
        speed: 0.0,
        departure: e.clone(),
        arrival: e.clone(),
        b_u,
        b_s: None,
        transit: xi_t,
        trajectory,
        mismatch: report.residual_norm,
        turning_time: Some(xi_t),
        symmetry_distance: Some(report.residual_norm),
        symmetric: true,
        iterations: report.iterations,
        unstable_size: map.unstable,
        stable_size: None,
        options: *opts,
    })
}

/// Shoots from the unstable boundary of `E = (e, 0)` to `v = 0` at `c = 0`
/// and reflects. Without a seed both signs of the slow unstable direction
/// are tried in turn.
pub fn solve_symmetric_pulse(
    model: &PotentialModel,
    e: &CriticalPoint,
    seed: Option<Vec<f64>>,
    opts: &ShootingOptions,
) -> Result<ConnectionSolution, ShootingError> {
    let map = PulseMap::new(model, e, opts)?;
    let candidates = match seed {
        Some(b) => vec![b],
        None => {
            let b = map.unstable_manifold()?.slow_direction(None);
            vec![b.clone(), negated(&b)]
        }
    };
    let mut last = None;
    for b in candidates {
        match symmetric_attempt(&map, e, b) {
            Ok(sol) => return Ok(sol),
            Err(err) => last = Some(err),
        }
    }
    Err(last.expect("at least one candidate"))
}

fn asymmetric_seed(map: &PulseMap) -> Result<AsymmetricSeed, ShootingError> {
    let opts = map.opts;
    let wu = map.unstable_manifold()?;
    let ws = map.stable_manifold()?;
    let b = wu.slow_direction(None);
    let mut last = ShootingError::NoConvergence("no orbit reaches the stable box".into());
    for b_u in [b.clone(), negated(&b)] {
        let start = wu.sample_boundary(&b_u)?;
        match integrate_state(map.model, 0.0, &start, (0.0, opts.xi_max), &opts.integrate, &[ws.entry_event(true)]) {
            Ok(out) if out.terminated_by == Some(0) => {
                let hit = &out.events[0];
                return Ok(AsymmetricSeed {
                    b_u,
                    b_s: unit(&ws.tangent_coordinates(&hit.state)),
                    xi: hit.xi,
                });
            }
            Ok(_) => {}
            Err(IntegrationError::Escape { .. }) => {
                last = ShootingError::NoConvergence("the unstable orbit escapes to infinity".into())
            }
            Err(err) => return Err(err.into()),
        }
    }
    Err(last)
}

/// Shoots from the unstable to the stable boundary of `E` inside the level
/// set `H = -V(e)`. The result is flagged symmetric when the orbit comes
/// within the symmetry margin of `v = 0`.
pub fn solve_asymmetric_pulse(
    model: &PotentialModel,
    e: &CriticalPoint,
    seed: Option<AsymmetricSeed>,
    opts: &ShootingOptions,
) -> Result<ConnectionSolution, ShootingError> {
    let map = PulseMap::new(model, e, opts)?;
    let seed = match seed {
        Some(s) => s,
        None => asymmetric_seed(&map)?,
    };
    let wu = map.unstable_manifold()?;
    let ws = map.stable_manifold()?;
    let tol = opts.solve_tol_for(wu.rest_state());
    let report = lm::solve(
        &|x: &Unknowns| map.level_mismatch(&x.spheres[0], &x.spheres[1], x.reals[0]),
        Unknowns {
            spheres: vec![unit(&seed.b_u), unit(&seed.b_s)],
            reals: vec![seed.xi],
        },
        &LmOptions {
            tol,
            max_iter: opts.max_iter,
            fd_step: opts.fd_step,
        },
    )?;
    if !report.converged {
        return Err(ShootingError::MaxIterations {
            iterations: report.iterations,
            mismatch: report.residual_norm,
        });
    }
    let b_u = report.x.spheres[0].clone();
    let b_s = report.x.spheres[1].clone();
    let xi = report.x.reals[0];
    let trajectory = assemble(model, 0.0, &wu, &b_u, xi, Some((&ws, &b_s)), opts)?;
    let dist = min_speed(&trajectory, 0.0, xi);
    Ok(ConnectionSolution {
        kind: ConnectionKind::AsymmetricPulse,
        model: model.clone(),
        speed: 0.0,
        departure: e.clone(),
        arrival: e.clone(),
        b_u,
        b_s: Some(b_s),
        transit: xi,
        trajectory,
        mismatch: report.residual_norm,
        turning_time: None,
        symmetry_distance: Some(dist),
        symmetric: dist < opts.symmetry_margin,
        iterations: report.iterations,
        unstable_size: map.unstable,
        stable_size: Some(map.stable),
        options: *opts,
    })
}

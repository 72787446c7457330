use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{self, LmOptions, Unknowns};
use super::{tail_depth, ConnectionKind, ConnectionSolution, ManifoldSize, ShootingError, ShootingOptions};
use crate::dynamics::{flow, integrate_state, Crossing, EventKind, EventSpec, IntegrationError, Trajectory};
use crate::linalg::{distance, dot, norm};
use crate::manifolds::{LocalManifold, ManifoldKind};
use crate::potential::{CriticalPoint, PotentialModel, DEDUP_RADIUS};
use crate::spectral::{spectrum_at, EquilibriumSpectrum};

/// Front from `departure` (at `xi -> -inf`) to the minimum `arrival`.
#[derive(Debug, Clone)]
pub struct FrontProblem {
    pub model: PotentialModel,
    pub departure: CriticalPoint,
    pub arrival: CriticalPoint,
    pub speeds: (f64, f64),
}

/// Starting point for the front solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontGuess {
    pub b_u: Vec<f64>,
    pub b_s: Vec<f64>,
    pub xi: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub speed: f64,
    /// Positive when the orbit overshoots `e_+`, negative when it turns back
    /// first, `None` when neither happens.
    pub indicator: Option<f64>,
}

impl FrontProblem {
    pub fn new(
        model: PotentialModel,
        departure: CriticalPoint,
        arrival: CriticalPoint,
        speeds: (f64, f64),
    ) -> Result<Self, ShootingError> {
        let (lo, hi) = speeds;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(ShootingError::InvalidInput(format!(
                "speed interval [{lo}, {hi}] must satisfy 0 < lo < hi"
            )));
        }
        if distance(&departure.e, &arrival.e) <= DEDUP_RADIUS {
            return Err(ShootingError::Infeasible(
                "a front connects two distinct critical points".into(),
            ));
        }
        if !arrival.is_minimum() {
            return Err(ShootingError::InvalidInput("the arrival point must be a minimum".into()));
        }
        let a = model.value(&departure.e);
        let b = model.value(&arrival.e);
        let tol = 1e-10 * (1.0 + a.abs().max(b.abs()));
        if a >= b - tol {
            return Err(ShootingError::Infeasible(format!(
                "a front with c > 0 needs V(e_-) < V(e_+), found {a} >= {b}"
            )));
        }
        Ok(Self {
            model,
            departure,
            arrival,
            speeds,
        })
    }

    /// Same equilibria and speeds with another potential (used for
    /// perturbations vanishing near both equilibria).
    pub fn with_model(&self, model: PotentialModel) -> Self {
        Self {
            model,
            ..self.clone()
        }
    }

    pub fn separation(&self) -> f64 {
        distance(&self.departure.e, &self.arrival.e)
    }

    /// Unit vector from `e_-` to `e_+`.
    pub fn direction(&self) -> Vec<f64> {
        let s = self.separation();
        self.arrival
            .e
            .iter()
            .zip(&self.departure.e)
            .map(|(a, b)| (a - b) / s)
            .collect()
    }

    pub fn spectra(&self, c: f64) -> (EquilibriumSpectrum, EquilibriumSpectrum) {
        (
            spectrum_at(&self.model, &self.departure, c),
            spectrum_at(&self.model, &self.arrival, c),
        )
    }

    /// Shooting-sized `W^u(E_-)` and `W^s(E_+)` at speed `c`.
    pub fn manifolds(&self, c: f64, opts: &ShootingOptions) -> Result<(LocalManifold, LocalManifold), ShootingError> {
        let (su, ss) = self.spectra(c);
        let sep = self.separation();
        let f = opts.radius_fraction;
        let wu = LocalManifold::for_shooting(&self.model, &su, ManifoldKind::Unstable, sep, f, &opts.manifold)?;
        let ws = LocalManifold::for_shooting(&self.model, &ss, ManifoldKind::Stable, sep, f, &opts.manifold)?;
        Ok((wu, ws))
    }
}

/// The map `(b^u, b^s, xi, c) -> S_c(xi, h^u(b^u)) - h^s(b^s)` with both
/// manifold sizes held fixed.
#[derive(Debug, Clone)]
pub struct FrontMap<'a> {
    pub problem: &'a FrontProblem,
    pub unstable: ManifoldSize,
    pub stable: ManifoldSize,
    pub opts: &'a ShootingOptions,
}

impl<'a> FrontMap<'a> {
    /// Sizes taken from the shooting manifolds at speed `c`.
    pub fn at(problem: &'a FrontProblem, c: f64, opts: &'a ShootingOptions) -> Result<Self, ShootingError> {
        let (wu, ws) = problem.manifolds(c, opts)?;
        Ok(Self {
            problem,
            unstable: ManifoldSize::of(&wu),
            stable: ManifoldSize::of(&ws),
            opts,
        })
    }

    pub fn manifolds(&self, c: f64) -> Result<(LocalManifold, LocalManifold), ShootingError> {
        let (su, ss) = self.problem.spectra(c);
        let m = &self.problem.model;
        let wu = self.unstable.build(m, &su, ManifoldKind::Unstable, &self.opts.manifold)?;
        let ws = self.stable.build(m, &ss, ManifoldKind::Stable, &self.opts.manifold)?;
        Ok((wu, ws))
    }

    pub fn mismatch(&self, b_u: &[f64], b_s: &[f64], xi: f64, c: f64) -> Result<Vec<f64>, ShootingError> {
        if !(xi >= 0.0 && c > 0.0) {
            return Err(ShootingError::InvalidInput(format!("need xi >= 0 and c > 0, got {xi}, {c}")));
        }
        let (wu, ws) = self.manifolds(c)?;
        let start = wu.sample_boundary(b_u)?;
        let end = flow(&self.problem.model, c, &start, xi, &self.opts.integrate)?;
        let target = ws.sample_boundary(b_s)?;
        Ok(end.iter().zip(&target).map(|(a, b)| a - b).collect())
    }

    /// Residual over `spheres = [b^u, b^s]`, `reals = [xi, c]`.
    pub fn residual(&self, x: &Unknowns) -> Result<Vec<f64>, ShootingError> {
        self.mismatch(&x.spheres[0], &x.spheres[1], x.reals[0], x.reals[1])
    }
}

/// `S_c(xi, h^u(b^u)) - h^s(b^s)` with the manifolds sized at `guess.c`.
pub fn mismatch_front(
    problem: &FrontProblem,
    guess: &FrontGuess,
    opts: &ShootingOptions,
) -> Result<Vec<f64>, ShootingError> {
    FrontMap::at(problem, guess.c, opts)?.mismatch(&guess.b_u, &guess.b_s, guess.xi, guess.c)
}

fn stop_events(problem: &FrontProblem) -> [EventSpec; 2] {
    let n = problem.direction();
    [
        EventSpec::hyperplane(n.clone(), problem.arrival.e.clone(), Crossing::Rising, true),
        EventSpec::new(EventKind::SymmetryCrossing { direction: n }, Crossing::Falling, true),
    ]
}

/// Overshoot indicator at speed `c` for the orbit leaving `E_-` along the
/// slow unstable direction pointing at `e_+`: `+|n.v|` where it crosses the
/// hyperplane through `e_+` normal to `n = e_+ - e_-`, `-|n.(u - e_+)|`
/// where it turns back first.
pub fn overshoot(problem: &FrontProblem, c: f64, opts: &ShootingOptions) -> Result<Option<f64>, ShootingError> {
    let (wu, _) = problem.manifolds(c, opts)?;
    let b = wu.slow_direction(Some(&problem.arrival.e));
    let start = wu.sample_boundary(&b)?;
    let n = problem.direction();
    let d = n.len();
    let out = match integrate_state(&problem.model, c, &start, (0.0, opts.xi_max), &opts.integrate, &stop_events(problem))
    {
        Ok(out) => out,
        Err(IntegrationError::Escape { .. }) | Err(IntegrationError::Stiffness { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let y = out.trajectory.states().last().expect("nonempty").clone();
    let (u, v) = y.split_at(d);
    Ok(match out.terminated_by {
        Some(0) => Some(dot(&n, v).abs()),
        Some(_) => {
            let diff: Vec<f64> = u.iter().zip(&problem.arrival.e).map(|(a, b)| a - b).collect();
            Some(-dot(&n, &diff).abs())
        }
        None if distance(u, &problem.arrival.e) <= opts.radius_fraction * problem.separation() => Some(0.0),
        None => None,
    })
}

/// Overshoot indicator on a speed grid, computed concurrently.
pub fn scan_speed(problem: &FrontProblem, grid: &[f64], opts: &ShootingOptions) -> Vec<SpeedSample> {
    grid.par_iter()
        .map(|&c| SpeedSample {
            speed: c,
            indicator: overshoot(problem, c, opts).ok().flatten(),
        })
        .collect()
}

fn seed_front(problem: &FrontProblem, opts: &ShootingOptions) -> Result<FrontGuess, ShootingError> {
    let (lo, hi) = problem.speeds;
    let n = opts.bracket_samples.max(2);
    let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let samples = scan_speed(problem, &grid, opts);
    let bracket = samples.windows(2).find_map(|w| match (w[0].indicator, w[1].indicator) {
        (Some(a), Some(b)) if a >= 0.0 && b < 0.0 => Some((w[0].speed, w[1].speed)),
        _ => None,
    });
    let Some((mut a, mut b)) = bracket else {
        return Err(ShootingError::NoBracket { lo, hi });
    };
    for _ in 0..200 {
        if b - a <= 1e-14 * (1.0 + b) {
            break;
        }
        let m = 0.5 * (a + b);
        match overshoot(problem, m, opts)? {
            Some(x) if x >= 0.0 => a = m,
            Some(_) => b = m,
            None => {
                return Err(ShootingError::NoConvergence(format!(
                    "overshoot indicator undefined at c = {m}"
                )))
            }
        }
    }
    // the overshooting side passes closest to E_+
    let c = a;
    let (wu, ws) = problem.manifolds(c, opts)?;
    let b_u = wu.slow_direction(Some(&problem.arrival.e));
    let start = wu.sample_boundary(&b_u)?;
    let [stop_a, stop_b] = stop_events(problem);
    let events = [ws.entry_event(true), stop_a, stop_b];
    let out = integrate_state(&problem.model, c, &start, (0.0, opts.xi_max), &opts.integrate, &events)?;
    if out.terminated_by != Some(0) {
        return Err(ShootingError::NoConvergence(
            "the bracketed orbit never enters the stable box of e_+".into(),
        ));
    }
    let hit = &out.events[0];
    let mut b_s = ws.tangent_coordinates(&hit.state);
    let nb = norm(&b_s);
    b_s.iter_mut().for_each(|x| *x /= nb);
    Ok(FrontGuess {
        b_u,
        b_s,
        xi: hit.xi,
        c,
    })
}

/// Tail from near `E_-`, transit, and tail into `E_+` (when given), with the
/// unstable boundary at `xi = 0`.
pub(crate) fn assemble(
    model: &PotentialModel,
    c: f64,
    wu: &LocalManifold,
    b_u: &[f64],
    xi: f64,
    stable: Option<(&LocalManifold, &[f64])>,
    opts: &ShootingOptions,
) -> Result<Trajectory, ShootingError> {
    let scaled = |w: &LocalManifold, b: &[f64]| -> Vec<f64> {
        let n = norm(b);
        b.iter().map(|x| x * w.radius() / n).collect()
    };
    let (tail_u, _) = wu.orbit_through(&scaled(wu, b_u), tail_depth(wu, opts.tail_depth))?;
    let start = wu.sample_boundary(b_u)?;
    let main = integrate_state(model, c, &start, (0.0, xi), &opts.integrate, &[])?.trajectory;
    let mut full = tail_u.concat(&main);
    if let Some((ws, b_s)) = stable {
        let (tail_s, _) = ws.orbit_through(&scaled(ws, b_s), tail_depth(ws, opts.tail_depth))?;
        full = full.concat(&tail_s.shifted(xi));
    }
    Ok(full)
}

/// Solves for a travelling front. Without a guess, the speed is bracketed on
/// a grid of the speed interval by the overshoot indicator and bisected,
/// and the transit time and stable coordinate are read off the first entry
/// into the stable box. Levenberg-Marquardt then solves the mismatch.
pub fn solve_front(
    problem: &FrontProblem,
    guess: Option<FrontGuess>,
    opts: &ShootingOptions,
) -> Result<ConnectionSolution, ShootingError> {
    let guess = match guess {
        Some(g) => g,
        None => seed_front(problem, opts)?,
    };
    let map = FrontMap::at(problem, guess.c, opts)?;
    let unit = |b: &[f64]| -> Vec<f64> {
        let n = norm(b);
        b.iter().map(|x| x / n).collect()
    };
    let rest_plus = problem.arrival.e.iter().copied().chain(std::iter::repeat(0.0).take(problem.arrival.e.len()));
    let tol = opts.solve_tol_for(&rest_plus.collect::<Vec<_>>());
    let x0 = Unknowns {
        spheres: vec![unit(&guess.b_u), unit(&guess.b_s)],
        reals: vec![guess.xi, guess.c],
    };
    let lm_opts = LmOptions {
        tol,
        max_iter: opts.max_iter,
        fd_step: opts.fd_step,
    };
    let report = lm::solve(&|x: &Unknowns| map.residual(x), x0, &lm_opts)?;
    if !report.converged {
        return Err(ShootingError::MaxIterations {
            iterations: report.iterations,
            mismatch: report.residual_norm,
        });
    }
    let (b_u, b_s) = (report.x.spheres[0].clone(), report.x.spheres[1].clone());
    let (xi, c) = (report.x.reals[0], report.x.reals[1]);
    let (wu, ws) = map.manifolds(c)?;
    let trajectory = assemble(&problem.model, c, &wu, &b_u, xi, Some((&ws, &b_s)), opts)?;
    Ok(ConnectionSolution {
        kind: ConnectionKind::Front,
        model: problem.model.clone(),
        speed: c,
        departure: problem.departure.clone(),
        arrival: problem.arrival.clone(),
        b_u,
        b_s: Some(b_s),
        transit: xi,
        trajectory,
        mismatch: report.residual_norm,
        turning_time: None,
        symmetry_distance: None,
        symmetric: false,
        iterations: report.iterations,
        unstable_size: map.unstable,
        stable_size: Some(map.stable),
        options: *opts,
    })
}

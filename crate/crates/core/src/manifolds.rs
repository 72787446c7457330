//! Local (strongly) stable and unstable manifolds as graphs over their
//! tangent spaces.
//!
//! Points are addressed by tangent coordinates `y = P (U - E)`, where `P` is
//! the spectral projection onto the tangent space along the complementary
//! invariant subspace. The linear graph is `E + Q y`. The refined graph
//! takes a seed `E + Q s` on the linear graph at radius `r / kappa`, flows it
//! out (in along the stable direction, backward in time) until its tangent
//! coordinate equals `y`, and solves for `s` by a fixed-point iteration on the
//! linear propagator. The seed's graph error is `O((r / kappa)^2)` and is
//! contracted further by the flow.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    field_into, integrate_system, DenseSolution, EventSpec, IntegrateOptions, IntegrationError, OdeOutcome,
    OdeSystem, Trajectory,
};
use crate::linalg::{dot, expm, linear_fit, norm, orthonormalize, to_dvector};
use crate::potential::PotentialModel;
use crate::spectral::{linearization, EquilibriumSpectrum, SpectralClass};

pub const DEFAULT_BUDGET: f64 = 1e-4;
pub const DEFAULT_KAPPA: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("radius {radius:e} violates the nonlinearity budget (ratio {ratio:e}); suggested radius {suggested:e}")]
    Radius { radius: f64, ratio: f64, suggested: f64 },
    #[error("strong splitting unavailable: {0}")]
    StrongSplittingUnavailable(String),
    #[error("the {0:?} tangent subspace is empty")]
    EmptySubspace(ManifoldKind),
    #[error("tangent and complementary subspaces are not independent")]
    Singular,
    #[error("refinement did not converge (tangent residual {residual:e})")]
    Refinement { residual: f64 },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Unstable,
    Stable,
    StrongUnstable,
    StrongStable,
}

impl ManifoldKind {
    pub fn is_stable(self) -> bool {
        matches!(self, Self::Stable | Self::StrongStable)
    }

    pub fn is_strong(self) -> bool {
        matches!(self, Self::StrongUnstable | Self::StrongStable)
    }

    /// Direction of time in which the manifold is expanding.
    fn sign(self) -> f64 {
        if self.is_stable() {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Linear,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldOptions {
    pub budget: f64,
    pub kappa: f64,
    /// Integration of deviations `U - E`.
    pub integrate: IntegrateOptions,
    /// Tangent-coordinate tolerance of the refinement, relative to `|y|`.
    pub refine_tol: f64,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            kappa: DEFAULT_KAPPA,
            integrate: IntegrateOptions {
                rtol: 1e-12,
                atol: 1e-16,
                ..IntegrateOptions::default()
            },
            refine_tol: 1e-12,
        }
    }
}

/// `z' = F(E + z)`.
struct Deviation<'a> {
    model: &'a PotentialModel,
    c: f64,
    rest: &'a [f64],
}

impl OdeSystem for Deviation<'_> {
    fn dimension(&self) -> usize {
        self.rest.len()
    }
    fn rhs(&self, _t: f64, z: &[f64], dz: &mut [f64]) -> Result<(), IntegrationError> {
        let y: Vec<f64> = z.iter().zip(self.rest).map(|(a, b)| a + b).collect();
        field_into(self.model, self.c, &y, dz)
    }
}

/// Result of a membership test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// `|S(window, U) - E|`.
    pub distance: f64,
    pub stayed_in_box: bool,
    /// Fitted `d log|S - E| / d xi` (strong kinds only).
    pub fitted_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalManifold {
    model: PotentialModel,
    spectrum: EquilibriumSpectrum,
    kind: ManifoldKind,
    radius: f64,
    order: Order,
    kappa: f64,
    opts: ManifoldOptions,
    rest: Vec<f64>,
    tangent: Vec<Vec<f64>>,
    projector: DMatrix<f64>,
    a_tan: DMatrix<f64>,
    beta_slow: f64,
    beta_fast: f64,
    /// `Re lambda` of the complementary directions.
    complement_rates: Vec<f64>,
}

/// Largest `|grad V(e + du) - D^2V(e) du| / |D^2V(e) du|` over sample points
/// of the tangent sphere of radius `rho`, with `du` the position part.
pub fn nonlinearity_ratio(model: &PotentialModel, e: &[f64], tangent: &[Vec<f64>], rho: f64) -> f64 {
    let d = e.len();
    let h = model.hessian(e);
    let g0 = model.gradient(e);
    let mut worst: f64 = 0.0;
    for b in sphere_samples(tangent) {
        let du: Vec<f64> = b[..d].iter().map(|x| rho * x).collect();
        if norm(&du) <= 1e-12 * rho {
            continue;
        }
        let u: Vec<f64> = e.iter().zip(&du).map(|(a, b)| a + b).collect();
        let g = model.gradient(&u);
        let hdu = &h * to_dvector(&du);
        let lin = hdu.norm();
        if lin == 0.0 {
            continue;
        }
        let diff: f64 = (0..d)
            .map(|i| {
                let r = g[i] - g0[i] - hdu[i];
                r * r
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / lin);
    }
    worst
}

/// Unit vectors of a subspace used to probe a sphere: `+-q_i` and
/// `(+-q_i +- q_j)/sqrt 2`.
fn sphere_samples(basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (i, q) in basis.iter().enumerate() {
        out.push(q.clone());
        out.push(q.iter().map(|x| -x).collect());
        for p in &basis[i + 1..] {
            for s in [1.0, -1.0] {
                for t in [1.0, -1.0] {
                    let v: Vec<f64> = q.iter().zip(p).map(|(a, b)| (s * a + t * b) / 2f64.sqrt()).collect();
                    out.push(v);
                }
            }
        }
    }
    out
}

fn tangent_and_complement(
    spectrum: &EquilibriumSpectrum,
    kind: ManifoldKind,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>), ManifoldError> {
    if kind.is_strong() {
        if let crate::spectral::Splitting::Unavailable { reason } = &spectrum.splitting {
            return Err(ManifoldError::StrongSplittingUnavailable(reason.clone()));
        }
    }
    let wanted = |x: &crate::spectral::SpectralDirection| match kind {
        ManifoldKind::Unstable => x.class == SpectralClass::Unstable,
        ManifoldKind::Stable => x.class == SpectralClass::Stable,
        ManifoldKind::StrongUnstable => x.branch == Some(1) && x.j >= 1,
        ManifoldKind::StrongStable => x.branch == Some(-1) && x.j >= 1,
    };
    let mut tangent = Vec::new();
    let mut complement = Vec::new();
    let mut rates = Vec::new();
    let mut others = Vec::new();
    for x in &spectrum.directions {
        if wanted(x) {
            tangent.push(x.vector.clone());
            rates.push(x.lambda.re.abs());
        } else {
            complement.push(x.vector.clone());
            others.push(x.lambda.re);
        }
    }
    if tangent.is_empty() {
        return Err(ManifoldError::EmptySubspace(kind));
    }
    Ok((orthonormalize(&tangent), complement, rates, others))
}

impl LocalManifold {
    pub fn build(
        model: &PotentialModel,
        spectrum: &EquilibriumSpectrum,
        kind: ManifoldKind,
        radius: f64,
        order: Order,
        opts: &ManifoldOptions,
    ) -> Result<Self, ManifoldError> {
        assert!(radius > 0.0, "manifold radius must be positive");
        assert!(opts.kappa >= 1.0, "refine factor must be at least 1");
        let (tangent, complement, rates, complement_rates) = tangent_and_complement(spectrum, kind)?;
        let n = 2 * spectrum.dimension();
        let k = tangent.len();
        let mut m = DMatrix::zeros(n, n);
        for (col, v) in tangent.iter().chain(&complement).enumerate() {
            for i in 0..n {
                m[(i, col)] = v[i];
            }
        }
        let inv = m.try_inverse().ok_or(ManifoldError::Singular)?;
        let projector = inv.rows(0, k).into_owned();
        let e = &spectrum.equilibrium.e;
        let df = linearization(&model.hessian(e), spectrum.speed);
        let q = DMatrix::from_fn(n, k, |i, j| tangent[j][i]);
        let a_tan = &projector * df * &q;
        let beta_slow = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta_fast = rates.iter().cloned().fold(0.0, f64::max);

        let kappa = match order {
            Order::Linear => 1.0,
            Order::Refined => opts.kappa,
        };
        let seed = radius / kappa;
        let ratio = nonlinearity_ratio(model, e, &tangent, seed);
        if ratio > opts.budget {
            let suggested = kappa * max_seed_radius(model, e, &tangent, opts.budget, seed);
            return Err(ManifoldError::Radius {
                radius,
                ratio,
                suggested,
            });
        }

        Ok(Self {
            model: model.clone(),
            spectrum: spectrum.clone(),
            kind,
            radius,
            order,
            kappa,
            opts: *opts,
            rest: spectrum.rest_state(),
            tangent,
            projector,
            a_tan,
            beta_slow,
            beta_fast,
            complement_rates,
        })
    }

    /// Default radius: `kappa` times the largest seed radius meeting the
    /// nonlinearity budget, capped at `cap`.
    pub fn default_radius(
        model: &PotentialModel,
        spectrum: &EquilibriumSpectrum,
        kind: ManifoldKind,
        opts: &ManifoldOptions,
        cap: f64,
    ) -> Result<f64, ManifoldError> {
        let (tangent, ..) = tangent_and_complement(spectrum, kind)?;
        let seed = max_seed_radius(model, &spectrum.equilibrium.e, &tangent, opts.budget, cap / opts.kappa);
        Ok(opts.kappa * seed)
    }

    /// Manifold sized for shooting: radius `fraction * separation` (with
    /// `separation` the distance to the nearest other equilibrium), seed
    /// radius within half the budget, and refine factor capped by
    /// [`Self::max_refine_factor`]. The boundary has to stay well away from
    /// `E` so that boundary crossings are transversal with a usable margin.
    pub fn for_shooting(
        model: &PotentialModel,
        spectrum: &EquilibriumSpectrum,
        kind: ManifoldKind,
        separation: f64,
        fraction: f64,
        opts: &ManifoldOptions,
    ) -> Result<Self, ManifoldError> {
        let (tangent, ..) = tangent_and_complement(spectrum, kind)?;
        let target = fraction * separation;
        let seed = max_seed_radius(model, &spectrum.equilibrium.e, &tangent, 0.5 * opts.budget, target);
        let kappa = (target / seed).min(Self::max_refine_factor(spectrum, kind)).max(1.0);
        Self::with_refine_factor(model, spectrum, kind, kappa * seed, kappa, opts)
    }

    /// Refined manifold with an explicit refine factor.
    pub fn with_refine_factor(
        model: &PotentialModel,
        spectrum: &EquilibriumSpectrum,
        kind: ManifoldKind,
        radius: f64,
        kappa: f64,
        opts: &ManifoldOptions,
    ) -> Result<Self, ManifoldError> {
        let opts = ManifoldOptions { kappa, ..*opts };
        Self::build(model, spectrum, kind, radius, Order::Refined, &opts)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn refine_factor(&self) -> f64 {
        self.kappa
    }

    pub fn spectrum(&self) -> &EquilibriumSpectrum {
        &self.spectrum
    }

    pub fn model(&self) -> &PotentialModel {
        &self.model
    }

    pub fn speed(&self) -> f64 {
        self.spectrum.speed
    }

    /// `E = (e, 0)`.
    pub fn rest_state(&self) -> &[f64] {
        &self.rest
    }

    pub fn tangent_dimension(&self) -> usize {
        self.tangent.len()
    }

    /// Dimension of the boundary sphere.
    pub fn boundary_dimension(&self) -> usize {
        self.tangent.len() - 1
    }

    /// Orthonormal tangent basis.
    pub fn tangent_basis(&self) -> &[Vec<f64>] {
        &self.tangent
    }

    /// Spectral projection onto tangent coordinates (`k x 2d`).
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn seed_radius(&self) -> f64 {
        self.radius / self.kappa
    }

    /// Slowest and fastest `|Re lambda|` on the tangent space.
    pub fn rates(&self) -> (f64, f64) {
        (self.beta_slow, self.beta_fast)
    }

    /// Largest refine factor before round-off near `E` dominates the
    /// transverse (fast) tangent coordinates.
    pub fn max_refine_factor(spectrum: &EquilibriumSpectrum, kind: ManifoldKind) -> f64 {
        let Ok((_, _, rates, _)) = tangent_and_complement(spectrum, kind) else {
            return f64::INFINITY;
        };
        let slow = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let fast = rates.iter().cloned().fold(0.0, f64::max);
        let scale = spectrum.equilibrium.e.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if rates.len() < 2 || fast <= slow * (1.0 + 1e-9) || scale == 0.0 {
            return f64::INFINITY;
        }
        let eta = 4.0 * f64::EPSILON * scale;
        (1e-12 / eta).max(1.0).powf(slow / fast)
    }

    pub fn tangent_coordinates(&self, state: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = state.iter().zip(&self.rest).map(|(a, b)| a - b).collect();
        (&self.projector * to_dvector(&z)).iter().copied().collect()
    }

    /// `E + Q y`.
    pub fn linear_point(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.rest.clone();
        for (q, c) in self.tangent.iter().zip(y) {
            for i in 0..out.len() {
                out[i] += c * q[i];
            }
        }
        out
    }

    fn deviation(&self) -> Deviation<'_> {
        Deviation {
            model: &self.model,
            c: self.spectrum.speed,
            rest: &self.rest,
        }
    }

    fn flow_deviation(&self, z0: &[f64], t0: f64, t1: f64) -> Result<OdeOutcome, IntegrationError> {
        integrate_system(&self.deviation(), z0, t0, t1, &self.opts.integrate, &[])
    }

    /// Solves for the linear-graph seed at radius `rho` whose orbit reaches
    /// tangent coordinate `y`. Returns the seed deviation, the signed flow
    /// time and the tangent residual.
    fn solve_seed(&self, y: &[f64], rho: f64) -> Result<(Vec<f64>, f64, f64, Vec<f64>), ManifoldError> {
        let ny = norm(y);
        let tau = self.kind.sign() * (ny / rho).ln() / self.beta_slow;
        let m = expm(&(&self.a_tan * (-tau)));
        let yv = to_dvector(y);
        let mut s = &m * &yv;
        let tol = self.opts.refine_tol * ny;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        let mut stalls = 0;
        for _ in 0..40 {
            let z0 = self.linear_point(s.as_slice());
            let z0: Vec<f64> = z0.iter().zip(&self.rest).map(|(a, b)| a - b).collect();
            let out = self.flow_deviation(&z0, 0.0, tau)?;
            let states = out.solution.states();
            let zt = if tau >= 0.0 {
                states.last().expect("nonempty").clone()
            } else {
                states[0].clone()
            };
            let py = &self.projector * to_dvector(&zt);
            let res = &yv - py;
            let rn = res.norm();
            let improved = best.as_ref().is_none_or(|b| rn < b.0);
            if improved {
                if best.as_ref().is_some_and(|b| rn > 0.5 * b.0) {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                best = Some((rn, z0.clone(), zt));
            } else {
                stalls += 1;
            }
            if rn <= tol || stalls >= 3 {
                break;
            }
            s += &m * res;
        }
        let (rn, z0, zt) = best.expect("at least one iteration");
        if rn > 1e-6 * ny {
            return Err(ManifoldError::Refinement { residual: rn });
        }
        Ok((z0, tau, rn, zt))
    }

    /// Manifold point with tangent coordinate `y` (`|y| <= r`).
    pub fn graph_point(&self, y: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        let rho = self.seed_radius();
        let ny = norm(y);
        if self.order == Order::Linear || ny <= rho {
            return Ok(self.linear_point(y));
        }
        let (_, _, _, zt) = self.solve_seed(y, rho)?;
        Ok(zt.iter().zip(&self.rest).map(|(a, b)| a + b).collect())
    }

    /// Boundary point for tangent direction `b` (rescaled to `|b| = r`).
    pub fn sample_boundary(&self, b: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        let nb = norm(b);
        assert!(nb > 0.0, "boundary coordinate must be nonzero");
        let y: Vec<f64> = b.iter().map(|x| x * self.radius / nb).collect();
        self.graph_point(&y)
    }

    pub fn sample_boundary_point(&self, b: &[f64]) -> Result<crate::dynamics::PhasePoint, ManifoldError> {
        Ok(crate::dynamics::PhasePoint::from_state(&self.sample_boundary(b)?))
    }

    /// Orbit through the manifold point with tangent coordinate `y`, from
    /// (or to) a seed of radius `depth` near `E`. The point `y` sits at
    /// `xi = 0`; unstable orbits cover `[-T, 0]`, stable ones `[0, T]`.
    /// The second value is the tangent-coordinate miss at `xi = 0`.
    pub fn orbit_through(&self, y: &[f64], depth: f64) -> Result<(Trajectory, f64), ManifoldError> {
        let ny = norm(y);
        let depth = depth.min(ny);
        let (z0, tau, miss, _) = if self.order == Order::Linear && depth >= ny {
            let z0: Vec<f64> = self.linear_point(y).iter().zip(&self.rest).map(|(a, b)| a - b).collect();
            (z0.clone(), 0.0, 0.0, z0)
        } else {
            self.solve_seed(y, depth)?
        };
        // integrate from the seed time toward xi = 0
        let out = self.flow_deviation(&z0, -tau, 0.0)?;
        let dense = shift_dense(out.solution, &self.rest);
        Ok((Trajectory::from_dense(&self.model, self.spectrum.speed, dense), miss))
    }

    /// Distance from `state` to the graph point with the same tangent
    /// coordinate (clipped to the manifold radius).
    pub fn distance_to(&self, state: &[f64]) -> Result<f64, ManifoldError> {
        let mut y = self.tangent_coordinates(state);
        let ny = norm(&y);
        if ny > self.radius {
            y.iter_mut().for_each(|x| *x *= self.radius / ny);
        }
        let p = if ny == 0.0 { self.rest.clone() } else { self.graph_point(&y)? };
        Ok(crate::linalg::distance(state, &p))
    }

    /// Longest contracting-direction window over which round-off in the
    /// complementary directions stays below `1e-8` of the fastest tangent
    /// decay.
    pub fn membership_window_limit(&self) -> f64 {
        let sigma = -self.kind.sign();
        let worst = self
            .complement_rates
            .iter()
            .map(|g| sigma * g + self.beta_fast)
            .fold(0.0, f64::max);
        if worst > 0.0 {
            1e8f64.ln() / worst
        } else {
            f64::INFINITY
        }
    }

    /// Integrates in the contracting direction for `window` (capped at
    /// [`Self::membership_window_limit`]) and decides whether the orbit stays
    /// near `E` and converges to it. Strong kinds additionally require the
    /// decay rate to beat the midpoint rate.
    pub fn membership_test(&self, state: &[f64], window: f64) -> Result<Membership, ManifoldError> {
        let window = window.min(self.membership_window_limit());
        let z0: Vec<f64> = state.iter().zip(&self.rest).map(|(a, b)| a - b).collect();
        let n0 = norm(&z0);
        if n0 == 0.0 {
            return Ok(Membership {
                member: true,
                distance: 0.0,
                stayed_in_box: true,
                fitted_rate: None,
            });
        }
        let box_radius = 2.0 * self.radius.max(n0);
        let t1 = -self.kind.sign() * window;
        let ev = [EventSpec::ball_exit(vec![0.0; z0.len()], box_radius, true)];
        let out = integrate_system(&self.deviation(), &z0, 0.0, t1, &self.opts.integrate, &ev)?;
        let stayed = out.terminated_by.is_none();
        let states = out.solution.states();
        let times = out.solution.times();
        let end = if t1 >= 0.0 { states.len() - 1 } else { 0 };
        let distance = norm(&states[end]);
        let expected = n0 * (-0.5 * self.beta_slow * window).exp() + 1e-14;
        let mut member = stayed && distance <= expected;

        let mut fitted_rate = None;
        if self.kind.is_strong() && stayed {
            let (xs, ls): (Vec<f64>, Vec<f64>) = times
                .iter()
                .zip(states)
                .filter(|(t, _)| t.abs() >= 0.5 * window)
                .filter_map(|(t, z)| {
                    let n = norm(z);
                    (n > 0.0).then(|| (*t, n.ln()))
                })
                .unzip();
            let rate = linear_fit(&xs, &ls).map(|(m, _)| m);
            fitted_rate = rate;
            let strong = self.spectrum.strong().expect("checked at build");
            let ok = match (self.kind, rate) {
                (ManifoldKind::StrongStable, Some(m)) => strong.lambda_3_2_minus.is_none_or(|l| m < l),
                (ManifoldKind::StrongUnstable, Some(m)) => strong.lambda_3_2_plus.is_none_or(|l| m > l),
                _ => false,
            };
            member = member && ok;
        }
        Ok(Membership {
            member,
            distance,
            stayed_in_box: stayed,
            fitted_rate,
        })
    }

    /// Unit vector in tangent coordinates along the slowest direction,
    /// oriented so that its position part points toward `target` when given.
    pub fn slow_direction(&self, target: Option<&[f64]>) -> Vec<f64> {
        let d = self.spectrum.dimension();
        let slow = self
            .spectrum
            .directions
            .iter()
            .filter(|x| {
                let wanted = matches!(
                    (self.kind, x.class, x.branch),
                    (ManifoldKind::Unstable, SpectralClass::Unstable, _)
                        | (ManifoldKind::Stable, SpectralClass::Stable, _)
                ) || (self.kind == ManifoldKind::StrongUnstable && x.branch == Some(1) && x.j >= 1)
                    || (self.kind == ManifoldKind::StrongStable && x.branch == Some(-1) && x.j >= 1);
                wanted
            })
            .min_by(|a, b| a.lambda.re.abs().total_cmp(&b.lambda.re.abs()))
            .expect("nonempty tangent space");
        let mut y: Vec<f64> = (&self.projector * to_dvector(&slow.vector)).iter().copied().collect();
        let n = norm(&y);
        y.iter_mut().for_each(|x| *x /= n);
        if let Some(t) = target {
            let pos = &slow.vector[..d];
            let toward: Vec<f64> = t.iter().zip(&self.spectrum.equilibrium.e).map(|(a, b)| a - b).collect();
            if dot(pos, &toward) < 0.0 {
                y.iter_mut().for_each(|x| *x = -*x);
            }
        }
        y
    }

    /// Boundary-crossing event for orbits entering the box of this manifold.
    pub fn entry_event(&self, terminal: bool) -> EventSpec {
        EventSpec::manifold_boundary(self.rest.clone(), self.radius, self.projector.clone(), terminal)
    }
}

fn shift_dense(mut dense: DenseSolution, rest: &[f64]) -> DenseSolution {
    for y in dense.states.iter_mut() {
        for (a, b) in y.iter_mut().zip(rest) {
            *a += b;
        }
    }
    for seg in dense.segments.iter_mut() {
        for (a, b) in seg.coeffs.iter_mut().zip(rest) {
            *a += b;
        }
    }
    dense
}

/// Bisection (in log radius) for the largest seed radius not exceeding
/// `cap` whose nonlinearity ratio meets `budget`.
fn max_seed_radius(model: &PotentialModel, e: &[f64], tangent: &[Vec<f64>], budget: f64, cap: f64) -> f64 {
    if nonlinearity_ratio(model, e, tangent, cap) <= budget {
        return cap;
    }
    let (mut lo, mut hi) = ((cap * 1e-12).ln(), cap.ln());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if nonlinearity_ratio(model, e, tangent, mid.exp()) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.exp()
}

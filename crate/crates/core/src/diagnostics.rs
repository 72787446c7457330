//! Transversality and elementarity certificates, the adjoint linearized
//! system with Melnikov sensitivities, and tangency at the ends of orbits.
//!
//! Jacobians are taken in the same local coordinates the solvers use:
//! tangent steps on the boundary spheres, then the reals. The `xi` column
//! is the vector field at the endpoint; every other column is a central
//! difference.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    integrate_system, vector_field_state, DenseSolution, IntegrateOptions, IntegrationError, OdeSystem, Trajectory,
};
use crate::linalg::{dot, gauss_legendre_unit, linear_fit, norm, singular_values, sphere_tangent_basis};
use crate::potential::{CriticalPoint, PotentialModel};
use crate::shooting::{
    solve_asymmetric_pulse, AsymmetricSeed, ConnectionKind, ConnectionSolution, FrontMap, FrontProblem, PulseMap,
    ShootingError,
};
use crate::spectral::spectrum_at;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("tangency window is empty: {0}")]
    Window(String),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsOptions {
    /// Relative singular-value cutoff.
    pub rank_tol: f64,
    /// Ratios within this factor of `rank_tol` give an inconclusive verdict.
    pub inconclusive_factor: f64,
    pub fd_step: f64,
    pub adjoint: IntegrateOptions,
    /// Largest quadrature panel for Melnikov integrals.
    pub max_panel: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-6,
            inconclusive_factor: 10.0,
            fd_step: 1e-6,
            adjoint: IntegrateOptions {
                rtol: 1e-12,
                atol: 1e-15,
                ..IntegrateOptions::default()
            },
            max_panel: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Transverse,
    Degenerate,
    Elementary,
    NonElementary,
    Inconclusive,
}

impl Verdict {
    pub fn is_positive(self) -> bool {
        matches!(self, Self::Transverse | Self::Elementary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDetails {
    /// Label of each Jacobian column.
    pub columns: Vec<String>,
    pub rank_tol: f64,
    /// `sigma_min / sigma_max` over the relevant singular values.
    pub ratio: f64,
    /// Asymmetric reports only: the input orbit meets `v = 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetric_input: Option<bool>,
    /// Front and pulse reports: the `xi` column against its central difference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_column_fd_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub kind: ConnectionKind,
    /// `[rows, columns]`.
    pub dims: [usize; 2],
    /// Row-major.
    pub jacobian: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub target_rank: usize,
    pub verdict: Verdict,
    /// Smallest relevant singular value (zero when there are fewer than
    /// `target_rank` of them).
    pub margin: f64,
    pub details: ReportDetails,
}

impl TransversalityReport {
    pub fn matrix(&self) -> DMatrix<f64> {
        let [r, c] = self.dims;
        DMatrix::from_fn(r, c, |i, j| self.jacobian[i][j])
    }

    /// Same report with column `to` replaced by a copy of column `from`,
    /// reclassified (a self-test of the rank decision).
    pub fn with_column_copied(&self, from: usize, to: usize, opts: &DiagnosticsOptions) -> Self {
        let mut m = self.matrix();
        let col = m.column(from).clone_owned();
        m.set_column(to, &col);
        let mut columns = self.details.columns.clone();
        columns[to] = format!("{} (copy)", columns[from]);
        let mut out = classify(self.kind, m, self.target_rank, columns, opts);
        out.details.symmetric_input = self.details.symmetric_input;
        out
    }
}

/// SVD-based rank decision, three-valued with the margin exposed.
pub fn classify(
    kind: ConnectionKind,
    jacobian: DMatrix<f64>,
    target_rank: usize,
    columns: Vec<String>,
    opts: &DiagnosticsOptions,
) -> TransversalityReport {
    let s = singular_values(&jacobian);
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|x| **x > opts.rank_tol * smax).count();
    let (margin, ratio) = if s.len() >= target_rank && target_rank > 0 && smax > 0.0 {
        let m = s[target_rank - 1];
        (m, m / smax)
    } else {
        (0.0, 0.0)
    };
    let f = opts.inconclusive_factor;
    let positive = ratio >= f * opts.rank_tol;
    let negative = ratio < opts.rank_tol / f || s.len() < target_rank;
    let elementary = kind == ConnectionKind::SymmetricPulse;
    let verdict = match (positive, negative, elementary) {
        (true, _, false) => Verdict::Transverse,
        (true, _, true) => Verdict::Elementary,
        (_, true, false) => Verdict::Degenerate,
        (_, true, true) => Verdict::NonElementary,
        _ => Verdict::Inconclusive,
    };
    TransversalityReport {
        kind,
        dims: [jacobian.nrows(), jacobian.ncols()],
        jacobian: jacobian.row_iter().map(|r| r.iter().copied().collect()).collect(),
        singular_values: s,
        rank,
        target_rank,
        verdict,
        margin,
        details: ReportDetails {
            columns,
            rank_tol: opts.rank_tol,
            ratio,
            symmetric_input: None,
            xi_column_fd_error: None,
        },
    }
}

fn moved(b: &[f64], t: &[f64], h: f64) -> Vec<f64> {
    let mut out: Vec<f64> = b.iter().zip(t).map(|(x, y)| x + h * y).collect();
    let n = norm(&out);
    out.iter_mut().for_each(|x| *x /= n);
    out
}

fn central<F>(f: &F, h: f64) -> Result<Vec<f64>, ShootingError>
where
    F: Fn(f64) -> Result<Vec<f64>, ShootingError>,
{
    let (p, m) = (f(h)?, f(-h)?);
    Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

fn assemble_columns(cols: Vec<Vec<f64>>, rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Front problem matching a solved front.
pub fn front_problem(sol: &ConnectionSolution) -> FrontProblem {
    FrontProblem {
        model: sol.model.clone(),
        departure: sol.departure.clone(),
        arrival: sol.arrival.clone(),
        speeds: (0.0, f64::INFINITY),
    }
}

/// Which unknown a Jacobian column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Bu(usize),
    Bs(usize),
    Xi,
    C,
}

fn label(c: Column) -> String {
    match c {
        Column::Bu(k) => format!("b_u[{k}]"),
        Column::Bs(k) => format!("b_s[{k}]"),
        Column::Xi => "xi".into(),
        Column::C => "c".into(),
    }
}

/// `D(Delta Phi)` at a front: `2d x (dim b^u - 1 + dim b^s - 1 + 2)`,
/// columns ordered `b^u, b^s, xi, c`.
pub fn front_jacobian(sol: &ConnectionSolution, opts: &DiagnosticsOptions) -> Result<(DMatrix<f64>, Vec<String>, f64), DiagnosticsError> {
    if sol.kind != ConnectionKind::Front {
        return Err(DiagnosticsError::Precondition("a front solution is required".into()));
    }
    let b_s = sol.b_s.as_ref().expect("fronts carry b_s");
    let stable = sol.stable_size.expect("fronts carry a stable size");
    let problem = front_problem(sol);
    let map = FrontMap {
        problem: &problem,
        unstable: sol.unstable_size,
        stable,
        opts: &sol.options,
    };
    let (xi, c) = (sol.transit, sol.speed);
    let tu = sphere_tangent_basis(&sol.b_u);
    let ts = sphere_tangent_basis(b_s);
    let mut cols: Vec<Column> = (0..tu.len()).map(Column::Bu).collect();
    cols.extend((0..ts.len()).map(Column::Bs));
    cols.push(Column::Xi);
    cols.push(Column::C);
    let h = opts.fd_step;
    let values: Vec<Result<Vec<f64>, ShootingError>> = cols
        .par_iter()
        .map(|col| match *col {
            Column::Bu(k) => central(&|t| map.mismatch(&moved(&sol.b_u, &tu[k], t), b_s, xi, c), h),
            Column::Bs(k) => central(&|t| map.mismatch(&sol.b_u, &moved(b_s, &ts[k], t), xi, c), h),
            Column::Xi => {
                let (wu, _) = map.manifolds(c)?;
                let start = wu.sample_boundary(&sol.b_u)?;
                let end = crate::dynamics::flow(&sol.model, c, &start, xi, &sol.options.integrate)?;
                Ok(vector_field_state(&sol.model, c, &end))
            }
            Column::C => {
                let hc = h * (1.0 + c.abs());
                central(&|t| map.mismatch(&sol.b_u, b_s, xi, c + t), hc)
            }
        })
        .collect();
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        out.push(v?);
    }
    let hx = h * (1.0 + xi.abs());
    let fd_xi = central(&|t| map.mismatch(&sol.b_u, b_s, xi + t, c), hx)?;
    let err = max_diff(&fd_xi, &out[cols.len() - 2]);
    let rows = 2 * sol.model.dimension();
    Ok((assemble_columns(out, rows), cols.into_iter().map(label).collect(), err))
}

/// Transversality of a travelling front in the `(U, c)` space: rank `2d`.
pub fn transversality_front(sol: &ConnectionSolution, opts: &DiagnosticsOptions) -> Result<TransversalityReport, DiagnosticsError> {
    let (j, labels, err) = front_jacobian(sol, opts)?;
    let target = j.nrows();
    let mut report = classify(ConnectionKind::Front, j, target, labels, opts);
    report.details.xi_column_fd_error = Some(err);
    Ok(report)
}

/// Elementarity of a symmetric pulse: the `v` component of the endpoint
/// map over `(b^u, xi)` at the turning time has rank `d`.
pub fn elementarity_symmetric(sol: &ConnectionSolution, opts: &DiagnosticsOptions) -> Result<TransversalityReport, DiagnosticsError> {
    if sol.kind != ConnectionKind::SymmetricPulse {
        return Err(DiagnosticsError::Precondition("a symmetric pulse solution is required".into()));
    }
    let xi_t = sol.turning_time.expect("symmetric pulses carry a turning time");
    let map = PulseMap::from_solution(sol);
    let d = sol.model.dimension();
    let tu = sphere_tangent_basis(&sol.b_u);
    let h = opts.fd_step;
    let mut cols: Vec<Vec<f64>> = tu
        .par_iter()
        .map(|t| central(&|s| map.symmetric_residual(&moved(&sol.b_u, t, s), xi_t), h))
        .collect::<Result<_, _>>()?;
    let end = map.endpoint(&sol.b_u, xi_t)?;
    let field = vector_field_state(&sol.model, 0.0, &end);
    cols.push(field[d..].to_vec());
    let fd_xi = central(&|s| map.symmetric_residual(&sol.b_u, xi_t + s), h * (1.0 + xi_t.abs()))?;
    let err = max_diff(&fd_xi, &field[d..]);
    let mut labels: Vec<String> = (0..tu.len()).map(|k| label(Column::Bu(k))).collect();
    labels.push(label(Column::Xi));
    let mut report = classify(ConnectionKind::SymmetricPulse, assemble_columns(cols, d), d, labels, opts);
    report.details.xi_column_fd_error = Some(err);
    Ok(report)
}

/// Level-set transversality of a symmetric pulse. The orbit is re-solved as
/// an asymmetric pulse seeded from its own reflection; a failing verdict is
/// reported as is.
pub fn level_set_transversality_symmetric(
    sol: &ConnectionSolution,
    opts: &DiagnosticsOptions,
) -> Result<TransversalityReport, DiagnosticsError> {
    if sol.kind != ConnectionKind::SymmetricPulse {
        return Err(DiagnosticsError::Precondition("a symmetric pulse solution is required".into()));
    }
    let xi_t = sol.turning_time.expect("symmetric pulses carry a turning time");
    let map = PulseMap::from_solution(sol);
    let start = map.unstable_manifold()?.sample_boundary(&sol.b_u).map_err(ShootingError::from)?;
    let d = sol.model.dimension();
    let mut mirrored = start;
    mirrored[d..].iter_mut().for_each(|x| *x = -*x);
    let b_s = map.stable_manifold()?.tangent_coordinates(&mirrored);
    let n = norm(&b_s);
    let seed = AsymmetricSeed {
        b_u: sol.b_u.clone(),
        b_s: b_s.iter().map(|x| x / n).collect(),
        xi: 2.0 * xi_t,
    };
    let asym = solve_asymmetric_pulse(&sol.model, &sol.departure, Some(seed), &sol.options)?;
    transversality_asymmetric(&asym, opts)
}

/// Transversality inside the level set `H = -V(e)`: the level-set mismatch
/// over `(b^u, b^s, xi)` has rank `2d - 1`.
pub fn transversality_asymmetric(sol: &ConnectionSolution, opts: &DiagnosticsOptions) -> Result<TransversalityReport, DiagnosticsError> {
    if sol.kind != ConnectionKind::AsymmetricPulse {
        return Err(DiagnosticsError::Precondition("an asymmetric pulse solution is required".into()));
    }
    let b_s = sol.b_s.as_ref().expect("asymmetric pulses carry b_s");
    let map = PulseMap::from_solution(sol);
    let xi = sol.transit;
    let tu = sphere_tangent_basis(&sol.b_u);
    let ts = sphere_tangent_basis(b_s);
    let mut cols: Vec<Column> = (0..tu.len()).map(Column::Bu).collect();
    cols.extend((0..ts.len()).map(Column::Bs));
    cols.push(Column::Xi);
    let h = opts.fd_step;
    let values: Vec<Vec<f64>> = cols
        .par_iter()
        .map(|col| match *col {
            Column::Bu(k) => central(&|t| map.level_mismatch(&moved(&sol.b_u, &tu[k], t), b_s, xi), h),
            Column::Bs(k) => central(&|t| map.level_mismatch(&sol.b_u, &moved(b_s, &ts[k], t), xi), h),
            Column::Xi => central(&|t| map.level_mismatch(&sol.b_u, b_s, xi + t), h * (1.0 + xi.abs())),
            Column::C => unreachable!("pulses have no speed column"),
        })
        .collect::<Result<_, _>>()?;
    let rows = 2 * sol.model.dimension() - 1;
    let labels = cols.into_iter().map(label).collect();
    let mut report = classify(ConnectionKind::AsymmetricPulse, assemble_columns(values, rows), rows, labels, opts);
    report.details.symmetric_input = Some(sol.symmetric);
    Ok(report)
}

/// `(phi, psi)' = -(0, D^2V; id, -c) (phi, psi)` along a base orbit.
struct AdjointSystem<'a> {
    model: &'a PotentialModel,
    c: f64,
    base: &'a Trajectory,
}

impl OdeSystem for AdjointSystem<'_> {
    fn dimension(&self) -> usize {
        2 * self.model.dimension()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        let d = self.model.dimension();
        let u = self.base.position_at(t).ok_or(IntegrationError::Evaluation { xi: t })?;
        let h = self.model.hessian(&u);
        let (phi, psi) = y.split_at(d);
        for i in 0..d {
            let hpsi: f64 = (0..d).map(|j| h[(i, j)] * psi[j]).sum();
            dy[i] = -hpsi;
            dy[d + i] = -phi[i] + self.c * psi[i];
        }
        Ok(())
    }
}

/// Forward linearized system `(du, dv)' = (dv, D^2V du - c dv)`.
struct LinearizedSystem<'a> {
    model: &'a PotentialModel,
    c: f64,
    base: &'a Trajectory,
}

impl OdeSystem for LinearizedSystem<'_> {
    fn dimension(&self) -> usize {
        2 * self.model.dimension()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        let d = self.model.dimension();
        let u = self.base.position_at(t).ok_or(IntegrationError::Evaluation { xi: t })?;
        let h = self.model.hessian(&u);
        let (du, dv) = y.split_at(d);
        for i in 0..d {
            dy[i] = dv[i];
            dy[d + i] = (0..d).map(|j| h[(i, j)] * du[j]).sum::<f64>() - self.c * dv[i];
        }
        Ok(())
    }
}

/// Solution of the adjoint linearized system along a base trajectory.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub speed: f64,
    pub terminal_time: f64,
    dense: DenseSolution,
}

impl AdjointSolution {
    pub fn dimension(&self) -> usize {
        self.dense.dimension() / 2
    }

    pub fn span(&self) -> (f64, f64) {
        (self.dense.t_start(), self.dense.t_end())
    }

    /// `(phi, psi)` at `xi`.
    pub fn at(&self, xi: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dimension();
        self.dense.eval(xi).map(|mut y| {
            let psi = y.split_off(d);
            (y, psi)
        })
    }

    /// Accepted points `(xi, phi, psi)`.
    pub fn samples(&self) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        let d = self.dimension();
        self.dense
            .times()
            .iter()
            .zip(self.dense.states())
            .map(|(t, y)| (*t, y[..d].to_vec(), y[d..].to_vec()))
            .collect()
    }

    /// `max |<(phi, psi)(xi), W(xi)> - <(phi, psi)(xi_1), W(xi_1)>|` over
    /// accepted points, with `W = U_1'` the derivative of the base orbit.
    pub fn pairing_drift(&self, model: &PotentialModel, base: &Trajectory) -> f64 {
        let pair = |t: f64, y: &[f64]| -> f64 {
            let u = base.state_at(t).expect("adjoint span inside the base orbit");
            dot(y, &vector_field_state(model, self.speed, &u))
        };
        let t1 = self.terminal_time;
        let p1 = pair(t1, &self.dense.eval(t1).expect("terminal time"));
        self.dense
            .times()
            .iter()
            .zip(self.dense.states())
            .map(|(t, y)| (pair(*t, y) - p1).abs())
            .fold(0.0, f64::max)
    }
}

/// Integrates the adjoint from `(phi_1, psi_1)` at `span.0` to `span.1`
/// along `base`.
pub fn adjoint_along(
    model: &PotentialModel,
    base: &Trajectory,
    terminal: &[f64],
    span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<AdjointSolution, DiagnosticsError> {
    let d = model.dimension();
    if terminal.len() != 2 * d {
        return Err(DiagnosticsError::Precondition(format!(
            "terminal adjoint state needs {} components",
            2 * d
        )));
    }
    for t in [span.0, span.1] {
        if base.state_at(t).is_none() {
            return Err(DiagnosticsError::Precondition(format!("xi = {t} is outside the base orbit")));
        }
    }
    let sys = AdjointSystem {
        model,
        c: base.speed(),
        base,
    };
    let out = integrate_system(&sys, terminal, span.0, span.1, opts, &[])?;
    Ok(AdjointSolution {
        speed: base.speed(),
        terminal_time: span.0,
        dense: out.solution,
    })
}

/// Default adjoint span of a solution: from the matching point back to the
/// unstable boundary at `xi = 0`.
pub fn matching_span(sol: &ConnectionSolution) -> (f64, f64) {
    (sol.turning_time.unwrap_or(sol.transit), 0.0)
}

pub fn adjoint_integrate(
    sol: &ConnectionSolution,
    terminal: &[f64],
    span: Option<(f64, f64)>,
    opts: &DiagnosticsOptions,
) -> Result<AdjointSolution, DiagnosticsError> {
    adjoint_along(&sol.model, &sol.trajectory, terminal, span.unwrap_or_else(|| matching_span(sol)), &opts.adjoint)
}

/// Forward linearized solution from `w0` at `span.0`.
pub fn linearized_along(
    model: &PotentialModel,
    base: &Trajectory,
    w0: &[f64],
    span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<DenseSolution, DiagnosticsError> {
    let sys = LinearizedSystem {
        model,
        c: base.speed(),
        base,
    };
    Ok(integrate_system(&sys, w0, span.0, span.1, opts, &[])?.solution)
}

/// `integral grad W(u_1(xi)) . psi(xi) dxi` over the adjoint span, on
/// Gauss-Legendre panels no longer than `max_panel`.
pub fn melnikov_sensitivity(
    base: &Trajectory,
    adjoint: &AdjointSolution,
    w: &PotentialModel,
    opts: &DiagnosticsOptions,
) -> f64 {
    let d = adjoint.dimension();
    let (a, b) = adjoint.span();
    let mut knots: Vec<f64> = adjoint
        .dense
        .times()
        .iter()
        .chain(base.xi())
        .copied()
        .filter(|t| *t >= a && *t <= b)
        .collect();
    knots.push(a);
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let (nodes, weights) = gauss_legendre_unit();
    let mut y = vec![0.0; 2 * d];
    let mut g = vec![0.0; d];
    let mut total = 0.0;
    for pair in knots.windows(2) {
        let len = pair[1] - pair[0];
        let pieces = (len / opts.max_panel).ceil().max(1.0) as usize;
        let h = len / pieces as f64;
        for p in 0..pieces {
            let t0 = pair[0] + h * p as f64;
            for (x, wt) in nodes.iter().zip(&weights) {
                let t = t0 + x * h;
                let u = base.position_at(t).expect("span inside the base orbit");
                w.gradient_into(&u, &mut g);
                adjoint.dense.eval_into(t, &mut y);
                total += wt * h * dot(&g, &y[d..]);
            }
        }
    }
    total
}

/// First-order change of the connection mismatch under `V -> V + eps W`,
/// from one adjoint per unit terminal vector.
pub fn melnikov_vector(
    sol: &ConnectionSolution,
    w: &PotentialModel,
    opts: &DiagnosticsOptions,
) -> Result<Vec<f64>, DiagnosticsError> {
    let n = 2 * sol.model.dimension();
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let adj = adjoint_integrate(sol, &e, None, opts)?;
            Ok(melnikov_sensitivity(&sol.trajectory, &adj, w, opts))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    /// `xi -> -infinity`, the departure point.
    Left,
    /// `xi -> +infinity`, the arrival point.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangencyVerdict {
    SlowTangent,
    Fast,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangencyOptions {
    /// Distances to the equilibrium covered by the fit.
    pub window: (f64, f64),
    pub rate_tol: f64,
    /// Required `1 - |cos|` bound.
    pub cos_tol: f64,
    pub samples: usize,
}

impl Default for TangencyOptions {
    fn default() -> Self {
        Self {
            window: (1e-8, 1e-3),
            rate_tol: 1e-2,
            cos_tol: 1e-4,
            samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub end: End,
    pub verdict: TangencyVerdict,
    /// `lambda_{1,+}` (left) or `lambda_{1,-}` (right).
    pub expected_rate: Option<f64>,
    pub fitted_rate: Option<f64>,
    /// `|cos|` between `u - e` and `u_1` at the deepest point of the window.
    pub direction_cosine: Option<f64>,
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

fn unavailable(end: End, reason: String) -> TangencyReport {
    TangencyReport {
        end,
        verdict: TangencyVerdict::Unavailable,
        expected_rate: None,
        fitted_rate: None,
        direction_cosine: None,
        window: None,
        reason: Some(reason),
    }
}

/// Slow or fast approach of `traj` to the minimum `e` at one end.
pub fn tangency_of(
    model: &PotentialModel,
    traj: &Trajectory,
    e: &CriticalPoint,
    end: End,
    opts: &TangencyOptions,
) -> Result<TangencyReport, DiagnosticsError> {
    if !e.is_minimum() {
        return Ok(unavailable(end, "the end point is not a minimum".into()));
    }
    let spectrum = spectrum_at(model, e, traj.speed());
    if spectrum.strong().is_none() {
        return Ok(unavailable(end, "the smallest Hessian eigenvalue is not simple".into()));
    }
    let (lm, lp) = spectrum.pairs[0];
    let expected = match end {
        End::Left => lp.re,
        End::Right => lm.re,
    };
    let u1 = e.hessian_eigenvectors[0].clone();
    let d = model.dimension();
    let dist = |y: &[f64]| -> f64 {
        let du: Vec<f64> = y[..d].iter().zip(&e.e).map(|(a, b)| a - b).collect();
        norm(&du)
    };
    let (lo, hi) = opts.window;
    let xs = traj.xi();
    let ys = traj.states();
    let idx: Vec<usize> = match end {
        End::Right => (0..xs.len()).collect(),
        End::Left => (0..xs.len()).rev().collect(),
    };
    // last accepted point outside the window, walking towards the end
    let start = idx.iter().rposition(|&k| dist(&ys[k]) > hi).map_or(0, |p| p + 1);
    let inner: Vec<usize> = idx[start..].iter().copied().filter(|&k| dist(&ys[k]) >= lo).collect();
    if inner.len() < 2 {
        return Err(DiagnosticsError::Window(format!(
            "fewer than two accepted points with |u - e| in [{lo:e}, {hi:e}]"
        )));
    }
    let (ta, tb) = (xs[inner[0]], xs[*inner.last().expect("nonempty")]);
    let n = opts.samples.max(2);
    let mut ts = Vec::with_capacity(n);
    let mut logs = Vec::with_capacity(n);
    for i in 0..n {
        let t = ta + (tb - ta) * i as f64 / (n - 1) as f64;
        let y = traj.state_at(t).expect("inside trajectory");
        ts.push(t);
        logs.push(dist(&y).ln());
    }
    let (slope, _) = linear_fit(&ts, &logs).ok_or_else(|| DiagnosticsError::Window("degenerate window".into()))?;
    let deep = traj.state_at(tb).expect("inside trajectory");
    let du: Vec<f64> = deep[..d].iter().zip(&e.e).map(|(a, b)| a - b).collect();
    let cos = dot(&du, &u1).abs() / norm(&du);
    let slow = (slope - expected).abs() <= opts.rate_tol && cos >= 1.0 - opts.cos_tol;
    Ok(TangencyReport {
        end,
        verdict: if slow {
            TangencyVerdict::SlowTangent
        } else {
            TangencyVerdict::Fast
        },
        expected_rate: Some(expected),
        fitted_rate: Some(slope),
        direction_cosine: Some(cos),
        window: Some((ta.min(tb), ta.max(tb))),
        reason: None,
    })
}

pub fn tangency_check(sol: &ConnectionSolution, end: End, opts: &TangencyOptions) -> Result<TangencyReport, DiagnosticsError> {
    let e = match end {
        End::Left => &sol.departure,
        End::Right => &sol.arrival,
    };
    tangency_of(&sol.model, &sol.trajectory, e, end, opts)
}

#[cfg(test)]
mod tests;

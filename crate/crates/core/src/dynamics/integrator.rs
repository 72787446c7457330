//! Dormand-Prince 5(4) with its native quartic dense output.

use super::events::{EventHit, EventSpec};
use super::IntegrationError;
use crate::linalg::norm;

/// Right-hand side `y' = f(t, y)`.
pub trait OdeSystem: Sync {
    fn dimension(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest allowed step magnitude.
    pub max_step: f64,
    pub blowup_radius: f64,
    /// Tolerance on event times.
    pub event_tol: f64,
}

impl IntegrateOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 500_000,
            max_step: f64::INFINITY,
            blowup_radius: 1e6,
            event_tol: 1e-12,
        }
    }
}

/// One accepted step. The interpolant is a polynomial in
/// `theta = (t - t0) / h` with `h` signed in the original time.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Segment {
    pub t0: f64,
    pub h: f64,
    /// `5 * dim` coefficients, row by row.
    pub coeffs: Vec<f64>,
}

impl Segment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.coeffs;
        for i in 0..n {
            out[i] = r[i] + th * (r[n + i] + th1 * (r[2 * n + i] + th * (r[3 * n + i] + th1 * r[4 * n + i])));
        }
    }

    pub fn map_components(&mut self, n: usize, f: impl Fn(usize, f64) -> f64) {
        for k in 0..5 {
            for i in 0..n {
                let idx = k * n + i;
                self.coeffs[idx] = f(i, self.coeffs[idx]);
            }
        }
    }
}

/// Accepted points plus the piecewise interpolant between them, ordered by
/// increasing time regardless of the integration direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    pub(crate) dim: usize,
    pub(crate) times: Vec<f64>,
    pub(crate) states: Vec<Vec<f64>>,
    /// `segments[k]` joins `times[k]` and `times[k + 1]`.
    pub(crate) segments: Vec<Segment>,
}

impl DenseSolution {
    pub fn constant(t: f64, y: Vec<f64>) -> Self {
        Self {
            dim: y.len(),
            times: vec![t],
            states: vec![y],
            segments: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start() && t <= self.t_end()
    }

    fn segment_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => k.min(self.segments.len().saturating_sub(1)),
            Err(k) => (k.saturating_sub(1)).min(self.segments.len().saturating_sub(1)),
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> bool {
        if !self.contains(t) {
            return false;
        }
        if self.segments.is_empty() {
            out.copy_from_slice(&self.states[0]);
            return true;
        }
        let k = self.segment_index(t);
        if t == self.times[k] {
            out.copy_from_slice(&self.states[k]);
        } else if t == self.times[k + 1] {
            out.copy_from_slice(&self.states[k + 1]);
        } else {
            self.segments[k].eval_into(t, out);
        }
        true
    }

    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out).then_some(out)
    }

    pub(crate) fn shift(&mut self, dt: f64) {
        self.times.iter_mut().for_each(|t| *t += dt);
        self.segments.iter_mut().for_each(|s| s.t0 += dt);
    }

    /// Appends `other`, which must start where `self` ends.
    pub(crate) fn append(&mut self, other: &DenseSolution) {
        assert_eq!(self.dim, other.dim);
        let skip = usize::from(!self.times.is_empty());
        self.times.extend_from_slice(&other.times[skip..]);
        self.states.extend(other.states[skip..].iter().cloned());
        self.segments.extend(other.segments.iter().cloned());
    }

    fn reverse(&mut self) {
        self.times.reverse();
        self.states.reverse();
        self.segments.reverse();
    }
}

/// What the integrator produced, and why it stopped.
#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub solution: DenseSolution,
    pub events: Vec<EventHit>,
    /// Index into the event list of the terminal event that stopped the run.
    pub terminated_by: Option<usize>,
}

struct Reversed<'a, S: OdeSystem + ?Sized> {
    inner: &'a S,
    t0: f64,
    sign: f64,
}

impl<S: OdeSystem + ?Sized> Reversed<'_, S> {
    fn time(&self, s: f64) -> f64 {
        self.t0 + self.sign * s
    }

    fn f(&self, s: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        self.inner.rhs(self.time(s), y, dy)?;
        if self.sign < 0.0 {
            dy.iter_mut().for_each(|x| *x = -*x);
        }
        if dy.iter().any(|x| !x.is_finite()) {
            return Err(IntegrationError::Evaluation { xi: self.time(s) });
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combo(y: &[f64], h: f64, ks: &[(&[f64], f64)], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (k, a) in ks {
            acc += a * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn weighted_rms(x: &[f64], y0: &[f64], y1: &[f64], opts: &IntegrateOptions) -> f64 {
    let n = x.len().max(1);
    let s: f64 = x
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (s / n as f64).sqrt()
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &Reversed<'_, S>,
    y0: &[f64],
    f0: &[f64],
    opts: &IntegrateOptions,
    span: f64,
) -> Result<f64, IntegrationError> {
    let n = y0.len();
    let d0 = weighted_rms(y0, y0, y0, opts);
    let d1 = weighted_rms(f0, y0, y0, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut y1 = vec![0.0; n];
    for i in 0..n {
        y1[i] = y0[i] + h0 * f0[i];
    }
    let mut f1 = vec![0.0; n];
    sys.f(h0, &y1, &mut f1)?;
    let df: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = weighted_rms(&df, y0, y0, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span).min(opts.max_step))
}

/// Integrates `sys` from `t0` to `t1` (either order). Backward runs
/// integrate the negated field in a forward auxiliary time.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: &IntegrateOptions,
    events: &[EventSpec],
) -> Result<OdeOutcome, IntegrationError> {
    let n = sys.dimension();
    assert_eq!(n, y0.len(), "initial state has wrong dimension");
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(IntegrationError::Evaluation { xi: t0 });
    }
    let sign = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let rev = Reversed {
        inner: sys,
        t0,
        sign,
    };

    let mut sol = DenseSolution::constant(t0, y0.to_vec());
    let mut hits = Vec::new();
    if span == 0.0 {
        return Ok(OdeOutcome {
            solution: sol,
            events: hits,
            terminated_by: None,
        });
    }

    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rev.f(0.0, &y, &mut k1)?;
    let mut s = 0.0_f64;
    let mut h = initial_step(&rev, &y, &k1, opts, span)?;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut g_prev: Vec<f64> = events.iter().map(|e| e.value(&y)).collect();
    let mut rejected_last = false;
    let mut steps = 0usize;

    while s < span {
        steps += 1;
        if steps > opts.max_steps {
            return Err(IntegrationError::Stiffness {
                xi: rev.time(s),
                step: h,
            });
        }
        let last = s + h >= span * (1.0 - 4.0 * f64::EPSILON);
        if last {
            h = span - s;
        }
        if h <= 8.0 * f64::EPSILON * s.abs().max(1.0) {
            return Err(IntegrationError::Stiffness {
                xi: rev.time(s),
                step: h,
            });
        }

        combo(&y, h, &[(&k1, A21)], &mut tmp);
        rev.f(s + C2 * h, &tmp, &mut k2)?;
        combo(&y, h, &[(&k1, A31), (&k2, A32)], &mut tmp);
        rev.f(s + C3 * h, &tmp, &mut k3)?;
        combo(&y, h, &[(&k1, A41), (&k2, A42), (&k3, A43)], &mut tmp);
        rev.f(s + C4 * h, &tmp, &mut k4)?;
        combo(&y, h, &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)], &mut tmp);
        rev.f(s + C5 * h, &tmp, &mut k5)?;
        combo(&y, h, &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)], &mut tmp);
        rev.f(s + h, &tmp, &mut k6)?;
        combo(&y, h, &[(&k1, A71), (&k3, A73), (&k4, A74), (&k5, A75), (&k6, A76)], &mut ynew);
        let s_new = if last { span } else { s + h };
        rev.f(s_new, &ynew, &mut k7)?;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = weighted_rms(&err, &y, &ynew, opts);
        if !en.is_finite() {
            h *= 0.2;
            rejected_last = true;
            continue;
        }
        if en > 1.0 {
            let fac = (0.9 * en.powf(-0.2)).max(0.2);
            h *= fac;
            rejected_last = true;
            continue;
        }

        // accepted: build the interpolant in original time
        let mut coeffs = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = ynew[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[i] = y[i];
            coeffs[n + i] = ydiff;
            coeffs[2 * n + i] = bspl;
            coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
            coeffs[4 * n + i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let seg = Segment {
            t0: rev.time(s),
            h: sign * (s_new - s),
            coeffs,
        };

        // events between the two accepted points
        let mut stop: Option<(usize, f64)> = None;
        let g_new: Vec<f64> = events.iter().map(|e| e.value(&ynew)).collect();
        let mut found: Vec<(f64, usize)> = Vec::new();
        for (k, ev) in events.iter().enumerate() {
            if ev.crosses(g_prev[k], g_new[k]) {
                let te = locate(&seg, ev, g_prev[k], g_new[k], opts.event_tol, n);
                found.push((te, k));
            }
        }
        found.sort_by(|a, b| (sign * a.0).total_cmp(&(sign * b.0)).then(a.1.cmp(&b.1)));
        for (te, k) in found {
            let mut state = vec![0.0; n];
            seg.eval_into(te, &mut state);
            hits.push(EventHit {
                index: k,
                xi: te,
                state,
            });
            if events[k].terminal {
                stop = Some((k, te));
                break;
            }
        }

        if let Some((k, te)) = stop {
            let mut state = vec![0.0; n];
            seg.eval_into(te, &mut state);
            if te != rev.time(s) {
                sol.times.push(te);
                sol.states.push(state);
                sol.segments.push(seg);
            }
            if sign < 0.0 {
                sol.reverse();
            }
            return Ok(OdeOutcome {
                solution: sol,
                events: hits,
                terminated_by: Some(k),
            });
        }

        let t_new = if last { t1 } else { rev.time(s_new) };
        sol.times.push(t_new);
        sol.states.push(ynew.clone());
        sol.segments.push(seg);

        if norm(&ynew) > opts.blowup_radius {
            return Err(IntegrationError::Escape {
                xi: t_new,
                norm: norm(&ynew),
            });
        }

        std::mem::swap(&mut y, &mut ynew);
        std::mem::swap(&mut k1, &mut k7);
        g_prev = g_new;
        s = s_new;

        let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
        fac = fac.clamp(0.2, 10.0);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;
        h = (h * fac).min(opts.max_step);
    }

    if sign < 0.0 {
        sol.reverse();
    }
    Ok(OdeOutcome {
        solution: sol,
        events: hits,
        terminated_by: None,
    })
}

/// Brent-style bracketing (Illinois false position with bisection guard)
/// on the dense output.
fn locate(seg: &Segment, ev: &EventSpec, ga: f64, gb: f64, tol: f64, n: usize) -> f64 {
    let mut a = seg.t0;
    let mut b = seg.t1();
    if gb == 0.0 {
        return b;
    }
    let (mut fa, mut fb) = (ga, gb);
    let mut y = vec![0.0; n];
    let mut side = 0i32;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut m = (a * fb - b * fa) / (fb - fa);
        if !m.is_finite() || (m - a) * (m - b) >= 0.0 {
            m = 0.5 * (a + b);
        }
        seg.eval_into(m, &mut y);
        let fm = ev.value(&y);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fb > 0.0) {
            b = m;
            fb = fm;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = m;
            fa = fm;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        // plain bisection when false position stagnates
        if (b - a).abs() > tol {
            let mid = 0.5 * (a + b);
            seg.eval_into(mid, &mut y);
            let fmid = ev.value(&y);
            if fmid == 0.0 {
                return mid;
            }
            if (fmid > 0.0) == (fb > 0.0) {
                b = mid;
                fb = fmid;
            } else {
                a = mid;
                fa = fmid;
            }
        }
    }
    0.5 * (a + b)
}

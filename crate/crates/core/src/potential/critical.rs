use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PotentialError, PotentialModel};
use crate::linalg::{distance, jacobi_eigen, norm, pseudo_inverse, to_dvector};

pub const DEDUP_RADIUS: f64 = 1e-6;
const DEGENERACY_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 100;

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    /// `[-half, half]^d`.
    pub fn cube(d: usize, half: f64) -> Self {
        Self::new(vec![-half; d], vec![half; d])
    }

    fn validate(&self, d: usize) -> Result<(), PotentialError> {
        if self.lower.len() != d || self.upper.len() != d {
            return Err(PotentialError::SearchBox(format!(
                "box has {}/{} bounds for dimension {d}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (a, b) in self.lower.iter().zip(&self.upper) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(PotentialError::SearchBox(format!("bad interval [{a}, {b}]")));
            }
        }
        Ok(())
    }

    fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (a, b))| *x >= a - slack && *x <= b + slack)
    }

    fn diameter(&self) -> f64 {
        distance(&self.lower, &self.upper)
    }
}

/// A non-degenerate critical point with its Hessian eigenstructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub e: Vec<f64>,
    pub value: f64,
    pub morse_index: usize,
    /// Ascending.
    pub hessian_eigenvalues: Vec<f64>,
    pub hessian_eigenvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateCritical {
    pub e: Vec<f64>,
    pub value: f64,
    pub hessian_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    /// Sorted lexicographically by coordinates.
    pub points: Vec<CriticalPoint>,
    pub degenerate: Vec<DegenerateCritical>,
}

pub fn newton_tolerance(hessian: &DMatrix<f64>) -> f64 {
    1e-12 * (1.0 + hessian.norm())
}

impl CriticalPoint {
    pub fn is_minimum(&self) -> bool {
        self.morse_index == 0
    }

    pub fn dimension(&self) -> usize {
        self.e.len()
    }

    /// Classifies a point already known to be critical. Fails with
    /// `DegenerateCritical` when the Hessian is (numerically) singular.
    pub fn classify(model: &PotentialModel, e: &[f64]) -> Result<Self, PotentialError> {
        let ev = model.eval(e)?;
        let eig = jacobi_eigen(&ev.hessian);
        let radius = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let smallest = eig.values.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        if smallest <= DEGENERACY_TOL * radius || radius == 0.0 {
            return Err(PotentialError::DegenerateCritical {
                at: e.to_vec(),
                smallest,
            });
        }
        Ok(Self {
            e: e.to_vec(),
            value: ev.value,
            morse_index: eig.values.iter().filter(|m| **m < 0.0).count(),
            hessian_eigenvalues: eig.values,
            hessian_eigenvectors: eig.vectors,
        })
    }

    /// Refines an approximate critical point by Newton and classifies it.
    pub fn refine(model: &PotentialModel, guess: &[f64]) -> Result<Self, PotentialError> {
        let e = newton(model, guess, f64::INFINITY).ok_or(PotentialError::NoConvergence {
            from: guess.to_vec(),
        })?;
        Self::classify(model, &e)
    }
}

/// Damped Newton on `grad V = 0` with backtracking on `|grad V|^2`.
fn newton(model: &PotentialModel, start: &[f64], max_step: f64) -> Option<Vec<f64>> {
    let mut x = start.to_vec();
    let mut g = model.gradient(&x);
    for _ in 0..NEWTON_MAX_ITER {
        let h = model.hessian(&x);
        let gn = norm(&g);
        if !gn.is_finite() {
            return None;
        }
        let step = match h.clone().lu().solve(&to_dvector(&g)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => pseudo_inverse(&h, 1e-12) * to_dvector(&g),
        };
        let mut step: Vec<f64> = step.iter().map(|v| -v).collect();
        if gn <= newton_tolerance(&h) {
            // one polishing step, kept only if it does not hurt
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            let gt = model.gradient(&trial);
            return Some(if norm(&gt) <= gn { trial } else { x });
        }
        let sn = norm(&step);
        if sn == 0.0 {
            return None;
        }
        if sn > max_step {
            step.iter_mut().for_each(|s| *s *= max_step / sn);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let gt = model.gradient(&trial);
            let gtn = norm(&gt);
            if gtn.is_finite() && gtn < gn * (1.0 - 1e-4 * t) {
                x = trial;
                g = gt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Newton stalls only where the full step already sits at roundoff.
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            let gt = model.gradient(&trial);
            if norm(&gt) <= newton_tolerance(&model.hessian(&trial)) {
                return Some(trial);
            }
            return None;
        }
    }
    let h = model.hessian(&x);
    (norm(&g) <= newton_tolerance(&h)).then_some(x)
}

fn grid_seeds(bx: &SearchBox, density: usize) -> Vec<Vec<f64>> {
    let d = bx.lower.len();
    let total = density.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|i| {
                    let j = k % density;
                    k /= density;
                    let t = j as f64 / (density - 1) as f64;
                    bx.lower[i] + t * (bx.upper[i] - bx.lower[i])
                })
                .collect()
        })
        .collect()
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Newton from every node of a uniform grid with `grid_density` nodes per
/// axis; converged points inside the box are deduplicated and classified.
pub fn find_critical_points(
    model: &PotentialModel,
    search_box: &SearchBox,
    grid_density: usize,
) -> Result<CriticalSearch, PotentialError> {
    let d = model.dimension();
    search_box.validate(d)?;
    if grid_density < 2 {
        return Err(PotentialError::SearchBox(format!(
            "grid density {grid_density} < 2"
        )));
    }
    let max_step = 0.5 * search_box.diameter();
    let seeds = grid_seeds(search_box, grid_density);
    let converged: Vec<Vec<f64>> = seeds
        .par_iter()
        .filter_map(|s| newton(model, s, max_step))
        .filter(|x| search_box.contains(x, DEDUP_RADIUS))
        .collect();

    let mut unique: Vec<Vec<f64>> = Vec::new();
    for x in converged {
        if !unique.iter().any(|u| distance(u, &x) <= DEDUP_RADIUS) {
            unique.push(x);
        }
    }
    unique.sort_by(|a, b| lexicographic(a, b));

    let mut points = Vec::new();
    let mut degenerate = Vec::new();
    for x in unique {
        match CriticalPoint::classify(model, &x) {
            Ok(cp) => points.push(cp),
            Err(PotentialError::DegenerateCritical { .. }) => {
                let ev = model.eval(&x)?;
                degenerate.push(DegenerateCritical {
                    value: ev.value,
                    hessian_eigenvalues: jacobi_eigen(&ev.hessian).values,
                    e: x,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CriticalSearch { points, degenerate })
}

//! Linearization of the travelling-wave system at an equilibrium `E = (e, 0)`.
//!
//! For each Hessian eigenpair `(mu_j, u_j)` the plane `{(a u_j, b u_j)}` is
//! invariant under `DF = [[0, I], [D^2V(e), -c I]]`, with eigenvalues the
//! roots of `lambda^2 + c lambda - mu_j = 0` and eigenvectors
//! `(u_j, lambda u_j)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{jacobi_eigen, norm, orthonormalize};
use crate::potential::{CriticalPoint, PotentialModel};

/// Roots of `lambda^2 + c lambda - mu`, ordered by real part.
pub fn lambda_pair(mu: f64, c: f64) -> (Complex64, Complex64) {
    let disc = 0.25 * c * c + mu;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let minus = -0.5 * c - s;
        // product of the roots is -mu; avoids cancellation in the small root
        let plus = if minus != 0.0 { -mu / minus } else { -0.5 * c + s };
        (Complex64::new(minus, 0.0), Complex64::new(plus, 0.0))
    } else {
        let w = (-disc).sqrt();
        (Complex64::new(-0.5 * c, -w), Complex64::new(-0.5 * c, w))
    }
}

/// `(dim E^u, dim E^s, dim E^c)` at an equilibrium of Morse index `m`.
pub fn manifold_dimensions(d: usize, m: usize, c: f64) -> (usize, usize, usize) {
    assert!(m <= d, "Morse index exceeds dimension");
    if c == 0.0 {
        (d - m, d - m, 2 * m)
    } else {
        (d - m, d + m, 0)
    }
}

/// `[[0, I], [D^2V(e), -c I]]`.
pub fn linearization(hessian: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let d = hessian.nrows();
    let mut a = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        a[(i, d + i)] = 1.0;
        a[(d + i, d + i)] = -c;
        for j in 0..d {
            a[(d + i, j)] = hessian[(i, j)];
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralClass {
    Unstable,
    Stable,
    Centre,
}

/// One real direction of the phase space together with the eigenvalue it
/// belongs to. Split real pairs give one direction per root; complex or
/// coincident pairs contribute the two vectors `(u_j, 0)` and `(0, u_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDirection {
    pub j: usize,
    pub lambda: Complex64,
    pub class: SpectralClass,
    /// `Some(+1)` for `U_{j,+}`, `Some(-1)` for `U_{j,-}`, `None` for a block vector.
    pub branch: Option<i8>,
    pub vector: Vec<f64>,
}

/// Strong/mild splitting at a minimum with a simple smallest eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongSplitting {
    /// `span{U_{j,+} : j >= 2}`, orthonormal.
    pub strong_unstable: Vec<Vec<f64>>,
    /// `span{U_{j,-} : j >= 2}`, orthonormal.
    pub strong_stable: Vec<Vec<f64>>,
    /// `span{U_{1,-}, U_{1,+}}`, orthonormal.
    pub mild: Vec<Vec<f64>>,
    /// `lambda_{2,+}` (none when `d = 1`).
    pub beta_su: Option<f64>,
    /// `lambda_{2,-}` (none when `d = 1`).
    pub beta_ss: Option<f64>,
    /// Midpoints `(lambda_{1,-} + lambda_{2,-})/2` and `(lambda_{1,+} + lambda_{2,+})/2`.
    pub lambda_3_2_minus: Option<f64>,
    pub lambda_3_2_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Splitting {
    Available(StrongSplitting),
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSpectrum {
    pub equilibrium: CriticalPoint,
    pub speed: f64,
    /// `(lambda_{j,-}, lambda_{j,+})` for ascending `mu_j`.
    pub pairs: Vec<(Complex64, Complex64)>,
    pub directions: Vec<SpectralDirection>,
    pub unstable: Vec<Vec<f64>>,
    pub stable: Vec<Vec<f64>>,
    pub centre: Vec<Vec<f64>>,
    pub beta_u: Option<f64>,
    pub beta_s: Option<f64>,
    pub splitting: Splitting,
}

/// Relative gap below which two Hessian eigenvalues count as repeated.
const SIMPLE_GAP: f64 = 1e-8;

impl EquilibriumSpectrum {
    pub fn dimension(&self) -> usize {
        self.equilibrium.e.len()
    }

    /// `E = (e, 0)`.
    pub fn rest_state(&self) -> Vec<f64> {
        let mut y = self.equilibrium.e.clone();
        y.extend(std::iter::repeat(0.0).take(self.dimension()));
        y
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.unstable.len(), self.stable.len(), self.centre.len())
    }

    /// `U_{j,+/-} = (u_j, lambda u_j)` (complex in general).
    pub fn eigenvector(&self, j: usize, plus: bool) -> Vec<Complex64> {
        let (lm, lp) = self.pairs[j];
        let lam = if plus { lp } else { lm };
        let u = &self.equilibrium.hessian_eigenvectors[j];
        u.iter()
            .map(|x| Complex64::new(*x, 0.0))
            .chain(u.iter().map(|x| lam * *x))
            .collect()
    }

    pub fn strong(&self) -> Option<&StrongSplitting> {
        match &self.splitting {
            Splitting::Available(s) => Some(s),
            Splitting::Unavailable { .. } => None,
        }
    }

    /// Raw direction vectors of one class.
    pub fn class_vectors(&self, class: SpectralClass) -> Vec<Vec<f64>> {
        self.directions
            .iter()
            .filter(|d| d.class == class)
            .map(|d| d.vector.clone())
            .collect()
    }
}

/// Re-linearizes `model` at the critical point and builds the spectrum.
pub fn spectrum_at(model: &PotentialModel, critical: &CriticalPoint, c: f64) -> EquilibriumSpectrum {
    let eig = jacobi_eigen(&model.hessian(&critical.e));
    let mut cp = critical.clone();
    cp.morse_index = eig.values.iter().filter(|m| **m < 0.0).count();
    cp.hessian_eigenvalues = eig.values;
    cp.hessian_eigenvectors = eig.vectors;
    spectrum_of(&cp, c)
}

/// Phase-space spectrum from the stored Hessian eigenstructure.
pub fn spectrum_of(critical: &CriticalPoint, c: f64) -> EquilibriumSpectrum {
    let d = critical.e.len();
    let mu = &critical.hessian_eigenvalues;
    let mut pairs = Vec::with_capacity(d);
    let mut directions = Vec::with_capacity(2 * d);
    for j in 0..d {
        let (lm, lp) = lambda_pair(mu[j], c);
        pairs.push((lm, lp));
        let u = &critical.hessian_eigenvectors[j];
        let classify = |lam: Complex64| {
            if lam.re > 0.0 {
                SpectralClass::Unstable
            } else if lam.re < 0.0 {
                SpectralClass::Stable
            } else {
                SpectralClass::Centre
            }
        };
        let split = lm.im == 0.0 && lm.re != lp.re;
        if split {
            for (lam, branch) in [(lm, -1i8), (lp, 1i8)] {
                let mut vector = u.clone();
                vector.extend(u.iter().map(|x| lam.re * x));
                directions.push(SpectralDirection {
                    j,
                    lambda: lam,
                    class: classify(lam),
                    branch: Some(branch),
                    vector,
                });
            }
        } else {
            let class = classify(lm);
            let mut a = u.clone();
            a.extend(std::iter::repeat(0.0).take(d));
            let mut b = vec![0.0; d];
            b.extend_from_slice(u);
            for (vector, lam) in [(a, lm), (b, lp)] {
                directions.push(SpectralDirection {
                    j,
                    lambda: lam,
                    class,
                    branch: None,
                    vector,
                });
            }
        }
    }

    let basis = |class: SpectralClass| {
        orthonormalize(
            &directions
                .iter()
                .filter(|x| x.class == class)
                .map(|x| x.vector.clone())
                .collect::<Vec<_>>(),
        )
    };
    let unstable = basis(SpectralClass::Unstable);
    let stable = basis(SpectralClass::Stable);
    let centre = basis(SpectralClass::Centre);

    let beta_u = directions
        .iter()
        .filter(|x| x.lambda.re > 0.0)
        .map(|x| x.lambda.re)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let beta_s = directions
        .iter()
        .filter(|x| x.lambda.re < 0.0)
        .map(|x| x.lambda.re)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));

    let splitting = strong_splitting(critical, &pairs, &directions);

    EquilibriumSpectrum {
        equilibrium: critical.clone(),
        speed: c,
        pairs,
        directions,
        unstable,
        stable,
        centre,
        beta_u,
        beta_s,
        splitting,
    }
}

fn strong_splitting(
    critical: &CriticalPoint,
    pairs: &[(Complex64, Complex64)],
    directions: &[SpectralDirection],
) -> Splitting {
    let mu = &critical.hessian_eigenvalues;
    let d = mu.len();
    if critical.morse_index != 0 {
        return Splitting::Unavailable {
            reason: format!("equilibrium is not a minimum (Morse index {})", critical.morse_index),
        };
    }
    if d >= 2 && (mu[1] - mu[0]) <= SIMPLE_GAP * mu[1].abs() {
        return Splitting::Unavailable {
            reason: format!("smallest Hessian eigenvalue {} is not simple", mu[0]),
        };
    }
    let pick = |branch: i8, strong: bool| -> Vec<Vec<f64>> {
        orthonormalize(
            &directions
                .iter()
                .filter(|x| x.branch == Some(branch) && (x.j >= 1) == strong)
                .map(|x| x.vector.clone())
                .collect::<Vec<_>>(),
        )
    };
    let mut mild = pick(-1, false);
    mild.extend(pick(1, false));
    let mild = orthonormalize(&mild);
    let (beta_ss, beta_su, l32m, l32p) = if d >= 2 {
        let (l1m, l1p) = pairs[0];
        let (l2m, l2p) = pairs[1];
        (
            Some(l2m.re),
            Some(l2p.re),
            Some(0.5 * (l1m.re + l2m.re)),
            Some(0.5 * (l1p.re + l2p.re)),
        )
    } else {
        (None, None, None, None)
    };
    Splitting::Available(StrongSplitting {
        strong_unstable: pick(1, true),
        strong_stable: pick(-1, true),
        mild,
        beta_su,
        beta_ss,
        lambda_3_2_minus: l32m,
        lambda_3_2_plus: l32p,
    })
}

/// `|lambda^2 + c lambda - mu|`.
pub fn root_residual(lambda: Complex64, mu: f64, c: f64) -> f64 {
    (lambda * lambda + lambda * c - mu).norm()
}

/// Largest `|DF v - lambda v| / |v|` over split real directions; a check on
/// the assembled eigenvectors.
pub fn eigen_residual(spectrum: &EquilibriumSpectrum) -> f64 {
    let d = spectrum.dimension();
    let h = DMatrix::from_fn(d, d, |i, j| {
        let q = &spectrum.equilibrium.hessian_eigenvectors;
        (0..d)
            .map(|k| q[k][i] * spectrum.equilibrium.hessian_eigenvalues[k] * q[k][j])
            .sum::<f64>()
    });
    let a = linearization(&h, spectrum.speed);
    spectrum
        .directions
        .iter()
        .filter(|x| x.branch.is_some())
        .map(|x| {
            let v = crate::linalg::to_dvector(&x.vector);
            let r = &a * &v - &v * x.lambda.re;
            r.norm() / norm(&x.vector)
        })
        .fold(0.0, f64::max)
}

//! Travelling fronts and standing pulses of gradient reaction-diffusion
//! systems `u_t = -grad V(u) + u_xx`, computed by phase-space shooting.

pub mod diagnostics;
pub mod dynamics;
pub mod linalg;
pub mod manifolds;
pub mod perturbation;
pub mod potential;
pub mod shooting;
pub mod spectral;

pub use dynamics::{IntegrateOptions, IntegrationError, PhasePoint, Trajectory};
pub use potential::{CriticalPoint, Potential, PotentialConfig, PotentialError, PotentialModel};
pub use spectral::{EquilibriumSpectrum, SpectralClass};
pub use manifolds::{LocalManifold, ManifoldError, ManifoldKind, ManifoldOptions, Order};
pub use shooting::{ConnectionKind, ConnectionSolution, FrontProblem, ShootingError, ShootingOptions, SolutionRecord};
pub use diagnostics::{DiagnosticsError, DiagnosticsOptions, TransversalityReport, Verdict};
pub use perturbation::{BumpPerturbation, PerturbationError};

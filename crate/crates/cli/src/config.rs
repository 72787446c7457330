//! Run configuration files.
//!
//! One flat JSON object per run. Which keys are required depends on the
//! subcommand; unknown keys are always an error. Relative paths resolve
//! against the directory of the file that names them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wavefront::perturbation::{BumpPerturbation, PerturbedConfig};
use wavefront::potential::SearchBox;
use wavefront::{DiagnosticsOptions, PotentialConfig, PotentialModel, ShootingOptions};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub command: Option<String>,
    /// Inline potential object, or a path to a JSON file holding one.
    pub potential: Option<Value>,
    pub search: Option<SearchConfig>,
    /// Speeds at which `equilibria` reports spectra.
    pub speeds_report: Option<Vec<f64>>,
    pub departure: Option<usize>,
    pub arrival: Option<usize>,
    pub equilibrium: Option<usize>,
    pub speeds: Option<[f64; 2]>,
    pub grid: Option<Vec<f64>>,
    pub grid_samples: Option<usize>,
    pub mode: Option<PulseMode>,
    /// Initial guess for the solver; its shape depends on the command.
    pub seed: Option<Value>,
    pub solution: Option<PathBuf>,
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_grid_density")]
    pub grid_density: usize,
}

fn default_grid_density() -> usize {
    64
}

impl SearchConfig {
    pub fn search_box(&self) -> SearchBox {
        SearchBox::new(self.lower.clone(), self.upper.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    #[default]
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub bump: BumpPerturbation,
    pub amplitudes: Option<Vec<f64>>,
}

/// Overrides of solver defaults. Flags win over these.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetry_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
}

impl Tolerances {
    /// `self` with every field of `other` that is set.
    pub fn overridden_by(self, other: Tolerances) -> Self {
        Self {
            solve_tol: other.solve_tol.or(self.solve_tol),
            max_iter: other.max_iter.or(self.max_iter),
            symmetry_margin: other.symmetry_margin.or(self.symmetry_margin),
            level_tol: other.level_tol.or(self.level_tol),
            rank_tol: other.rank_tol.or(self.rank_tol),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("solve_tol", self.solve_tol),
            ("symmetry_margin", self.symmetry_margin),
            ("level_tol", self.level_tol),
            ("rank_tol", self.rank_tol),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::config(format!("tolerances.{name} must be positive, got {v}")));
                }
            }
        }
        if self.max_iter == Some(0) {
            return Err(CliError::config("tolerances.max_iter must be at least 1"));
        }
        Ok(())
    }

    pub fn shooting(&self) -> ShootingOptions {
        let mut o = ShootingOptions::default();
        o.solve_tol = self.solve_tol.or(o.solve_tol);
        o.max_iter = self.max_iter.unwrap_or(o.max_iter);
        o.symmetry_margin = self.symmetry_margin.unwrap_or(o.symmetry_margin);
        o.level_tol = self.level_tol.unwrap_or(o.level_tol);
        o
    }

    pub fn diagnostics(&self) -> DiagnosticsOptions {
        let mut o = DiagnosticsOptions::default();
        o.rank_tol = self.rank_tol.unwrap_or(o.rank_tol);
        o
    }
}

/// A built potential together with the inline config it came from.
#[derive(Debug, Clone)]
pub struct ResolvedPotential {
    pub config: Value,
    pub model: PotentialModel,
}

/// Builds a potential from an inline object or a path, relative to `base`.
pub fn resolve_potential(v: &Value, base: &Path) -> Result<ResolvedPotential, CliError> {
    let inline = match v {
        Value::String(p) => {
            let path = base.join(p);
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::config(format!("cannot read potential {}: {e}", path.display())))?;
            let inner: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("potential {}: {e}", path.display())))?;
            if inner.is_string() {
                return Err(CliError::config("a potential file must hold an object"));
            }
            inner
        }
        Value::Object(_) => v.clone(),
        _ => return Err(CliError::config("potential must be an object or a path")),
    };
    let perturbed = inline.get("base").is_some();
    let (config, model) = if perturbed {
        let c: PerturbedConfig =
            serde_json::from_value(inline).map_err(|e| CliError::config(format!("potential: {e}")))?;
        let m = c.build()?;
        (serde_json::to_value(&c).expect("config serializes"), m)
    } else {
        let c: PotentialConfig =
            serde_json::from_value(inline).map_err(|e| CliError::config(format!("potential: {e}")))?;
        let m = c.build()?;
        (serde_json::to_value(&c).expect("config serializes"), m)
    };
    Ok(ResolvedPotential { config, model })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                cfg.schema
            )));
        }
        cfg.tolerances.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn require<'a, T>(&self, field: Option<&'a T>, name: &str, command: &str) -> Result<&'a T, CliError> {
        field.ok_or_else(|| CliError::config(format!("`{command}` needs `{name}`")))
    }

    /// Parses `seed` as `T`, if present.
    pub fn seed_as<T: serde::de::DeserializeOwned>(&self) -> Result<Option<T>, CliError> {
        self.seed
            .clone()
            .map(|v| serde_json::from_value(v).map_err(|e| CliError::config(format!("seed: {e}"))))
            .transpose()
    }
}

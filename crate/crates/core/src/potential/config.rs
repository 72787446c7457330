use serde::{Deserialize, Serialize};

use super::{quadratic_extension, Monomial, Polynomial, PotentialError, PotentialModel};

/// Declarative polynomial potential, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub dimension: usize,
    pub monomials: Vec<Monomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic_extension_radius: Option<f64>,
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialModel, PotentialError> {
        if self.dimension == 0 {
            return Err(PotentialError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        for m in &self.monomials {
            if !m.coefficient.is_finite() {
                return Err(PotentialError::Evaluation {
                    at: m.exponents.iter().map(|e| *e as f64).collect(),
                });
            }
        }
        let poly = Polynomial::new(self.dimension, self.monomials.clone())?;
        let model = PotentialModel::new(poly);
        match self.quadratic_extension_radius {
            Some(r) if r > 0.0 && r.is_finite() => Ok(quadratic_extension(&model, r)),
            Some(r) => Err(PotentialError::SearchBox(format!(
                "quadratic extension radius must be positive, got {r}"
            ))),
            None => Ok(model),
        }
    }

    pub fn univariate(coefficients: &[f64]) -> Self {
        Self {
            dimension: 1,
            monomials: Polynomial::univariate(coefficients).terms().to_vec(),
            quadratic_extension_radius: None,
        }
    }
}

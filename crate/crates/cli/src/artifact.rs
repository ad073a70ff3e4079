//! Serialized fit result: everything `predict` and `eval` need, with a
//! format version so future layouts stay detectable.

use equicorr::{Col, CovParams, Mat};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovArtifact {
    CompoundSymmetry { eta2: f64, theta: f64 },
    GeneralEquicorrelation { etas: Vec<f64>, theta: f64 },
}

impl CovArtifact {
    pub fn from_params(p: &CovParams<f64>) -> Self {
        match p {
            CovParams::Cs(c) => Self::CompoundSymmetry { eta2: c.eta2, theta: c.theta },
            CovParams::GenEq(g) => Self::GeneralEquicorrelation {
                etas: g.etas.iter().copied().collect(),
                theta: g.theta,
            },
        }
    }

}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub version: u32,
    pub method: String,
    pub p: usize,
    pub q: usize,
    /// Coefficients in row-major order (p rows of q values).
    pub b: Vec<f64>,
    pub intercept: Vec<f64>,
    pub covariance: Option<CovArtifact>,
    pub lambda: Option<f64>,
    /// Per-response tuning parameters for the separate baselines.
    pub lambdas: Option<Vec<f64>>,
    /// `(lambda, mean held-out loss)` rows from cross validation.
    pub cv_table: Option<Vec<(f64, f64)>>,
    /// Penalized objective at the solution, when the method defines one.
    pub objective: Option<f64>,
    pub seed: u64,
    pub converged: bool,
}

impl FitArtifact {
    pub fn b_matrix(&self) -> Result<Mat<f64>, String> {
        if self.b.len() != self.p * self.q || self.intercept.len() != self.q {
            return Err("artifact dimensions are inconsistent".into());
        }
        Ok(Mat::from_row_slice(self.p, self.q, &self.b))
    }

    pub fn intercept_vector(&self) -> Col<f64> {
        Col::from_row_slice(&self.intercept)
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let json = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        crate::csvio::write_atomic(path, &(json + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let artifact: FitArtifact = serde_json::from_str(&text)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(format!(
                "{}: unsupported artifact version {} (this build reads {})",
                path.display(),
                artifact.version,
                ARTIFACT_VERSION
            ));
        }
        Ok(artifact)
    }
}

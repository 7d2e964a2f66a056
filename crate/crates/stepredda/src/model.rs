//! Self-describing JSON model document.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stepredda_core::{CovarianceFamily, GaussianClassParams};

use crate::error::{Error, Result};
use crate::spectra::WavelengthUnit;

pub const SCHEMA_VERSION: u64 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Settings that reproduce a run. Worker count is deliberately absent: it
/// does not affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub gamma: f64,
    /// Family code, or `auto`.
    pub family: String,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub min_diff: f64,
    pub max_steps: Option<usize>,
    pub screen_top: Option<usize>,
    pub input: Option<String>,
    pub input_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u64,
    pub tool_version: String,
    #[serde(with = "family_code")]
    pub family: CovarianceFamily,
    pub gamma: f64,
    pub n_star: usize,
    pub class_names: Vec<String>,
    pub tau: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub selected: Vec<usize>,
    pub wavelengths: Vec<f64>,
    pub unit: WavelengthUnit,
    pub trimmed_loglik: f64,
    /// SHA-256 of the training kept mask, one `0`/`1` byte per row.
    pub kept_sha256: String,
    pub manifest: RunManifest,
}

pub(crate) mod family_code {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};
    use stepredda_core::CovarianceFamily;

    pub fn serialize<S: Serializer>(f: &CovarianceFamily, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(f.code())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CovarianceFamily, D::Error> {
        let code = String::deserialize(d)?;
        code.parse()
            .map_err(|_| D::Error::custom(format!("unknown family {code:?}")))
    }
}

pub fn mask_digest(kept: &[bool]) -> String {
    let bytes: Vec<u8> = kept.iter().map(|&k| if k { b'1' } else { b'0' }).collect();
    hex::encode(Sha256::digest(&bytes))
}

pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Schema(format!("ragged {what}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Schema(e.to_string()))
}

impl ModelArtifact {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &GaussianClassParams,
        class_names: Vec<String>,
        selected: Vec<usize>,
        wavelengths: Vec<f64>,
        unit: WavelengthUnit,
        gamma: f64,
        n_star: usize,
        trimmed_loglik: f64,
        kept: &[bool],
        manifest: RunManifest,
    ) -> Self {
        ModelArtifact {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            family: params.family(),
            gamma,
            n_star,
            class_names,
            tau: params.tau().to_vec(),
            means: rows(params.means()),
            covariances: params.covariances().iter().map(rows).collect(),
            selected,
            wavelengths,
            unit,
            trimmed_loglik,
            kept_sha256: mask_digest(kept),
            manifest,
        }
    }

    /// Rebuilds (and re-factors) the class parameters.
    pub fn params(&self) -> Result<GaussianClassParams> {
        let means = matrix(&self.means, "means")?;
        let covs = self
            .covariances
            .iter()
            .map(|c| matrix(c, "covariance"))
            .collect::<Result<Vec<_>>>()?;
        GaussianClassParams::from_parts(self.tau.clone(), means, &covs, self.family)
            .map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        let p = self.selected.len();
        if params.dim() != p || self.wavelengths.len() != p {
            return Err(Error::Schema(format!(
                "{p} selected variables but parameters of dimension {}",
                params.dim()
            )));
        }
        if self.class_names.len() != params.n_classes() {
            return Err(Error::Schema("class names do not match class count".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Schema("missing schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let artifact: ModelArtifact =
            serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        artifact.validate()?;
        Ok(artifact)
    }
}

pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, artifact.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelArtifact::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn toy() -> ModelArtifact {
        let params = GaussianClassParams::from_parts(
            vec![0.3, 0.7],
            array![[0.1, 1.0 / 3.0], [-2.5e-7, 7.0]],
            &[
                array![[2.0, 0.0], [0.0, 0.1 + 0.2]],
                array![[1.0, 0.0], [0.0, 1e-5]],
            ],
            CovarianceFamily::VVI,
        )
        .unwrap();
        ModelArtifact::new(
            &params,
            vec!["a".into(), "b".into()],
            vec![3, 9],
            vec![1728.0, 997.5],
            WavelengthUnit::Wavenumber,
            0.03,
            97,
            -123.456,
            &[true, false, true],
            RunManifest {
                command: "train".into(),
                tool_version: TOOL_VERSION.into(),
                seed: 7,
                gamma: 0.03,
                family: "VVI".into(),
                restarts: 10,
                max_iter: 100,
                tol: 1e-8,
                min_diff: 0.0,
                max_steps: None,
                screen_top: None,
                input: None,
                input_sha256: None,
            },
        )
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let a = toy();
        let text = a.to_json().unwrap();
        let b = ModelArtifact::from_json(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_json().unwrap(), text);
        assert_eq!(
            b.params().unwrap().covariances(),
            a.params().unwrap().covariances()
        );
    }

    #[test]
    fn rejects_bad_documents() {
        let text = toy().to_json().unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            ModelArtifact::from_json(truncated),
            Err(Error::Schema(_))
        ));
        let future = text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
        assert!(matches!(
            ModelArtifact::from_json(&future),
            Err(Error::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
        let mut short = toy();
        short.selected.pop();
        let text = serde_json::to_string(&short).unwrap();
        assert!(matches!(
            ModelArtifact::from_json(&text),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn mask_digest_depends_on_mask() {
        assert_ne!(mask_digest(&[true, false]), mask_digest(&[false, true]));
        assert_eq!(mask_digest(&[]).len(), 64);
    }
}

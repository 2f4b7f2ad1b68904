//! Run configuration: TOML file, overridden by command-line flags, and
//! embedded in every JSON output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use emc_core::emc::{CertifyOptions, EmcCertificate};
use emc_core::phase::StructureCheckOptions;
use emc_core::releq::SolverOptions;
use emc_core::systems::ParamValues;
use emc_core::verify::{ExperimentOptions, StabilityExperimentReport};
use serde::{Deserialize, Serialize};

/// A parameter value as written in a config file: `I = [1, 2, 3]` or `Mgl = 1.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamInput {
    Scalar(f64),
    List(Vec<f64>),
}

impl ParamInput {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            ParamInput::Scalar(v) => vec![*v],
            ParamInput::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<String>,
    pub params: BTreeMap<String, ParamInput>,
    /// Point at which to certify or verify.
    pub at: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    /// Name of a documented equilibrium of the system.
    pub known: Option<String>,
    pub certify: CertifyOptions,
    pub experiment: ExperimentOptions,
    pub solver: SolverOptions,
    pub structure: StructureCheckOptions,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn param_values(&self) -> ParamValues {
        self.params.iter().map(|(k, v)| (k.clone(), v.to_vec())).collect()
    }

    pub fn set_params(&mut self, params: &ParamValues) {
        self.params = params
            .iter()
            .map(|(k, v)| (k.clone(), ParamInput::List(v.clone())))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDocument {
    #[serde(flatten)]
    pub certificate: EmcCertificate,
    #[serde(default)]
    pub params: ParamValues,
    #[serde(default)]
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDocument {
    #[serde(flatten)]
    pub report: StabilityExperimentReport,
    #[serde(default)]
    pub params: ParamValues,
    #[serde(default)]
    pub config: RunConfig,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            system = "lagrange_top"
            known = "sleeping"
            [params]
            Mgl = 1.0
            omega = 2.5
            [certify]
            sigma_max = 100.0
            [certify.tolerances]
            angle = 1e-3
            [experiment]
            deltas = [1e-3]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.param_values()["Mgl"], vec![1.0]);
        assert_eq!(cfg.certify.sigma_max, 100.0);
        assert_eq!(cfg.certify.tolerances.angle, 1e-3);
        assert_eq!(cfg.certify.tolerances.crit, 1e-8);
        assert_eq!(cfg.experiment.deltas, vec![1e-3]);
        assert_eq!(cfg.experiment.t_final, 100.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sytem = \"rigid_body\"").is_err());
    }
}

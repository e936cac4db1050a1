//! JSON model configuration files.
//!
//! ```json
//! {
//!   "partition": [[1, 2, 3], [4, 5, 6]],
//!   "clusters": [
//!     {"generator": {"family": "clayton", "theta": 1.5}, "stdf": {"family": "logistic", "vartheta": 1.25}},
//!     {"generator": {"family": "joe", "theta": 2.0}, "stdf": {"family": "logistic", "vartheta": 1.5}}
//!   ],
//!   "radial": {"type": "gaussian", "rho": 0.5},
//!   "seed": 1
//! }
//! ```
//!
//! Indices are 1-based. Validation errors carry a JSON pointer into the
//! document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationCode};
use crate::generator::{ArchimedeanGenerator, Family};
use crate::model::{ClusterPartition, ClusteredModelSpec, RadialCopulaSpec};
use crate::stdf::Stdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub family: String,
    /// May be omitted when the file only describes the families to fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdfConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub generator: GeneratorConfig,
    pub stdf: StdfConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RadialConfig {
    #[default]
    Independence,
    /// Either an exchangeable correlation `rho` or a full matrix `corr`.
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corr: Option<Vec<Vec<f64>>>,
    },
    Gumbel { vartheta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    pub partition: Vec<Vec<usize>>,
    pub clusters: Vec<ClusterConfig>,
    #[serde(default)]
    pub radial: RadialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn invalid(code: ValidationCode, pointer: String, msg: impl Into<String>) -> Error {
    Error::validation(code, pointer, msg)
}

impl ModelConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(ValidationCode::Malformed, String::new(), format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises")
    }

    pub fn partition(&self) -> Result<ClusterPartition> {
        let p = ClusterPartition::from_one_based_at(self.partition.clone(), "/partition", "")?;
        if self.clusters.len() != p.n_clusters() {
            return Err(invalid(
                ValidationCode::DimensionMismatch,
                "/clusters".into(),
                format!("{} cluster entries for {} partition blocks", self.clusters.len(), p.n_clusters()),
            ));
        }
        Ok(p)
    }

    pub fn families(&self) -> Result<Vec<Family>> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(k, c)| {
                c.generator
                    .family
                    .parse::<Family>()
                    .map_err(|_| invalid(ValidationCode::UnknownFamily, format!("/clusters/{k}/generator/family"), format!("unknown generator family `{}`", c.generator.family)))
            })
            .collect()
    }

    fn generator(&self, k: usize, family: Family) -> Result<ArchimedeanGenerator> {
        let ptr = format!("/clusters/{k}/generator/theta");
        let theta = self.clusters[k].generator.theta.ok_or_else(|| invalid(ValidationCode::Malformed, ptr.clone(), "missing generator parameter"))?;
        ArchimedeanGenerator::new(family, theta).map_err(|e| invalid(ValidationCode::OutOfDomain, ptr, e.to_string()))
    }

    fn stdf(&self, k: usize, dim: usize) -> Result<Stdf> {
        let s = &self.clusters[k].stdf;
        match s.family.to_ascii_lowercase().as_str() {
            "logistic" => {
                let ptr = format!("/clusters/{k}/stdf/vartheta");
                let v = s.vartheta.ok_or_else(|| invalid(ValidationCode::Malformed, ptr.clone(), "logistic stdf needs `vartheta`"))?;
                Stdf::logistic(v, dim).map_err(|e| invalid(ValidationCode::OutOfDomain, ptr, e.to_string()))
            }
            "independence" => Stdf::independence(dim),
            other => Err(invalid(ValidationCode::UnknownFamily, format!("/clusters/{k}/stdf/family"), format!("unknown stdf family `{other}`"))),
        }
    }

    fn radial(&self, k: usize) -> Result<RadialCopulaSpec> {
        match &self.radial {
            RadialConfig::Independence => Ok(RadialCopulaSpec::Independence),
            RadialConfig::Gumbel { vartheta } => Ok(RadialCopulaSpec::GumbelSurvival(*vartheta)),
            RadialConfig::Gaussian { rho: Some(r), corr: None } => {
                let spec = RadialCopulaSpec::gaussian_exchangeable(k, *r);
                spec.validate(k, "/radial").map_err(|e| match e {
                    Error::Validation { code, message, .. } => Error::Validation { code, pointer: "/radial/rho".into(), message },
                    other => other,
                })?;
                Ok(spec)
            }
            RadialConfig::Gaussian { rho: None, corr: Some(c) } => Ok(RadialCopulaSpec::GaussianSurvival(c.clone())),
            RadialConfig::Gaussian { .. } => Err(invalid(ValidationCode::Malformed, "/radial".into(), "gaussian radial copula needs exactly one of `rho` and `corr`")),
        }
    }

    /// Fully validated model.
    pub fn to_model(&self) -> Result<ClusteredModelSpec> {
        let partition = self.partition()?;
        let families = self.families()?;
        let mut generators = Vec::new();
        let mut stdfs = Vec::new();
        for (k, fam) in families.into_iter().enumerate() {
            generators.push(self.generator(k, fam)?);
            stdfs.push(self.stdf(k, partition.block(k).len())?);
        }
        let radial = self.radial(partition.n_clusters())?;
        ClusteredModelSpec::new(partition, generators, stdfs, radial)
    }

    pub fn from_model(model: &ClusteredModelSpec, seed: Option<u64>) -> Result<Self> {
        let clusters = model
            .generators
            .iter()
            .zip(&model.stdfs)
            .map(|(g, s)| {
                let spec = s.to_spec().ok_or_else(|| Error::capability("only closed-form stdfs can be written to a configuration file"))?;
                Ok(ClusterConfig {
                    generator: GeneratorConfig { family: g.family().to_string(), theta: Some(g.theta()) },
                    stdf: StdfConfig { family: spec.family, vartheta: spec.vartheta },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let radial = match &model.radial {
            RadialCopulaSpec::Independence => RadialConfig::Independence,
            RadialCopulaSpec::GumbelSurvival(t) => RadialConfig::Gumbel { vartheta: *t },
            RadialCopulaSpec::GaussianSurvival(c) => RadialConfig::Gaussian { rho: None, corr: Some(c.clone()) },
        };
        Ok(Self { partition: model.partition.to_one_based(), clusters, radial, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    const MODEL_A: &str = r#"{
        "partition": [[1,2,3],[4,5,6],[7,8,9]],
        "clusters": [
            {"generator": {"family": "clayton", "theta": 1.5}, "stdf": {"family": "logistic", "vartheta": 1.25}},
            {"generator": {"family": "joe", "theta": 1.5}, "stdf": {"family": "logistic", "vartheta": 2.0}},
            {"generator": {"family": "joe", "theta": 2.0}, "stdf": {"family": "logistic", "vartheta": 1.5}}
        ],
        "radial": {"type": "gaussian", "rho": 0.5},
        "seed": 3
    }"#;

    fn err(text: &str) -> (ValidationCode, String) {
        match ModelConfigFile::from_json(text).and_then(|c| c.to_model()) {
            Err(Error::Validation { code, pointer, .. }) => (code, pointer),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn parses_the_reference_model() {
        let c = ModelConfigFile::from_json(MODEL_A).unwrap();
        assert_eq!(c.to_model().unwrap(), presets::model_a());
        assert_eq!(c.seed, Some(3));
        let back = ModelConfigFile::from_model(&presets::model_b(), None).unwrap();
        assert_eq!(ModelConfigFile::from_json(&back.to_json()).unwrap().to_model().unwrap(), presets::model_b());
    }

    #[test]
    fn error_codes_and_pointers() {
        assert_eq!(err(&MODEL_A.replace("[7,8,9]", "[7,8],[9]")).0, ValidationCode::SingletonCluster);
        assert_eq!(err(&MODEL_A.replace("[4,5,6]", "[4,5,3]")), (ValidationCode::OverlappingBlocks, "/partition/1/2".into()));
        assert_eq!(err(&MODEL_A.replace("[7,8,9]", "[7,8,12]")), (ValidationCode::IndexOutOfRange, "/partition/2/2".into()));
        assert_eq!(err(&MODEL_A.replace("\"theta\": 1.5}, \"stdf\": {\"family\": \"logistic\", \"vartheta\": 1.25}", "\"theta\": -1.0}, \"stdf\": {\"family\": \"logistic\", \"vartheta\": 1.25}")), (ValidationCode::OutOfDomain, "/clusters/0/generator/theta".into()));
        assert_eq!(err(&MODEL_A.replace("\"vartheta\": 2.0", "\"vartheta\": 0.5")), (ValidationCode::OutOfDomain, "/clusters/1/stdf/vartheta".into()));
        assert_eq!(err(&MODEL_A.replace("\"rho\": 0.5", "\"rho\": -0.9")), (ValidationCode::NotPositiveDefinite, "/radial/rho".into()));
        assert_eq!(err(&MODEL_A.replace("clayton", "gumbel")), (ValidationCode::UnknownFamily, "/clusters/0/generator/family".into()));
        assert_eq!(err("{\"partition\": 3}").0, ValidationCode::Malformed);
        assert_eq!(err(&MODEL_A.replace("[7,8,9]]", "[7,8,9],[10,11]]")).0, ValidationCode::DimensionMismatch);
    }
}

//! The aggregated run configuration: one JSON file carrying every component's
//! parameters, with bare defaults equal to the reference setup so that an
//! invocation without `--config` reproduces it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use cowtopo::classes::{ClassMap, CowClass};
use cowtopo::loss::CalConfig;
use cowtopo::metrics::MetricsConfig;
use cowtopo::preprocess::PreprocessConfig;
use cowtopo::refine::RefineConfig;
use cowtopo::tasks::GraphDeriveConfig;

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub loss: CalConfig,
    pub refine: RefineConfig,
    pub graph: GraphDeriveConfig,
    pub metrics: MetricsConfig,
    /// Inline class-id map, e.g. `{"BA": 1, "R-PCA": 2, ...}`.
    pub class_map: Option<BTreeMap<String, u8>>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.preprocess.validate()?;
        self.loss.validate()?;
        self.refine.validate()?;
        self.graph.validate()?;
        Ok(())
    }

    /// Resolve the class map: an explicit `--class-map` file wins, then the
    /// config's inline map, then the default enumeration-order ids.
    pub fn resolve_class_map(&self, flag: Option<&Path>) -> Result<ClassMap, CliError> {
        if let Some(path) = flag {
            return Ok(ClassMap::from_json_file(path)?);
        }
        let Some(inline) = &self.class_map else {
            return Ok(ClassMap::default());
        };
        let mut pairs = Vec::with_capacity(inline.len());
        for (name, id) in inline {
            let class = CowClass::from_name(name).ok_or_else(|| {
                CliError::Validation(format!("unknown class name {name:?} in config class_map"))
            })?;
            pairs.push((class, *id));
        }
        Ok(ClassMap::from_pairs(&pairs)?)
    }
}

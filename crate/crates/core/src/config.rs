//! One JSON document configuring every stage; any section may be omitted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::ObserverConfig;
use crate::encoding::SoftmaxCoding;
use crate::error::{Error, Result};
use crate::primitives::PrimitiveSpec;
use crate::pvrnn::NetworkConfig;
use crate::session::SessionConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodingConfig {
    pub bins: usize,
    pub sharpness: f64,
}

impl Default for CodingConfig {
    fn default() -> Self {
        Self { bins: SoftmaxCoding::DEFAULT_BINS, sharpness: SoftmaxCoding::DEFAULT_SHARPNESS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub primitives: PrimitiveSpec,
    pub network: NetworkConfig,
    pub coding: CodingConfig,
    pub train: TrainConfig,
    pub observer: ObserverConfig,
    pub session: SessionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            primitives: PrimitiveSpec::default(),
            network: NetworkConfig::reference(),
            coding: CodingConfig::default(),
            train: TrainConfig::default(),
            observer: ObserverConfig::default(),
            session: SessionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.session.validate()?;
        if self.network.output_dims != self.primitives.dims {
            return Err(Error::Config(format!(
                "network outputs {} dims, primitives have {}",
                self.network.output_dims, self.primitives.dims
            )));
        }
        if self.network.bins_per_dim != self.coding.bins {
            return Err(Error::Config("network bins_per_dim differs from coding bins".into()));
        }
        self.coding()?;
        Ok(())
    }

    /// Coding over the primitives' joint range.
    pub fn coding(&self) -> Result<SoftmaxCoding> {
        let l = self.primitives.limit;
        SoftmaxCoding::symmetric(self.primitives.dims, -l, l, self.coding.bins, self.coding.sharpness)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn full_roundtrip() {
        let c = RunConfig::default();
        let s = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&s).unwrap(), c);
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let mut c = RunConfig::default();
        c.primitives.dims = 6;
        assert!(c.validate().is_err());
        assert!(RunConfig::from_json_str(r#"{"coding": {"bins": 1}}"#).is_err());
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::TrainConfig;
use crate::transport::RenderConfig;

use super::DatasetConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub samples: usize,
    pub spp: u32,
    pub max_depth: u32,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> SweepConfig {
        SweepConfig { samples: 201, spp: 4096, max_depth: 6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    /// Material steps per mode.
    pub steps: u64,
    pub material_lr: f64,
}

impl Default for AblateConfig {
    fn default() -> AblateConfig {
        AblateConfig { steps: 3000, material_lr: 2e-2 }
    }
}

/// Everything a run reads from its TOML config; every table is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlowConfig {
    pub scene: Option<String>,
    pub dataset: DatasetConfig,
    pub render: RenderConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub ablate: AblateConfig,
}

impl GlowConfig {
    pub fn parse(text: &str) -> Result<GlowConfig> {
        let c: GlowConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<GlowConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GlowConfig::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        if self.render.spp == 0 || self.render.max_depth == 0 || self.render.m == 0 {
            return Err(Error::InvalidConfig("render spp, max_depth and m must be positive".into()));
        }
        if self.sweep.samples < 3 || self.sweep.spp == 0 {
            return Err(Error::InvalidConfig("sweep needs at least 3 samples and positive spp".into()));
        }
        if self.ablate.steps == 0 || !(self.ablate.material_lr > 0.0) {
            return Err(Error::InvalidConfig("ablate steps and material_lr must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(GlowConfig::parse("").unwrap(), GlowConfig::default());
    }

    #[test]
    fn round_trip_and_partial_tables() {
        let c = GlowConfig::default();
        assert_eq!(GlowConfig::parse(&c.to_toml()).unwrap(), c);
        let p = GlowConfig::parse("scene = \"plane\"\n[train]\nsteps = 7\n[render]\nmode = \"direct\"\n").unwrap();
        assert_eq!(p.scene.as_deref(), Some("plane"));
        assert_eq!(p.train.steps, 7);
        assert_eq!(p.train.lr, TrainConfig::default().lr);
    }

    #[test]
    fn schema_violations() {
        for bad in ["[train]\nlearning_rate = 1\n", "[dataset]\nframes = 0\n", "[render]\nmode = \"magic\"\n", "x = 1\n", "[train"] {
            assert!(matches!(GlowConfig::parse(bad), Err(Error::InvalidConfig(_))), "{bad}");
        }
    }
}

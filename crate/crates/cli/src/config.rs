use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use viewfill::pipeline::{InferConfig, RobustnessSpec, TrainConfig, Variant};
use viewfill::scene::SceneConfig;

/// Contents of a `--config` file. Every section is optional.
///
/// ```toml
/// variant = "full"
///
/// [scene]
/// references = 2
///
/// [train]
/// iterations = 300
/// [train.model]
/// dim = 32
///
/// [infer]
/// steps = 20
///
/// [robust]
/// kind = "noise"
/// levels = [0.0, 0.5]
/// ```
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<String>,
    pub scene: Option<SceneConfig>,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub robust: RobustnessSpec,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| viewfill::Error::Config(format!("{}: {}", path.display(), e.message())))?;
        Ok(cfg)
    }

    /// The training config with the variant preset (if any) applied.
    pub fn train_config(&self, variant: Option<&str>) -> Result<TrainConfig> {
        match variant.or(self.variant.as_deref()) {
            Some(name) => Ok(Variant::parse(name)?.apply(&self.train)),
            None => Ok(self.train.clone()),
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionKind {
    /// Union of interior rectangles.
    Inpaint,
    /// Band along the image border.
    Outpaint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Resolution must be a multiple of this (the latent patch size).
    pub patch: usize,
    pub references: usize,
    pub static_objects: usize,
    pub dynamic_objects: usize,
    /// Max per-view ground-plane displacement of each dynamic object.
    pub dynamic_displacement: f64,
    /// References sit on the rig circle at azimuths spread evenly over
    /// `[-spread, spread]` around the target.
    pub reference_spread_deg: f64,
    /// Extra yaw of every reference about the world up axis at its own
    /// position; 180 turns references away from the scene.
    pub reference_yaw_deg: f64,
    pub rotation_jitter_deg: f64,
    pub translation_jitter: f64,
    pub completion: CompletionKind,
    pub completion_area: f64,
    pub max_retries: usize,
    /// Multiplies every texture period; larger is coarser.
    pub texture_scale: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            patch: 8,
            references: 3,
            static_objects: 4,
            dynamic_objects: 0,
            dynamic_displacement: 0.0,
            reference_spread_deg: 30.0,
            reference_yaw_deg: 0.0,
            rotation_jitter_deg: 2.0,
            translation_jitter: 0.2,
            completion: CompletionKind::Inpaint,
            completion_area: 0.25,
            max_retries: 8,
            texture_scale: 3.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Config("resolution and patch size must be positive".into()));
        }
        if !self.width.is_multiple_of(self.patch) || !self.height.is_multiple_of(self.patch) {
            return Err(Error::Config(format!(
                "resolution {}x{} is not a multiple of patch {}",
                self.width, self.height, self.patch
            )));
        }
        if !(1..=5).contains(&self.references) {
            return Err(Error::Config(format!("{} references requested, expected 1-5", self.references)));
        }
        if !(self.completion_area > 0.0 && self.completion_area < 1.0) {
            return Err(Error::Config("completion area fraction must lie in (0, 1)".into()));
        }
        let non_negative = [
            self.dynamic_displacement,
            self.reference_spread_deg,
            self.rotation_jitter_deg,
            self.translation_jitter,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.reference_yaw_deg.is_finite() {
            return Err(Error::Config("rig ranges must be finite and non-negative".into()));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return Err(Error::Config("texture_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Named configurations for the CLI's `gen --preset`.
pub const PRESETS: &[&str] = &["planar3", "boxes3", "dynamic2", "outpaint3", "colocated", "disjoint"];

pub fn preset(name: &str) -> Result<SceneConfig> {
    let base = SceneConfig::default();
    let cfg = match name {
        "planar3" => SceneConfig { static_objects: 0, ..base },
        "boxes3" => base,
        "dynamic2" => SceneConfig {
            references: 2,
            static_objects: 3,
            dynamic_objects: 1,
            dynamic_displacement: 0.8,
            ..base
        },
        "outpaint3" => SceneConfig { completion: CompletionKind::Outpaint, completion_area: 0.4, ..base },
        "colocated" => SceneConfig {
            references: 1,
            reference_spread_deg: 0.0,
            rotation_jitter_deg: 0.0,
            translation_jitter: 0.0,
            ..base
        },
        "disjoint" => SceneConfig {
            references: 1,
            reference_spread_deg: 0.0,
            reference_yaw_deg: 180.0,
            rotation_jitter_deg: 0.0,
            translation_jitter: 0.0,
            ..base
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}', valid presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

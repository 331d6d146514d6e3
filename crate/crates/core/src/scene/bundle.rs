use crate::error::{Error, Result};
use crate::geometry::View;
use crate::raster::MaskImage;

use super::config::SceneConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCapture {
    pub view: View,
    /// 1 on dynamic-object pixels.
    pub dynamic: MaskImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetCapture {
    /// `view.image` is the fully populated ground truth.
    pub view: View,
    pub dynamic: MaskImage,
    /// 1 on the region to complete.
    pub completion: MaskImage,
}

/// Everything the completion pipeline knows about one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub references: Vec<ReferenceCapture>,
    pub target: TargetCapture,
    pub seed: u64,
    /// Generation config echo; `None` for externally authored scenes.
    pub meta: Option<SceneConfig>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::Validation("scene has no reference views".into()));
        }
        let check = |view: &crate::geometry::View, dynamic: &MaskImage, name: &str| -> Result<()> {
            let res = view.camera.resolution();
            if view.image.dims() != res || view.depth.dims() != res || dynamic.dims() != res {
                return Err(Error::Validation(format!("{name}: image, depth, camera and mask sizes differ")));
            }
            view.camera.validate()
        };
        for (i, r) in self.references.iter().enumerate() {
            check(&r.view, &r.dynamic, &format!("reference {i}"))?;
        }
        check(&self.target.view, &self.target.dynamic, "target")?;
        if self.target.completion.dims() != self.target.view.image.dims() {
            return Err(Error::Validation("target completion mask size differs from target view".into()));
        }
        Ok(())
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.target.view.camera.resolution()
    }

    /// Target image with the completion region blanked out: the only target
    /// pixels an honest pipeline may look at.
    pub fn known_target(&self) -> crate::raster::Image {
        let mut img = self.target.view.image.clone();
        for i in 0..self.target.completion.data().len() {
            if self.target.completion.get_at(i) {
                img.set_pixel_at(i, [0.0; 3]);
            }
        }
        img
    }
}

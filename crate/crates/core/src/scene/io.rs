//! On-disk scene layout:
//!
//! ```text
//! ref_<i>.png  ref_<i>.gdpt  ref_<i>.cam  [ref_<i>_dyn.png]     i = 0, 1, ...
//! target_gt.png  target.gdpt  target.cam  target_mask.png  [target_dyn.png]
//! scene.meta
//! ```
//!
//! Mask PNGs are black for 0 and white for 1. A missing dynamic mask means
//! a static view; a missing `scene.meta` loads as seed 0 with no config.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::io::{load_camera, load_depth, save_camera, save_depth};
use crate::geometry::View;
use crate::raster::{Image, MaskImage};

use super::bundle::{ReferenceCapture, SceneBundle, TargetCapture};
use super::config::SceneConfig;

#[derive(Serialize, Deserialize)]
struct MetaDoc {
    seed: u64,
    config: Option<SceneConfig>,
}

pub fn save_scene(bundle: &SceneBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::ingestion(dir, e))?;
    for (i, r) in bundle.references.iter().enumerate() {
        r.view.image.save_png(dir.join(format!("ref_{i}.png")))?;
        save_depth(&r.view.depth, dir.join(format!("ref_{i}.gdpt")))?;
        save_camera(&r.view.camera, dir.join(format!("ref_{i}.cam")))?;
        r.dynamic.save_png(dir.join(format!("ref_{i}_dyn.png")))?;
    }
    let t = &bundle.target;
    t.view.image.save_png(dir.join("target_gt.png"))?;
    save_depth(&t.view.depth, dir.join("target.gdpt"))?;
    save_camera(&t.view.camera, dir.join("target.cam"))?;
    t.completion.save_png(dir.join("target_mask.png"))?;
    t.dynamic.save_png(dir.join("target_dyn.png"))?;
    let meta = MetaDoc { seed: bundle.seed, config: bundle.meta.clone() };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(format!("scene.meta: {e}")))?;
    let path = dir.join("scene.meta");
    fs::write(&path, text).map_err(|e| Error::ingestion(path, e))
}

fn load_view(dir: &Path, stem: &str, image_name: &str) -> Result<(View, MaskImage)> {
    let image = Image::load_png(dir.join(image_name))?;
    let depth = load_depth(dir.join(format!("{stem}.gdpt")))?;
    let camera = load_camera(dir.join(format!("{stem}.cam")))?;
    let dyn_path = dir.join(format!("{stem}_dyn.png"));
    let dynamic = if dyn_path.exists() {
        MaskImage::load_png(&dyn_path)?
    } else {
        MaskImage::zeros(image.width(), image.height())
    };
    let res = camera.resolution();
    if image.dims() != res || depth.dims() != res || dynamic.dims() != res {
        return Err(Error::Validation(format!(
            "{stem}: image {}x{}, depth {}x{}, mask {}x{} and camera {}x{} disagree",
            image.width(),
            image.height(),
            depth.width,
            depth.height,
            dynamic.width(),
            dynamic.height(),
            res.0,
            res.1
        )));
    }
    Ok((View { image, depth, camera }, dynamic))
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<SceneBundle> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::ingestion(dir, "scene directory does not exist"));
    }
    let mut references = Vec::new();
    while dir.join(format!("ref_{}.png", references.len())).exists() {
        let i = references.len();
        let (view, dynamic) = load_view(dir, &format!("ref_{i}"), &format!("ref_{i}.png"))?;
        references.push(ReferenceCapture { view, dynamic });
    }
    if references.is_empty() {
        return Err(Error::ingestion(dir.join("ref_0.png"), "scene has no reference views"));
    }
    let gt = dir.join("target_gt.png");
    if !gt.exists() {
        return Err(Error::ingestion(gt, "missing target ground truth"));
    }
    let (view, dynamic) = load_view(dir, "target", "target_gt.png")?;
    let completion = MaskImage::load_png(dir.join("target_mask.png"))?;
    let meta_path = dir.join("scene.meta");
    let (seed, meta) = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::ingestion(&meta_path, e))?;
        let doc: MetaDoc = toml::from_str(&text).map_err(|e| Error::ingestion(&meta_path, e))?;
        (doc.seed, doc.config)
    } else {
        (0, None)
    };
    let bundle = SceneBundle {
        references,
        target: TargetCapture { view, dynamic, completion },
        seed,
        meta,
    };
    bundle.validate()?;
    Ok(bundle)
}

//! Per-scene geometry: dynamic filtering, the fused cloud, and its renders
//! into every view.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    perturb_noise, project_with, sparsify, PointCloud, ProjectOptions, ProjectedCloud, SourceView, View,
};
use crate::raster::MaskImage;
use crate::scene::{apply_dynamic_filter, corrupt_dynamic_mask, SceneBundle};

use super::robust::PerturbKind;

/// Cloud renders and informative masks for one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryProducts {
    /// Reference `i` seen through the cloud of every other view.
    pub reference_clouds: Vec<ProjectedCloud>,
    /// Target seen through the cloud of all references.
    pub target_cloud: ProjectedCloud,
    /// Per reference, 1 where the target's geometry does not reach.
    pub informative: Vec<MaskImage>,
}

/// A perturbation applied while building geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbKind,
    pub level: f64,
    /// Noise standard deviation as a fraction of the fused cloud's bounding
    /// box diameter.
    pub sigma_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryOptions {
    pub project: ProjectOptions,
    /// Splat size used when rendering target coverage into the references;
    /// wider splats close the cracks that would otherwise read as
    /// informative pixels.
    pub informative_splat: usize,
    pub perturbation: Option<Perturbation>,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self { project: ProjectOptions::default(), informative_splat: 1, perturbation: None }
    }
}

pub fn precompute_geometry(scene: &SceneBundle) -> Result<GeometryProducts> {
    precompute_geometry_with(scene, &GeometryOptions::default())
}

/// Drop the pixels under `drop` from a view: colour goes to the background
/// and depth becomes invalid.
fn filtered_view(view: &View, drop: &MaskImage) -> Result<View> {
    Ok(View {
        image: apply_dynamic_filter(&view.image, drop)?,
        depth: view.depth.without(|i| drop.get_at(i)),
        camera: view.camera.clone(),
    })
}

fn drop_mask_pixels(mask: &MaskImage, ratio: f64, rng: &mut ChaCha8Rng) -> Result<MaskImage> {
    let ones: Vec<usize> = (0..mask.data().len()).filter(|&i| mask.get_at(i)).collect();
    let mut out = mask.clone();
    for k in crate::geometry::choose_indices(ones.len(), ratio, rng)? {
        out.set_at(ones[k], false);
    }
    Ok(out)
}

/// Builds the fused cloud from dynamic-filtered views (the target's
/// completion region is never lifted), optionally perturbs it, and renders
/// the leave-one-out and target views from it.
pub fn precompute_geometry_with(scene: &SceneBundle, opts: &GeometryOptions) -> Result<GeometryProducts> {
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.perturbation.map_or(0, |p| p.seed));
    if let Some(p) = opts.perturbation {
        if !(0.0..=1.0).contains(&p.level) {
            return Err(Error::Parameter(format!("perturbation level {} outside [0, 1]", p.level)));
        }
    }
    let mut adjust_mask = |mask: &MaskImage| -> Result<MaskImage> {
        match opts.perturbation {
            Some(Perturbation { kind: PerturbKind::MaskError, level, .. }) => corrupt_dynamic_mask(mask, level, &mut rng),
            Some(Perturbation { kind: PerturbKind::MaskRemoval, level, .. }) => drop_mask_pixels(mask, level, &mut rng),
            _ => Ok(mask.clone()),
        }
    };

    let mut cloud = PointCloud::default();
    let mut ref_views = Vec::with_capacity(scene.references.len());
    for (i, r) in scene.references.iter().enumerate() {
        let view = filtered_view(&r.view, &adjust_mask(&r.dynamic)?)?;
        cloud.extend(view.cloud(SourceView::Reference(i))?);
        ref_views.push(view);
    }
    let target_drop = adjust_mask(&scene.target.dynamic)?.union(&scene.target.completion)?;
    let target_view = filtered_view(&scene.target.view, &target_drop)?;
    cloud.extend(target_view.cloud(SourceView::Target)?);

    if let Some(p) = opts.perturbation {
        cloud = match p.kind {
            PerturbKind::Noise => {
                if !(p.sigma_fraction >= 0.0 && p.sigma_fraction.is_finite()) {
                    return Err(Error::Parameter(format!("sigma fraction {} must be >= 0", p.sigma_fraction)));
                }
                let sigma = p.sigma_fraction * cloud.bbox_diameter();
                perturb_noise(&cloud, p.level, sigma, &mut rng)?
            }
            PerturbKind::Sparse => sparsify(&cloud, p.level, &mut rng)?,
            PerturbKind::MaskError | PerturbKind::MaskRemoval => cloud,
        };
    }

    let reference_clouds = ref_views
        .iter()
        .enumerate()
        .map(|(i, v)| project_with(&cloud.select(|s| s != SourceView::Reference(i)), &v.camera, &opts.project))
        .collect();
    let target_cloud = project_with(
        &cloud.select(|s| matches!(s, SourceView::Reference(_))),
        &scene.target.view.camera,
        &opts.project,
    );
    let target_points = cloud.select(|s| s == SourceView::Target);
    let informative = ref_views
        .iter()
        .map(|v| project_with(&target_points, &v.camera, &ProjectOptions { splat_size: opts.informative_splat }).coverage.inverted())
        .collect();
    Ok(GeometryProducts { reference_clouds, target_cloud, informative })
}

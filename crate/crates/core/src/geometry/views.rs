//! Leave-one-out cloud renders and the informative-region mask.

use crate::error::{Error, Result};
use crate::raster::{Image, MaskImage};

use super::camera::CameraParams;
use super::cloud::{back_project_impl, project_with, PointCloud, ProjectOptions, ProjectedCloud, SourceView};
use super::depth::DepthMap;

/// One posed capture: colour, depth and camera share a resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub image: Image,
    pub depth: DepthMap,
    pub camera: CameraParams,
}

impl View {
    pub fn new(image: Image, depth: DepthMap, camera: CameraParams) -> Result<Self> {
        let res = camera.resolution();
        if image.dims() != res || depth.dims() != res {
            return Err(Error::Shape("view image, depth and camera resolutions differ".into()));
        }
        Ok(Self { image, depth, camera })
    }

    pub fn cloud(&self, source: SourceView) -> Result<PointCloud> {
        back_project_impl(&self.depth, &self.camera, Some(&self.image), source)
    }
}

/// Cloud from every reference except `exclude` plus, when given, the target.
pub fn leave_one_out_cloud(references: &[View], target: Option<&View>, exclude: Option<usize>) -> Result<PointCloud> {
    let mut cloud = PointCloud::default();
    for (j, view) in references.iter().enumerate() {
        if Some(j) != exclude {
            cloud.extend(view.cloud(SourceView::Reference(j))?);
        }
    }
    if let Some(t) = target {
        cloud.extend(t.cloud(SourceView::Target)?);
    }
    Ok(cloud)
}

/// Cloud of all other references plus the target, seen from reference `i`.
pub fn render_reference_cloud(references: &[View], target: &View, i: usize) -> Result<ProjectedCloud> {
    render_reference_cloud_with(references, target, i, &ProjectOptions::default())
}

pub fn render_reference_cloud_with(
    references: &[View],
    target: &View,
    i: usize,
    opts: &ProjectOptions,
) -> Result<ProjectedCloud> {
    let reference = references.get(i).ok_or(Error::Index { index: i, len: references.len() })?;
    let cloud = leave_one_out_cloud(references, Some(target), Some(i))?;
    Ok(project_with(&cloud, &reference.camera, opts))
}

/// Cloud of all references (never the target's own depth) seen from the
/// target camera.
pub fn render_target_cloud(references: &[View], target_cam: &CameraParams) -> Result<ProjectedCloud> {
    render_target_cloud_with(references, target_cam, &ProjectOptions::default())
}

pub fn render_target_cloud_with(
    references: &[View],
    target_cam: &CameraParams,
    opts: &ProjectOptions,
) -> Result<ProjectedCloud> {
    if references.is_empty() {
        return Err(Error::Config("at least one reference view is required".into()));
    }
    let cloud = leave_one_out_cloud(references, None, None)?;
    Ok(project_with(&cloud, target_cam, opts))
}

/// 1 where the target's geometry does not reach `ref_cam`, i.e. reference
/// content the target cannot see.
pub fn informative_mask(target_depth: &DepthMap, target_cam: &CameraParams, ref_cam: &CameraParams) -> Result<MaskImage> {
    let cloud = back_project_impl(target_depth, target_cam, None, SourceView::Target)?;
    let projected = project_with(&cloud, ref_cam, &ProjectOptions::default());
    Ok(projected.coverage.inverted())
}

use crate::error::{Error, Result};
use crate::raster::{Image, MaskImage};

use super::camera::{CameraParams, Vec3};
use super::depth::DepthMap;

/// Which capture contributed a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceView {
    Reference(usize),
    Target,
    /// Points loaded from a file carry no provenance.
    Unknown,
}

/// Coloured world-space points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Vec<[f32; 3]>,
    pub sources: Vec<SourceView>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, colors: Vec<[f32; 3]>, sources: Vec<SourceView>) -> Result<Self> {
        if points.len() != colors.len() || points.len() != sources.len() {
            return Err(Error::Shape("point, color and source counts differ".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("point coordinates must be finite".into()));
        }
        Ok(Self { points, colors, sources })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: PointCloud) {
        self.points.extend(other.points);
        self.colors.extend(other.colors);
        self.sources.extend(other.sources);
    }

    /// Points whose source satisfies `keep`, in their original order.
    pub fn select(&self, keep: impl Fn(SourceView) -> bool) -> PointCloud {
        let mut out = PointCloud::default();
        for (i, &s) in self.sources.iter().enumerate() {
            if keep(s) {
                out.points.push(self.points[i]);
                out.colors.push(self.colors[i]);
                out.sources.push(s);
            }
        }
        out
    }

    pub fn retag(mut self, source: SourceView) -> Self {
        self.sources.iter_mut().for_each(|s| *s = source);
        self
    }

    /// Diameter of the axis-aligned bounding box (0 for fewer than two points).
    pub fn bbox_diameter(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Background written into uncovered pixels of a projection (white, the
/// same value used for masked-out cloud pixels).
pub const BACKGROUND: [f32; 3] = [1.0, 1.0, 1.0];

/// Points at or closer than this camera-frame depth are discarded.
pub const NEAR_EPSILON: f64 = 1e-6;

/// A point cloud rasterised into one view.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedCloud {
    pub image: Image,
    /// Nearest camera-frame depth per pixel, `f64::INFINITY` when uncovered.
    pub depth: Vec<f64>,
    /// 1 where any point landed.
    pub coverage: MaskImage,
}

impl ProjectedCloud {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            image: Image::filled(width, height, BACKGROUND),
            depth: vec![f64::INFINITY; width * height],
            coverage: MaskImage::zeros(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectOptions {
    /// Side of the square footprint each point covers, in pixels. `1` is a
    /// single-pixel splat and keeps back-project/project round trips exact.
    pub splat_size: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self { splat_size: 1 }
    }
}

/// Lift every valid pixel of `depth` into world space, colouring it from
/// `color`.
pub fn back_project(depth: &DepthMap, cam: &CameraParams, color: &Image) -> Result<PointCloud> {
    if color.dims() != cam.resolution() {
        return Err(Error::Shape(format!(
            "color image {}x{} does not match camera {}x{}",
            color.width(),
            color.height(),
            cam.width,
            cam.height
        )));
    }
    back_project_impl(depth, cam, Some(color), SourceView::Unknown)
}

pub(crate) fn back_project_impl(
    depth: &DepthMap,
    cam: &CameraParams,
    color: Option<&Image>,
    source: SourceView,
) -> Result<PointCloud> {
    if depth.dims() != cam.resolution() {
        return Err(Error::Shape(format!(
            "depth map {}x{} does not match camera {}x{}",
            depth.width, depth.height, cam.width, cam.height
        )));
    }
    let mut cloud = PointCloud::default();
    for y in 0..depth.height {
        for x in 0..depth.width {
            let i = y * depth.width + x;
            if !depth.valid[i] {
                continue;
            }
            let z = f64::from(depth.values[i]);
            if !z.is_finite() || z <= 0.0 {
                return Err(Error::Data(format!("depth {z} at valid pixel ({x}, {y})")));
            }
            let p_cam = cam.unproject(x as f64, y as f64, z);
            cloud.points.push(cam.camera_to_world(p_cam));
            cloud.colors.push(color.map_or([0.0; 3], |c| c.pixel(x, y)));
            cloud.sources.push(source);
        }
    }
    Ok(cloud)
}

/// Pixel that owns continuous image coordinate `u`.
#[inline]
pub(crate) fn pixel_index(u: f64) -> i64 {
    (u + 0.5).floor() as i64
}

pub fn project(cloud: &PointCloud, cam: &CameraParams) -> ProjectedCloud {
    project_with(cloud, cam, &ProjectOptions::default())
}

/// Z-buffered splat of `cloud` into `cam`. Per pixel the smallest camera
/// depth wins; equal depths keep the lower point index.
pub fn project_with(cloud: &PointCloud, cam: &CameraParams, opts: &ProjectOptions) -> ProjectedCloud {
    let (w, h) = cam.resolution();
    let mut out = ProjectedCloud::empty(w, h);
    let mut winner = vec![usize::MAX; w * h];
    let size = opts.splat_size.max(1) as i64;
    let lo = -(size - 1) / 2;
    for (idx, p) in cloud.points.iter().enumerate() {
        let pc = cam.world_to_camera(*p);
        if pc[2] <= NEAR_EPSILON {
            continue;
        }
        let (u, v) = cam.project_camera_point(pc);
        if !(u.is_finite() && v.is_finite()) {
            continue;
        }
        let (px, py) = (pixel_index(u), pixel_index(v));
        for dy in lo..lo + size {
            for dx in lo..lo + size {
                let (x, y) = (px + dx, py + dy);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let i = y as usize * w + x as usize;
                if pc[2] < out.depth[i] {
                    out.depth[i] = pc[2];
                    winner[i] = idx;
                }
            }
        }
    }
    for (i, &idx) in winner.iter().enumerate() {
        if idx != usize::MAX {
            out.image.set_pixel_at(i, cloud.colors[idx]);
            out.coverage.set_at(i, true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn unit_cam(w: usize, h: usize) -> CameraParams {
        CameraParams::new(1.0, 1.0, 0.0, 0.0, IDENTITY, [0.0; 3], w, h).unwrap()
    }

    #[test]
    fn single_pixel_identity_camera() {
        let depth = DepthMap::from_values(1, 1, vec![1.0]).unwrap();
        let img = Image::filled(1, 1, [0.2, 0.4, 0.6]);
        let cloud = back_project(&depth, &unit_cam(1, 1), &img).unwrap();
        assert_eq!(cloud.points, vec![[0.0, 0.0, 1.0]]);
        assert_eq!(cloud.colors, vec![[0.2, 0.4, 0.6]]);
    }

    #[test]
    fn all_invalid_gives_empty_cloud() {
        let depth = DepthMap::invalid(4, 3);
        let cloud = back_project(&depth, &unit_cam(4, 3), &Image::filled(4, 3, [0.0; 3])).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let depth = DepthMap::invalid(4, 3);
        let err = back_project(&depth, &unit_cam(4, 3), &Image::filled(3, 3, [0.0; 3])).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = back_project(&depth, &unit_cam(3, 3), &Image::filled(3, 3, [0.0; 3])).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn non_finite_valid_depth_is_data_error() {
        let depth = DepthMap::from_parts(1, 1, vec![f32::NAN], vec![true]).unwrap();
        let err = back_project(&depth, &unit_cam(1, 1), &Image::filled(1, 1, [0.0; 3])).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn empty_cloud_projects_to_nothing() {
        let p = project(&PointCloud::default(), &unit_cam(3, 2));
        assert!(p.coverage.is_all_zero());
        assert!(p.depth.iter().all(|d| d.is_infinite()));
        assert_eq!(p.image, Image::filled(3, 2, BACKGROUND));
    }

    #[test]
    fn nearer_point_wins_on_shared_ray() {
        let cloud = PointCloud::new(
            vec![[0.0, 0.0, 2.0], [0.0, 0.0, 1.0]],
            vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
            vec![SourceView::Unknown; 2],
        )
        .unwrap();
        let p = project(&cloud, &unit_cam(1, 1));
        assert_eq!(p.image.pixel(0, 0), [1.0, 0.0, 0.0]);
        assert_eq!(p.depth[0], 1.0);
    }

    #[test]
    fn equal_depth_keeps_lower_index() {
        let cloud = PointCloud::new(
            vec![[0.0, 0.0, 1.0], [0.1, 0.0, 1.0]],
            vec![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
            vec![SourceView::Unknown; 2],
        )
        .unwrap();
        let p = project(&cloud, &unit_cam(1, 1));
        assert_eq!(p.image.pixel(0, 0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn points_behind_camera_are_dropped() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, -1.0], [0.0, 0.0, 0.0]], vec![[0.0; 3]; 2], vec![SourceView::Unknown; 2])
            .unwrap();
        assert!(project(&cloud, &unit_cam(1, 1)).coverage.is_all_zero());
    }

    #[test]
    fn wider_splat_covers_neighbourhood() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 1.0]], vec![[0.5; 3]], vec![SourceView::Unknown]).unwrap();
        let cam = CameraParams::new(1.0, 1.0, 2.0, 2.0, IDENTITY, [0.0; 3], 5, 5).unwrap();
        let p = project_with(&cloud, &cam, &ProjectOptions { splat_size: 3 });
        assert_eq!(p.coverage.count_ones(), 9);
        assert!(p.coverage.get(1, 1) && p.coverage.get(3, 3) && !p.coverage.get(0, 0));
    }
}

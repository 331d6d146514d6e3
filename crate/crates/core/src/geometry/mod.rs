//! Camera models, depth back-projection, z-buffered point splatting and the
//! multi-view renders built from them.

mod camera;
mod cloud;
mod depth;
pub mod io;
mod perturb;
mod views;

pub use camera::{CameraParams, Mat3, Vec3};
pub(crate) use camera::{add, axis_angle, dot, mat_mul, normalize, scale, sub};
pub use cloud::{
    back_project, project, project_with, PointCloud, ProjectOptions, ProjectedCloud, SourceView, BACKGROUND,
    NEAR_EPSILON,
};
pub use depth::DepthMap;
pub use perturb::{choose_indices, perturb_noise, sparsify};
pub use views::{
    informative_mask, leave_one_out_cloud, render_reference_cloud, render_reference_cloud_with,
    render_target_cloud, render_target_cloud_with, View,
};

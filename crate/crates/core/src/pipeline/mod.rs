//! Geometry precomputation, per-scene training, sampling with known-region
//! compositing, and the robustness harness.

mod infer;
mod products;
mod robust;
mod train;
mod variant;

pub use infer::{composite, copy_cloud_baseline, infer, sampling_timesteps, InferConfig, Sampler};
pub use products::{precompute_geometry, precompute_geometry_with, GeometryOptions, GeometryProducts, Perturbation};
pub use robust::{robustness_csv, robustness_run, PerturbKind, RobustnessRow, RobustnessSpec};
pub use train::{
    draw_batch, image_latent, latent_weight, loss_trace_csv, train_scene, train_scene_with, TrainConfig, TrainOutcome,
};
pub use variant::Variant;

//! Procedural synthetic scenes with exact geometry, scene directories on
//! disk, and dynamic-object filtering.

mod bundle;
mod config;
mod dynamic;
mod generate;
mod io;
pub mod raycast;

pub use bundle::{ReferenceCapture, SceneBundle, TargetCapture};
pub use config::{preset, CompletionKind, SceneConfig, PRESETS};
pub use dynamic::{apply_dynamic_filter, corrupt_dynamic_mask};
pub use generate::{
    build_layout, completion_mask, generate_scene, reference_cameras, rig_eye, target_camera, SceneLayout,
    GROUND_HALF_EXTENT, RIG_DISTANCE, RIG_HEIGHT, RIG_HFOV_DEG,
};
pub use io::{load_scene, save_scene};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{axis_angle, mat_mul, CameraParams, Mat3, Vec3, View};
use crate::raster::MaskImage;

use super::bundle::{ReferenceCapture, SceneBundle, TargetCapture};
use super::config::{CompletionKind, SceneConfig};
use super::raycast::{render, Material, Object, Shape};

/// Camera rig: every view sits on a circle of this radius around the scene
/// origin, at this height, looking at the origin.
pub const RIG_DISTANCE: f64 = 5.0;
pub const RIG_HEIGHT: f64 = 5.0;
pub const RIG_HFOV_DEG: f64 = 60.0;
pub const GROUND_HALF_EXTENT: f64 = 25.0;

const UP: Vec3 = [0.0, 0.0, 1.0];

/// Static and dynamic scene content before per-view displacement.
#[derive(Clone, Debug)]
pub struct SceneLayout {
    pub statics: Vec<Object>,
    pub dynamics: Vec<Object>,
}

impl SceneLayout {
    /// Objects seen by one view, dynamic objects shifted by `offsets`.
    pub fn objects_with(&self, offsets: &[[f64; 2]]) -> Vec<Object> {
        let mut out = self.statics.clone();
        for (obj, off) in self.dynamics.iter().zip(offsets) {
            let mut o = obj.clone();
            if let Shape::Sphere { center, .. } = &mut o.shape {
                center[0] += off[0];
                center[1] += off[1];
            }
            out.push(o);
        }
        out
    }
}

fn symmetric(rng: &mut impl Rng, half: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * half
}

fn in_disk(rng: &mut impl Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    [r * a.cos(), r * a.sin()]
}

fn hsv(h: f64, s: f64, v: f64) -> [f32; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let rgb = match i as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    };
    rgb.map(|c| c as f32)
}

fn random_material(rng: &mut impl Rng, scale: f64) -> Material {
    let base = hsv(rng.random(), 0.55 + 0.35 * rng.random::<f64>(), 0.65 + 0.3 * rng.random::<f64>());
    let shift = hsv(rng.random(), 0.7, 0.35 + 0.3 * rng.random::<f64>());
    Material {
        base,
        accent: shift,
        period: scale * (0.15 + 0.2 * rng.random::<f64>()),
        tiled: false,
        tile_seed: 0,
    }
}

pub fn build_layout(cfg: &SceneConfig, rng: &mut impl Rng) -> SceneLayout {
    let mut statics = vec![Object {
        shape: Shape::Ground { half_extent: GROUND_HALF_EXTENT },
        material: Material {
            base: [0.62, 0.56, 0.46],
            accent: [0.28, 0.32, 0.30],
            period: 0.8 * cfg.texture_scale,
            tiled: true,
            tile_seed: rng.random(),
        },
        dynamic: false,
    }];
    for _ in 0..cfg.static_objects {
        let [x, y] = in_disk(rng, 2.5);
        let s = 0.35 + 0.45 * rng.random::<f64>();
        let shape = if rng.random::<bool>() {
            let a = s;
            let b = s * (0.6 + 0.8 * rng.random::<f64>());
            let c = s * (0.8 + 1.2 * rng.random::<f64>());
            Shape::Cuboid { min: [x - a, y - b, 0.0], max: [x + a, y + b, c] }
        } else {
            Shape::Sphere { center: [x, y, s], radius: s }
        };
        statics.push(Object { shape, material: random_material(rng, cfg.texture_scale), dynamic: false });
    }
    let dynamics = (0..cfg.dynamic_objects)
        .map(|_| {
            let [x, y] = in_disk(rng, 2.0);
            let r = 0.3 + 0.25 * rng.random::<f64>();
            Object {
                shape: Shape::Sphere { center: [x, y, r], radius: r },
                material: Material {
                    base: hsv(rng.random(), 0.9, 0.95),
                    accent: [0.95, 0.95, 0.95],
                    period: 0.2 * cfg.texture_scale,
                    tiled: false,
                    tile_seed: 0,
                },
                dynamic: true,
            }
        })
        .collect();
    SceneLayout { statics, dynamics }
}

pub fn rig_eye(azimuth_deg: f64) -> Vec3 {
    let a = azimuth_deg.to_radians();
    [RIG_DISTANCE * a.sin(), -RIG_DISTANCE * a.cos(), RIG_HEIGHT]
}

pub fn target_camera(cfg: &SceneConfig) -> Result<CameraParams> {
    CameraParams::look_at(rig_eye(0.0), [0.0; 3], UP, RIG_HFOV_DEG, cfg.width, cfg.height)
}

fn with_orientation(cam: &CameraParams, rotation: Mat3, eye: Vec3) -> Result<CameraParams> {
    let t = crate::geometry::scale(
        [
            crate::geometry::dot(rotation[0], eye),
            crate::geometry::dot(rotation[1], eye),
            crate::geometry::dot(rotation[2], eye),
        ],
        -1.0,
    );
    CameraParams::new(cam.fx, cam.fy, cam.cx, cam.cy, rotation, t, cam.width, cam.height)
}

pub fn reference_cameras(cfg: &SceneConfig, rng: &mut impl Rng) -> Result<Vec<CameraParams>> {
    let n = cfg.references;
    (0..n)
        .map(|i| {
            let az = if n == 1 {
                cfg.reference_spread_deg
            } else {
                -cfg.reference_spread_deg + 2.0 * cfg.reference_spread_deg * i as f64 / (n - 1) as f64
            };
            let base = rig_eye(az);
            let jitter = [0; 3].map(|_| symmetric(rng, cfg.translation_jitter));
            let eye = crate::geometry::add(base, jitter);
            let cam = CameraParams::look_at(eye, [0.0; 3], UP, RIG_HFOV_DEG, cfg.width, cfg.height)?;
            let axis = [0; 3].map(|_| symmetric(rng, 1.0));
            let angle = rng.random::<f64>() * cfg.rotation_jitter_deg.to_radians();
            let jittered = mat_mul(&axis_angle(axis, angle), &cam.rotation);
            // yaw about world up at the eye: R' = R * Q^T
            let q = axis_angle(UP, cfg.reference_yaw_deg.to_radians());
            let qt = [[q[0][0], q[1][0], q[2][0]], [q[0][1], q[1][1], q[2][1]], [q[0][2], q[1][2], q[2][2]]];
            with_orientation(&cam, mat_mul(&jittered, &qt), eye)
        })
        .collect()
}

/// Rectangle-union (inpaint) or border-band (outpaint) region covering
/// roughly `cfg.completion_area` of the frame. 1 = missing.
pub fn completion_mask(cfg: &SceneConfig, rng: &mut impl Rng) -> MaskImage {
    let (w, h) = (cfg.width, cfg.height);
    let area = cfg.completion_area;
    match cfg.completion {
        CompletionKind::Inpaint => {
            let count = 1 + (rng.random::<f64>() < 0.5) as usize;
            let mut mask = MaskImage::zeros(w, h);
            for _ in 0..count {
                let px = area / count as f64 * (w * h) as f64;
                let aspect = 0.6 + rng.random::<f64>();
                let rw = ((px * aspect).sqrt().round() as usize).clamp(1, w.saturating_sub(2).max(1));
                let rh = ((px / aspect).sqrt().round() as usize).clamp(1, h.saturating_sub(2).max(1));
                let x0 = 1 + ((w.saturating_sub(rw + 2) + 1) as f64 * rng.random::<f64>()) as usize;
                let y0 = 1 + ((h.saturating_sub(rh + 2) + 1) as f64 * rng.random::<f64>()) as usize;
                for y in y0..(y0 + rh).min(h) {
                    for x in x0..(x0 + rw).min(w) {
                        mask.set(x, y, true);
                    }
                }
            }
            mask
        }
        CompletionKind::Outpaint => {
            // 1 - (w - 2b)(h - 2b) / (wh) = area, solved for the band b
            let (wf, hf) = (w as f64, h as f64);
            let s = wf + hf;
            let b = (s - (s * s - 4.0 * wf * hf * area).sqrt()) / 4.0;
            let b = (b.round() as usize).clamp(1, (w.min(h) - 1) / 2);
            MaskImage::from_fn(w, h, |x, y| x < b || y < b || x >= w - b || y >= h - b)
        }
    }
}

pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<SceneBundle> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..=cfg.max_retries {
        let bundle = generate_once(cfg, seed, &mut rng)?;
        if bundle.target.view.depth.valid_count() > 0 {
            return Ok(bundle);
        }
    }
    Err(Error::Config(format!(
        "target camera saw no geometry after {} attempts",
        cfg.max_retries + 1
    )))
}

fn generate_once(cfg: &SceneConfig, seed: u64, rng: &mut ChaCha8Rng) -> Result<SceneBundle> {
    let layout = build_layout(cfg, rng);
    let target_cam = target_camera(cfg)?;
    let ref_cams = reference_cameras(cfg, rng)?;
    let offsets: Vec<Vec<[f64; 2]>> = (0..=cfg.references)
        .map(|_| {
            (0..cfg.dynamic_objects)
                .map(|_| [symmetric(rng, cfg.dynamic_displacement), symmetric(rng, cfg.dynamic_displacement)])
                .collect()
        })
        .collect();
    let completion = completion_mask(cfg, rng);

    // views are rendered independently; index 0 is the target
    let cams: Vec<&CameraParams> = std::iter::once(&target_cam).chain(&ref_cams).collect();
    let mut renders: Vec<_> = cams
        .par_iter()
        .zip(offsets.par_iter())
        .map(|(cam, off)| render(&layout.objects_with(off), cam))
        .collect();
    let target_render = renders.remove(0);
    let references = renders
        .into_iter()
        .zip(ref_cams)
        .map(|(r, cam)| {
            Ok(ReferenceCapture { view: View::new(r.image, r.depth, cam)?, dynamic: r.dynamic })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneBundle {
        references,
        target: TargetCapture {
            view: View::new(target_render.image, target_render.depth, target_cam)?,
            dynamic: target_render.dynamic,
            completion,
        },
        seed,
        meta: Some(cfg.clone()),
    })
}

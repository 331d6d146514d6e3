//! CPU ray caster over planes, spheres and axis-aligned boxes with
//! procedural textures. Depth is exact: one ray per pixel centre, no
//! anti-aliasing.

use crate::geometry::{dot, normalize, scale, sub, add, CameraParams, DepthMap, Vec3};
use crate::raster::{Image, MaskImage};

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Square patch of the `z = 0` plane.
    Ground { half_extent: f64 },
    Sphere { center: Vec3, radius: f64 },
    Cuboid { min: Vec3, max: Vec3 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub base: [f32; 3],
    pub accent: [f32; 3],
    /// Checker period in scene units.
    pub period: f64,
    /// Mix per-cell hashed tint into the checker (used for the ground).
    pub tiled: bool,
    pub tile_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Object {
    pub shape: Shape,
    pub material: Material,
    pub dynamic: bool,
}

pub(crate) struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
}

const T_MIN: f64 = 1e-9;

impl Shape {
    pub(crate) fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<Hit> {
        match *self {
            Shape::Ground { half_extent } => {
                if dir[2].abs() < 1e-12 {
                    return None;
                }
                let t = -origin[2] / dir[2];
                if t <= T_MIN {
                    return None;
                }
                let p = add(origin, scale(dir, t));
                if p[0].abs() > half_extent || p[1].abs() > half_extent {
                    return None;
                }
                let normal = if origin[2] >= 0.0 { [0.0, 0.0, 1.0] } else { [0.0, 0.0, -1.0] };
                Some(Hit { t, point: [p[0], p[1], 0.0], normal })
            }
            Shape::Sphere { center, radius } => {
                let t = sphere_entry(origin, dir, center, radius)?;
                let p = add(origin, scale(dir, t));
                let normal = normalize(sub(p, center)).unwrap_or([0.0, 0.0, 1.0]);
                Some(Hit { t, point: p, normal })
            }
            Shape::Cuboid { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let mut axis = 0;
                let mut sign = -1.0;
                for k in 0..3 {
                    if dir[k].abs() < 1e-15 {
                        if origin[k] < min[k] || origin[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[k];
                    let (mut a, mut b) = ((min[k] - origin[k]) * inv, (max[k] - origin[k]) * inv);
                    let mut s = -1.0;
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                        s = 1.0;
                    }
                    if a > t0 {
                        t0 = a;
                        axis = k;
                        sign = s;
                    }
                    t1 = t1.min(b);
                }
                if t0 > t1 || t0 <= T_MIN {
                    return None;
                }
                let mut normal = [0.0; 3];
                normal[axis] = sign;
                Some(Hit { t: t0, point: add(origin, scale(dir, t0)), normal })
            }
        }
    }
}

/// Nearest positive ray parameter where the ray enters the sphere.
pub fn sphere_entry(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<f64> {
    let oc = sub(origin, center);
    let b = dot(oc, dir);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c * dot(dir, dir);
    if disc < 0.0 {
        return None;
    }
    let a = dot(dir, dir);
    let sq = disc.sqrt();
    let t = (-b - sq) / a;
    if t > T_MIN {
        return Some(t);
    }
    let t = (-b + sq) / a;
    (t > T_MIN).then_some(t)
}

fn hash3(seed: u64, a: i64, b: i64) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [a as u64, b as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(27).wrapping_mul(0x94D0_49BB_1331_11EB);
    }
    h ^ (h >> 31)
}

impl Material {
    fn albedo(&self, p: Vec3) -> [f32; 3] {
        let cell = |v: f64| (v / self.period).floor() as i64;
        let (i, j, k) = (cell(p[0]), cell(p[1]), cell(p[2]));
        let odd = (i + j + k).rem_euclid(2) == 1;
        let mut c = if odd { self.accent } else { self.base };
        if self.tiled {
            let h = hash3(self.tile_seed, i, j);
            for (ch, v) in c.iter_mut().enumerate() {
                let tint = ((h >> (ch * 8)) & 0xFF) as f32 / 255.0;
                *v = 0.7 * *v + 0.3 * tint;
            }
        }
        c
    }
}

const LIGHT: Vec3 = [0.371_390_676_354_103_7, -0.278_543_007_265_577_8, 0.885_704_376_869_883_5];

fn shade(material: &Material, hit: &Hit) -> [f32; 3] {
    let lambert = dot(hit.normal, LIGHT).max(0.0);
    let k = (0.35 + 0.65 * lambert) as f32;
    material.albedo(hit.point).map(|c| (c * k).clamp(0.0, 1.0))
}

/// Colour returned for rays that leave the scene.
pub const SKY: [f32; 3] = [0.72, 0.82, 0.95];

pub struct Rendered {
    pub image: Image,
    pub depth: DepthMap,
    /// 1 where the pixel ray meets any dynamic object, occluded or not.
    pub dynamic: MaskImage,
}

pub fn render(objects: &[Object], cam: &CameraParams) -> Rendered {
    let (w, h) = cam.resolution();
    let origin = cam.center();
    let mut image = Image::filled(w, h, SKY);
    let mut depth = vec![0.0f32; w * h];
    let mut dynamic = MaskImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let dir = cam.pixel_ray(x as f64, y as f64);
            let mut best: Option<(Hit, &Object)> = None;
            for obj in objects {
                if let Some(hit) = obj.shape.intersect(origin, dir) {
                    if obj.dynamic {
                        dynamic.set(x, y, true);
                    }
                    if best.as_ref().is_none_or(|(b, _)| hit.t < b.t) {
                        best = Some((hit, obj));
                    }
                }
            }
            if let Some((hit, obj)) = best {
                image.set_pixel(x, y, shade(&obj.material, &hit));
                depth[y * w + x] = cam.depth_of(hit.point) as f32;
            }
        }
    }
    let depth = DepthMap::from_values(w, h, depth).expect("depth buffer sized to camera");
    Rendered { image: image.quantized(), depth, dynamic }
}

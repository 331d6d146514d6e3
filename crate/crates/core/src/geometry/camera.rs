use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Pinhole intrinsics plus a rigid world-to-camera transform.
///
/// Camera frame: `+z` looks forward, `+x` right, `+y` down. Integer pixel
/// coordinates sit at pixel centres, so pixel `(x, y)` owns the square
/// `[x - 0.5, x + 0.5) x [y - 0.5, y + 0.5)` on the image plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

const ORTHONORMAL_TOL: f64 = 1e-6;

impl CameraParams {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, rotation, translation, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`. `up` only has to be non-parallel
    /// to the viewing direction; image `y` points along `-up`.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        hfov_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = normalize(sub(target, eye))
            .ok_or_else(|| Error::Config("camera eye and target coincide".into()))?;
        let right = normalize(cross(forward, up))
            .ok_or_else(|| Error::Config("camera up vector is parallel to view direction".into()))?;
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = neg(mat_vec(&rotation, eye));
        let fx = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(
            fx,
            fx,
            width as f64 / 2.0 - 0.5,
            height as f64 / 2.0 - 0.5,
            rotation,
            translation,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Validation("focal lengths must be positive and finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("camera resolution must be at least 1x1".into()));
        }
        let finite = self.rotation.iter().flatten().chain(&self.translation).chain([&self.cx, &self.cy]);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("camera parameters must be finite".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() >= ORTHONORMAL_TOL {
                    return Err(Error::Validation("rotation is not orthonormal".into()));
                }
            }
        }
        if det3(r) <= 0.0 {
            return Err(Error::Validation("rotation has negative determinant".into()));
        }
        Ok(())
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        mat_t_vec(&self.rotation, sub(p, self.translation))
    }

    /// Camera-frame point at depth `z` behind pixel coordinates `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        [(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z]
    }

    /// Continuous image coordinates of a camera-frame point (`z` must be > 0).
    pub fn project_camera_point(&self, p: Vec3) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.camera_to_world([0.0; 3])
    }

    /// World-space unit ray direction through the centre of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: f64, y: f64) -> Vec3 {
        let d = [(x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0];
        let w = mat_t_vec(&self.rotation, d);
        normalize(w).unwrap_or(w)
    }

    /// Camera-frame depth of a world point.
    pub fn depth_of(&self, p: Vec3) -> f64 {
        self.world_to_camera(p)[2]
    }
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn neg(a: Vec3) -> Vec3 {
    [-a[0], -a[1], -a[2]]
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > 1e-12).then(|| scale(a, 1.0 / n))
}

pub(crate) fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub(crate) fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

/// Rotation by `angle` radians about unit `axis` (Rodrigues).
pub(crate) fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    let [x, y, z] = normalize(axis).unwrap_or([0.0, 0.0, 1.0]);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

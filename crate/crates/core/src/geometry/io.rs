//! Depth (`GDPT`), camera (TOML key-value) and point-cloud (`GPCD`) files.
//! Binary formats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::to_u8;

use super::camera::CameraParams;
use super::cloud::{PointCloud, SourceView};
use super::depth::DepthMap;

const DEPTH_MAGIC: &[u8; 4] = b"GDPT";
const CLOUD_MAGIC: &[u8; 4] = b"GPCD";

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + depth.values.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(depth.width as u32).to_le_bytes());
    out.extend_from_slice(&(depth.height as u32).to_le_bytes());
    for (&z, &ok) in depth.values.iter().zip(&depth.valid) {
        let z = if ok { z } else { 0.0 };
        out.extend_from_slice(&z.to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> std::result::Result<DepthMap, String> {
    if bytes.len() < 12 || &bytes[..4] != DEPTH_MAGIC {
        return Err("missing GDPT header".into());
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != w * h * 4 {
        return Err(format!("expected {} depth bytes, found {}", w * h * 4, body.len()));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    DepthMap::from_values(w, h, values).map_err(|e| e.to_string())
}

pub fn save_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_depth(depth)).map_err(|e| Error::ingestion(path.as_ref(), e))
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::ingestion(path, e))?;
    decode_depth(&bytes).map_err(|e| Error::ingestion(path, e))
}

#[derive(Serialize, Deserialize)]
struct CameraDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    rotation: [f64; 9],
    translation: [f64; 3],
}

pub fn camera_to_string(cam: &CameraParams) -> String {
    let r = &cam.rotation;
    let doc = CameraDoc {
        fx: cam.fx,
        fy: cam.fy,
        cx: cam.cx,
        cy: cam.cy,
        width: cam.width,
        height: cam.height,
        rotation: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
        translation: cam.translation,
    };
    toml::to_string(&doc).expect("camera document serializes")
}

pub fn camera_from_str(text: &str) -> std::result::Result<CameraParams, String> {
    let doc: CameraDoc = toml::from_str(text).map_err(|e| e.to_string())?;
    let r = doc.rotation;
    CameraParams::new(
        doc.fx,
        doc.fy,
        doc.cx,
        doc.cy,
        [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
        doc.translation,
        doc.width,
        doc.height,
    )
    .map_err(|e| e.to_string())
}

pub fn save_camera(cam: &CameraParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), camera_to_string(cam)).map_err(|e| Error::ingestion(path.as_ref(), e))
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<CameraParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::ingestion(path, e))?;
    camera_from_str(&text).map_err(|e| Error::ingestion(path, e))
}

/// Positions are narrowed to `f32` and colours to 8 bits.
pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + cloud.len() * 15);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend(c.iter().map(|&v| to_u8(v)));
    }
    out
}

pub fn decode_cloud(bytes: &[u8]) -> std::result::Result<PointCloud, String> {
    if bytes.len() < 8 || &bytes[..4] != CLOUD_MAGIC {
        return Err("missing GPCD header".into());
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != n * 15 {
        return Err(format!("expected {} point bytes, found {}", n * 15, body.len()));
    }
    let mut points = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for rec in body.chunks_exact(15) {
        let f = |k: usize| f64::from(f32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().unwrap()));
        points.push([f(0), f(1), f(2)]);
        colors.push([rec[12], rec[13], rec[14]].map(|b| f32::from(b) / 255.0));
    }
    PointCloud::new(points, colors, vec![SourceView::Unknown; n]).map_err(|e| e.to_string())
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_cloud(cloud)).map_err(|e| Error::ingestion(path.as_ref(), e))
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::ingestion(path, e))?;
    decode_cloud(&bytes).map_err(|e| Error::ingestion(path, e))
}

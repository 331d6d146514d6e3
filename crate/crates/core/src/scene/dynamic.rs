use rand::Rng;

use crate::error::Result;
use crate::geometry::{choose_indices, BACKGROUND};
use crate::raster::{ensure_same_dims, Image, MaskImage};

/// Replace dynamic pixels (mask = 1) with the background colour.
pub fn apply_dynamic_filter(image: &Image, dynamic: &MaskImage) -> Result<Image> {
    ensure_same_dims(image.dims(), dynamic.dims(), "dynamic mask")?;
    let mut out = image.clone();
    for i in 0..dynamic.data().len() {
        if dynamic.get_at(i) {
            out.set_pixel_at(i, BACKGROUND);
        }
    }
    Ok(out)
}

/// Simulated over-segmentation: sets `floor(extra_fraction * zeros)`
/// uniformly chosen 0-pixels to 1. Never clears a pixel.
pub fn corrupt_dynamic_mask(mask: &MaskImage, extra_fraction: f64, rng: &mut impl Rng) -> Result<MaskImage> {
    let zeros: Vec<usize> = (0..mask.data().len()).filter(|&i| !mask.get_at(i)).collect();
    let chosen = choose_indices(zeros.len(), extra_fraction, rng)?;
    let mut out = mask.clone();
    for k in chosen {
        out.set_at(zeros[k], true);
    }
    Ok(out)
}

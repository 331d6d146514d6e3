//! Fixed, exactly invertible patchify surrogate for the image autoencoder.
//! A `patch x patch` RGB block becomes one latent pixel with `3 * patch^2`
//! channels; channel `(dy * patch + dx) * 3 + c` holds colour `c` of the
//! block pixel at offset `(dx, dy)`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::raster::{Image, MaskImage};

/// Channel-major `channels x height x width` latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBlock {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl LatentBlock {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "latent buffer holds {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn tokens_len(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `L x channels` token matrix, token index `y * width + x`.
    pub fn to_tokens(&self) -> Array2<f64> {
        let l = self.tokens_len();
        Array2::from_shape_fn((l, self.channels), |(t, c)| self.data[c * l + t])
    }

    pub fn from_tokens(tokens: &Array2<f64>, height: usize, width: usize) -> Result<Self> {
        let (l, c) = tokens.dim();
        if l != height * width {
            return Err(Error::Shape(format!("{l} tokens do not tile a {width}x{height} grid")));
        }
        let mut data = vec![0.0; l * c];
        for ((t, ch), &v) in tokens.indexed_iter() {
            data[ch * l + t] = v;
        }
        Ok(Self { channels: c, height, width, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_divisible(w: usize, h: usize, patch: usize) -> Result<()> {
    if patch == 0 || !w.is_multiple_of(patch) || !h.is_multiple_of(patch) {
        return Err(Error::Shape(format!("{w}x{h} is not divisible by patch {patch}")));
    }
    Ok(())
}

pub fn to_latent(image: &Image, patch: usize) -> Result<LatentBlock> {
    let (w, h) = image.dims();
    check_divisible(w, h, patch)?;
    let (lw, lh) = (w / patch, h / patch);
    let channels = 3 * patch * patch;
    let mut out = LatentBlock::zeros(channels, lh, lw);
    for y in 0..h {
        for x in 0..w {
            let px = image.pixel(x, y);
            let base = ((y % patch) * patch + x % patch) * 3;
            for (c, &v) in px.iter().enumerate() {
                out.data[((base + c) * lh + y / patch) * lw + x / patch] = f64::from(v);
            }
        }
    }
    Ok(out)
}

pub fn from_latent(latent: &LatentBlock, patch: usize) -> Result<Image> {
    if patch == 0 || latent.channels != 3 * patch * patch {
        return Err(Error::Shape(format!(
            "{} latent channels do not match patch {patch}",
            latent.channels
        )));
    }
    let (w, h) = (latent.width * patch, latent.height * patch);
    Ok(Image::from_fn(w, h, |x, y| {
        let base = ((y % patch) * patch + x % patch) * 3;
        [0, 1, 2].map(|c| latent.get(base + c, y / patch, x / patch) as f32)
    }))
}

/// Max-pool: a latent pixel is 1 iff any pixel of its block is 1.
pub fn downsample_mask(mask: &MaskImage, patch: usize) -> Result<MaskImage> {
    let (w, h) = mask.dims();
    check_divisible(w, h, patch)?;
    let mut out = MaskImage::zeros(w / patch, h / patch);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                out.set(x / patch, y / patch, true);
            }
        }
    }
    Ok(out)
}

/// Space-to-depth of a mask: `patch^2` channels, channel `dy * patch + dx`.
/// Unlike [`downsample_mask`] this keeps every mask pixel.
pub fn mask_to_latent(mask: &MaskImage, patch: usize) -> Result<LatentBlock> {
    let (w, h) = mask.dims();
    check_divisible(w, h, patch)?;
    let (lw, lh) = (w / patch, h / patch);
    let mut out = LatentBlock::zeros(patch * patch, lh, lw);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let c = (y % patch) * patch + x % patch;
                out.data[(c * lh + y / patch) * lw + x / patch] = 1.0;
            }
        }
    }
    Ok(out)
}

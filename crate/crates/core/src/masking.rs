//! Random rectangle masks, the two target-aware conditional masking
//! operators, and assembly of training samples.
//!
//! Mask conventions: `r` is 1 on informative reference pixels (not visible
//! from the target), `m_rand` is 1 on kept pixels, and a sample's `hidden`
//! mask is 1 wherever the conditioning image was blanked.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::GeometryProducts;
use crate::raster::{ensure_same_dims, Image, MaskImage};
use crate::scene::SceneBundle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectMode {
    /// Pixels inside any rectangle are masked (0).
    Union,
    /// Pixels outside every rectangle are masked.
    Complement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectMaskParams {
    pub min_count: usize,
    pub max_count: usize,
    /// Rectangle side as a fraction of the image side, in `(0, 1]`.
    pub min_side: f64,
    pub max_side: f64,
    /// `None` draws the mode uniformly for every mask.
    pub mode: Option<RectMode>,
}

impl Default for RectMaskParams {
    fn default() -> Self {
        Self { min_count: 1, max_count: 4, min_side: 0.2, max_side: 0.6, mode: None }
    }
}

impl RectMaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_count < 1 || self.max_count < self.min_count {
            return Err(Error::Config("rectangle counts must satisfy 1 <= min <= max".into()));
        }
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(self.min_side) || !ok(self.max_side) || self.max_side < self.min_side {
            return Err(Error::Config("rectangle side fractions must satisfy 0 < min <= max <= 1".into()));
        }
        Ok(())
    }
}

/// Random rectangle mask, 1 = kept, 0 = masked.
///
/// Draw order: the mode (only when `params.mode` is `None`, as a `bool`,
/// `true` = union), the count in `min_count..=max_count`, then per
/// rectangle its width fraction, height fraction, left and top edge.
pub fn random_rect_mask(params: &RectMaskParams, width: usize, height: usize, rng: &mut impl Rng) -> Result<MaskImage> {
    params.validate()?;
    let mode = match params.mode {
        Some(m) => m,
        None if rng.random::<bool>() => RectMode::Union,
        None => RectMode::Complement,
    };
    let count = rng.random_range(params.min_count..=params.max_count);
    let mut inside = MaskImage::zeros(width, height);
    for _ in 0..count {
        let fw = rng.random_range(params.min_side..=params.max_side);
        let fh = rng.random_range(params.min_side..=params.max_side);
        let rw = ((fw * width as f64).round() as usize).clamp(1, width);
        let rh = ((fh * height as f64).round() as usize).clamp(1, height);
        let x0 = rng.random_range(0..=width - rw);
        let y0 = rng.random_range(0..=height - rh);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                inside.set(x, y, true);
            }
        }
    }
    Ok(match mode {
        RectMode::Union => inside.inverted(),
        RectMode::Complement => inside,
    })
}

/// `x_ref * ((1 - r) + r * m_rand)`: redundant pixels survive, informative
/// pixels survive only where `m_rand` keeps them; dropped pixels become 0.
pub fn conditional_reference_mask(x_ref: &Image, r: &MaskImage, m_rand: &MaskImage) -> Result<Image> {
    ensure_same_dims(x_ref.dims(), r.dims(), "informative mask")?;
    ensure_same_dims(x_ref.dims(), m_rand.dims(), "random mask")?;
    let mut out = x_ref.clone();
    for i in 0..r.data().len() {
        let keep = f32::from(1 - r.data()[i]) + f32::from(r.data()[i] * m_rand.data()[i]);
        let px = x_ref.pixel_at(i).map(|c| c * keep);
        out.set_pixel_at(i, px);
    }
    Ok(out)
}

/// `m_point = r + (1 - r) * m_rand`, then `p * m_point + v_fill * (1 - m_point)`:
/// informative pixels keep their cloud colour, redundant ones are filled
/// with `v_fill` where `m_rand` drops them.
pub fn conditional_cloud_mask(p_ref: &Image, r: &MaskImage, m_rand: &MaskImage, v_fill: f32) -> Result<Image> {
    ensure_same_dims(p_ref.dims(), r.dims(), "informative mask")?;
    ensure_same_dims(p_ref.dims(), m_rand.dims(), "random mask")?;
    if !(0.0..=1.0).contains(&v_fill) {
        return Err(Error::Parameter(format!("fill value {v_fill} outside [0, 1]")));
    }
    let mut out = p_ref.clone();
    for i in 0..r.data().len() {
        let m = f32::from(r.data()[i] + (1 - r.data()[i]) * m_rand.data()[i]);
        let px = p_ref.pixel_at(i).map(|c| c * m + v_fill * (1.0 - m));
        out.set_pixel_at(i, px);
    }
    Ok(out)
}

/// Default fill for masked cloud pixels: white, identical to the projection
/// background.
pub const V_FILL: f32 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleSource {
    Reference(usize),
    Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    /// Masked conditioning image.
    pub condition: Image,
    /// 1 where `condition` was blanked; fed to the model as its mask channel.
    pub hidden: MaskImage,
    /// Conditioning cloud render.
    pub cloud: Image,
    /// 1 where the ground truth is known and the loss applies.
    pub weight: MaskImage,
    /// Ground truth, zeroed where `weight` is 0.
    pub truth: Image,
    pub source: SampleSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMasking {
    /// Only informative pixels are at risk.
    TargetAware,
    /// Random rectangles over the whole reference.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOptions {
    pub rect: RectMaskParams,
    pub reference_masking: ReferenceMasking,
    /// Apply conditional cloud masking to reference clouds.
    pub cloud_masking: bool,
    /// Probability of drawing the target; `None` is uniform over the
    /// references and the target.
    pub target_probability: Option<f64>,
    pub v_fill: f32,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            rect: RectMaskParams::default(),
            reference_masking: ReferenceMasking::TargetAware,
            cloud_masking: true,
            target_probability: None,
            v_fill: V_FILL,
        }
    }
}

fn masked_image(img: &Image, hidden: &MaskImage) -> Image {
    let mut out = img.clone();
    for i in 0..hidden.data().len() {
        if hidden.get_at(i) {
            out.set_pixel_at(i, [0.0; 3]);
        }
    }
    out
}

/// One conditioning/ground-truth pair drawn from a scene.
pub fn build_training_sample(
    scene: &SceneBundle,
    products: &GeometryProducts,
    opts: &SamplingOptions,
    rng: &mut impl Rng,
) -> Result<TrainingSample> {
    let n = scene.references.len();
    if n == 0 {
        return Err(Error::Config("training needs at least one reference view".into()));
    }
    if products.reference_clouds.len() != n || products.informative.len() != n {
        return Err(Error::Validation("geometry products do not match the scene's references".into()));
    }
    let (w, h) = scene.resolution();
    let target_usable = !scene.target.completion.is_all_one();
    loop {
        let pick_target = match opts.target_probability {
            Some(p) => rng.random::<f64>() < p,
            None => rng.random_range(0..=n) == n,
        };
        if pick_target {
            let m_rand = random_rect_mask(&opts.rect, w, h, rng)?;
            if !target_usable {
                continue;
            }
            let hidden = scene.target.completion.union(&m_rand.inverted())?;
            let weight = scene.target.completion.inverted();
            return Ok(TrainingSample {
                condition: masked_image(&scene.target.view.image, &hidden),
                hidden,
                cloud: products.target_cloud.image.clone(),
                truth: masked_image(&scene.target.view.image, &scene.target.completion),
                weight,
                source: SampleSource::Target,
            });
        }
        let i = rng.random_range(0..n);
        let x_ref = &scene.references[i].view.image;
        let r = &products.informative[i];
        let m_image = random_rect_mask(&opts.rect, w, h, rng)?;
        let (condition, hidden) = match opts.reference_masking {
            ReferenceMasking::TargetAware => (
                conditional_reference_mask(x_ref, r, &m_image)?,
                r.intersection(&m_image.inverted())?,
            ),
            ReferenceMasking::Uniform => {
                let hidden = m_image.inverted();
                (masked_image(x_ref, &hidden), hidden)
            }
        };
        let p_ref = &products.reference_clouds[i].image;
        let cloud = if opts.cloud_masking {
            let m_cloud = random_rect_mask(&opts.rect, w, h, rng)?;
            conditional_cloud_mask(p_ref, r, &m_cloud, opts.v_fill)?
        } else {
            p_ref.clone()
        };
        return Ok(TrainingSample {
            condition,
            hidden,
            cloud,
            weight: MaskImage::ones(w, h),
            truth: x_ref.clone(),
            source: SampleSource::Reference(i),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.5])
    }

    #[test]
    fn full_frame_rectangle() {
        let p = RectMaskParams { min_count: 1, max_count: 1, min_side: 1.0, max_side: 1.0, mode: Some(RectMode::Union) };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_rect_mask(&p, 8, 8, &mut rng).unwrap().is_all_zero());
        let p = RectMaskParams { mode: Some(RectMode::Complement), ..p };
        assert!(random_rect_mask(&p, 8, 8, &mut rng).unwrap().is_all_one());
    }

    #[test]
    fn rect_mask_matches_reference_trace() {
        let p = RectMaskParams { min_count: 3, max_count: 3, min_side: 0.1, max_side: 0.5, mode: Some(RectMode::Union) };
        let mask = random_rect_mask(&p, 64, 64, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n: usize = rng.random_range(3..=3);
        let mut oracle = vec![1u8; 64 * 64];
        for _ in 0..n {
            let fw: f64 = rng.random_range(0.1..=0.5);
            let fh: f64 = rng.random_range(0.1..=0.5);
            let (rw, rh) = ((fw * 64.0).round() as usize, (fh * 64.0).round() as usize);
            let x0 = rng.random_range(0..=64 - rw);
            let y0 = rng.random_range(0..=64 - rh);
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    oracle[y * 64 + x] = 0;
                }
            }
        }
        assert_eq!(mask.data(), &oracle[..]);
    }

    #[test]
    fn reference_mask_identities() {
        let x = gradient(6, 4);
        let m = MaskImage::from_fn(6, 4, |x, y| (x * y) % 3 == 0);
        assert_eq!(conditional_reference_mask(&x, &MaskImage::zeros(6, 4), &m).unwrap(), x);
        let out = conditional_reference_mask(&x, &MaskImage::ones(6, 4), &m).unwrap();
        for i in 0..24 {
            let expect = if m.get_at(i) { x.pixel_at(i) } else { [0.0; 3] };
            assert_eq!(out.pixel_at(i), expect);
        }
    }

    #[test]
    fn cloud_mask_identities() {
        let p = gradient(5, 5);
        let m = MaskImage::from_fn(5, 5, |x, _| x % 2 == 0);
        assert_eq!(conditional_cloud_mask(&p, &MaskImage::ones(5, 5), &m, 1.0).unwrap(), p);
        assert_eq!(conditional_cloud_mask(&p, &MaskImage::zeros(5, 5), &MaskImage::ones(5, 5), 1.0).unwrap(), p);
        let filled = conditional_cloud_mask(&p, &MaskImage::zeros(5, 5), &MaskImage::zeros(5, 5), 0.25).unwrap();
        assert_eq!(filled, Image::filled(5, 5, [0.25; 3]));
    }

    #[test]
    fn bad_fill_and_mismatched_masks() {
        let p = gradient(4, 4);
        let m = MaskImage::ones(4, 4);
        assert!(matches!(conditional_cloud_mask(&p, &m, &m, 1.5), Err(Error::Parameter(_))));
        assert!(matches!(conditional_reference_mask(&p, &MaskImage::ones(3, 4), &m), Err(Error::Shape(_))));
        // non-binary masks cannot be constructed in the first place
        assert!(matches!(MaskImage::new(1, 1, vec![3]), Err(Error::Validation(_))));
    }
}

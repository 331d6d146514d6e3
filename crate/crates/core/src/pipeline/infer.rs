use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dualnet::{from_latent, mask_to_latent, Denoiser, DenoiserInput, LatentBlock, NoiseSchedule};
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::scene::SceneBundle;

use super::products::GeometryProducts;
use super::train::{check_resolution, image_latent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Implicit sampler without injected noise.
    Deterministic,
    /// Implicit sampler with full posterior noise at every step.
    Ancestral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub steps: usize,
    pub sampler: Sampler,
    pub seed: u64,
    /// Copy known target pixels into the output.
    pub composite: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self { steps: 50, sampler: Sampler::Deterministic, seed: 0, composite: true }
    }
}

/// `steps` timesteps spread over `0..T`, ascending, always containing
/// `0` and `T - 1`.
pub fn sampling_timesteps(steps: usize, t_count: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > t_count {
        return Err(Error::Config(format!("sampler steps {steps} outside [1, {t_count}]")));
    }
    if steps == 1 {
        return Ok(vec![t_count - 1]);
    }
    let span = (t_count - 1) as f64;
    Ok((0..steps).map(|k| (k as f64 * span / (steps - 1) as f64).round() as usize).collect())
}

/// Runs the sampler from pure noise conditioned on the known target, its
/// completion mask and the projected cloud, then decodes the result.
pub fn infer(scene: &SceneBundle, products: &GeometryProducts, model: &Denoiser, cfg: &InferConfig) -> Result<Image> {
    check_resolution(scene, &model.config)?;
    let schedule = NoiseSchedule::linear(&model.config.schedule)?;
    let taus = sampling_timesteps(cfg.steps, schedule.len())?;
    let patch = model.config.patch;
    let completion = &scene.target.completion;
    let image = image_latent(&scene.known_target(), patch)?;
    let mask = mask_to_latent(completion, patch)?;
    let cloud = image_latent(&products.target_cloud.image, patch)?;
    let eta = match cfg.sampler {
        Sampler::Deterministic => 0.0,
        Sampler::Ancestral => 1.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = LatentBlock {
        data: (0..image.data.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        ..image.clone()
    };
    let mut input = DenoiserInput { noisy: x.clone(), t: 0, image, mask, cloud };
    for k in (0..taus.len()).rev() {
        let t = taus[k];
        let ab = schedule.alpha_bar(t);
        let ab_prev = if k > 0 { schedule.alpha_bar(taus[k - 1]) } else { 1.0 };
        input.noisy = x;
        input.t = t;
        let eps = model.forward(&input)?;
        let x0: Vec<f64> = input
            .noisy
            .data
            .iter()
            .zip(&eps.data)
            .map(|(&xv, &e)| ((xv - (1.0 - ab).sqrt() * e) / ab.sqrt()).clamp(-1.0, 1.0))
            .collect();
        let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt();
        let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        let data = input
            .noisy
            .data
            .iter()
            .zip(&x0)
            .map(|(&xv, &x0v)| {
                let e = (xv - ab.sqrt() * x0v) / (1.0 - ab).sqrt();
                let z = if sigma > 0.0 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                ab_prev.sqrt() * x0v + dir * e + sigma * z
            })
            .collect();
        x = LatentBlock { data, ..eps };
        if !x.is_finite() {
            return Err(Error::Numeric(format!("sampler diverged at t = {t}")));
        }
    }
    let decoded = from_latent(&x.map(|v| (v + 1.0) / 2.0), patch)?.clamped().quantized();
    Ok(if cfg.composite { composite(&decoded, scene) } else { decoded })
}

/// Known target pixels (completion mask 0) copied verbatim over `output`.
pub fn composite(output: &Image, scene: &SceneBundle) -> Image {
    let mut out = output.clone();
    let target = &scene.target.view.image;
    for i in 0..scene.target.completion.data().len() {
        if !scene.target.completion.get_at(i) {
            out.set_pixel_at(i, target.pixel_at(i));
        }
    }
    out
}

/// The projected target cloud pasted into the hole; uncovered hole pixels
/// keep the projection background.
pub fn copy_cloud_baseline(scene: &SceneBundle, products: &GeometryProducts) -> Result<Image> {
    check_resolution_only(scene, products)?;
    Ok(composite(&products.target_cloud.image, scene))
}

fn check_resolution_only(scene: &SceneBundle, products: &GeometryProducts) -> Result<()> {
    if products.target_cloud.image.dims() != scene.resolution() {
        return Err(Error::Validation("geometry products do not match the scene resolution".into()));
    }
    Ok(())
}

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dualnet::{
    add_noise, downsample_mask, mask_to_latent, round_to_f32, to_latent, Adam, AdamConfig, Denoiser, DenoiserConfig,
    DenoiserInput, LatentBlock, NoiseSchedule, TrainingExample,
};
use crate::error::{Error, Result};
use crate::masking::{build_training_sample, SampleSource, SamplingOptions, TrainingSample};
use crate::raster::{Image, MaskImage};
use crate::scene::SceneBundle;

use super::products::GeometryProducts;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub optimizer: AdamConfig,
    pub sampling: SamplingOptions,
    pub seed: u64,
    /// Emit a checkpoint every this many steps; 0 = only at the end.
    pub checkpoint_every: usize,
    /// Where a batch that produced a non-finite loss is written.
    pub dump_dir: Option<PathBuf>,
    pub model: DenoiserConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            batch: 8,
            optimizer: AdamConfig::default(),
            sampling: SamplingOptions::default(),
            seed: 0,
            checkpoint_every: 0,
            dump_dir: None,
            model: DenoiserConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch < 1 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if let Some(p) = self.sampling.target_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("target_probability {p} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.sampling.v_fill) {
            return Err(Error::Config(format!("v_fill {} outside [0, 1]", self.sampling.v_fill)));
        }
        self.sampling.rect.validate()?;
        self.optimizer.validate()?;
        self.model.validate()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Final parameters, rounded to checkpoint precision.
    pub model: Denoiser,
    /// Batch loss per step.
    pub losses: Vec<f64>,
    /// Steps on which the optimizer actually moved the parameters.
    pub updates: usize,
}

/// Maps `[0, 1]` colours to `[-1, 1]` latents.
pub fn image_latent(image: &Image, patch: usize) -> Result<LatentBlock> {
    Ok(to_latent(image, patch)?.map(|v| 2.0 * v - 1.0))
}

/// Latent weight: a latent pixel counts only if every pixel it covers does.
pub fn latent_weight(weight: &MaskImage, patch: usize) -> Result<MaskImage> {
    Ok(downsample_mask(&weight.inverted(), patch)?.inverted())
}

pub(crate) fn check_resolution(scene: &SceneBundle, model: &DenoiserConfig) -> Result<()> {
    if scene.resolution() != (model.width, model.height) {
        return Err(Error::Validation(format!(
            "scene is {:?} but the model is configured for {}x{}",
            scene.resolution(),
            model.width,
            model.height
        )));
    }
    Ok(())
}

fn normal_latent(shape: (usize, usize, usize), rng: &mut impl Rng) -> LatentBlock {
    let (c, h, w) = shape;
    let data = (0..c * h * w).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    LatentBlock { channels: c, height: h, width: w, data }
}

pub(crate) fn sample_to_example(
    sample: &TrainingSample,
    t: usize,
    eps: LatentBlock,
    schedule: &NoiseSchedule,
    patch: usize,
) -> Result<TrainingExample> {
    let x0 = image_latent(&sample.truth, patch)?;
    Ok(TrainingExample {
        input: DenoiserInput {
            noisy: add_noise(&x0, t, &eps, schedule)?,
            t,
            image: image_latent(&sample.condition, patch)?,
            mask: mask_to_latent(&sample.hidden, patch)?,
            cloud: image_latent(&sample.cloud, patch)?,
        },
        eps,
        weight: latent_weight(&sample.weight, patch)?,
    })
}

/// One batch: samples drawn in order from `rng`, each followed by its
/// timestep and noise.
pub fn draw_batch(
    scene: &SceneBundle,
    products: &GeometryProducts,
    cfg: &TrainConfig,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<TrainingSample>, Vec<TrainingExample>)> {
    let patch = cfg.model.patch;
    let (lw, lh) = cfg.model.latent_dims();
    let mut samples = Vec::with_capacity(cfg.batch);
    let mut examples = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let sample = build_training_sample(scene, products, &cfg.sampling, rng)?;
        let t = rng.random_range(0..schedule.len());
        let eps = normal_latent((cfg.model.latent_channels(), lh, lw), rng);
        examples.push(sample_to_example(&sample, t, eps, schedule, patch)?);
        samples.push(sample);
    }
    Ok((samples, examples))
}

fn describe_source(s: SampleSource) -> String {
    match s {
        SampleSource::Reference(i) => format!("reference {i}"),
        SampleSource::Target => "target".into(),
    }
}

fn dump_batch(step: usize, samples: &[TrainingSample], examples: &[TrainingExample], cfg: &TrainConfig) -> String {
    let mut text = format!("non-finite loss at step {step}\n");
    for (k, (s, e)) in samples.iter().zip(examples).enumerate() {
        let _ = writeln!(
            text,
            "  sample {k}: {} t={} weight_pixels={} noisy_finite={} cloud_finite={}",
            describe_source(s.source),
            e.input.t,
            e.weight.count_ones(),
            e.input.noisy.is_finite(),
            e.input.cloud.is_finite()
        );
    }
    if let Some(dir) = &cfg.dump_dir {
        let written = std::fs::create_dir_all(dir).map_err(Error::from).and_then(|_| {
            for (k, s) in samples.iter().enumerate() {
                s.condition.save_png(dir.join(format!("sample_{k}_condition.png")))?;
                s.cloud.save_png(dir.join(format!("sample_{k}_cloud.png")))?;
                s.hidden.save_png(dir.join(format!("sample_{k}_hidden.png")))?;
            }
            std::fs::write(dir.join("batch.txt"), &text)?;
            Ok(())
        });
        match written {
            Ok(()) => {
                let _ = writeln!(text, "  batch written to {}", dir.display());
            }
            Err(e) => {
                let _ = writeln!(text, "  could not write batch dump: {e}");
            }
        }
    }
    text
}

pub fn train_scene(scene: &SceneBundle, products: &GeometryProducts, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_scene_with(scene, products, cfg, |_, _| Ok(()))
}

/// Per-scene training. `on_checkpoint(step, model)` runs every
/// `checkpoint_every` steps and once after the final step with the rounded
/// final model. The loss trace depends only on the seeds.
pub fn train_scene_with(
    scene: &SceneBundle,
    products: &GeometryProducts,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &Denoiser) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_resolution(scene, &cfg.model)?;
    let schedule = NoiseSchedule::linear(&cfg.model.schedule)?;
    let mut model = Denoiser::new(cfg.model.clone())?;
    let mut optimizer = Adam::new(cfg.optimizer.clone(), &model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut updates = 0;
    for step in 1..=cfg.iterations {
        let (samples, batch) = draw_batch(scene, products, cfg, &schedule, &mut rng)?;
        let (loss, grad) = match model.loss_and_grad(&batch) {
            Ok(v) => v,
            Err(Error::Numeric(m)) => {
                return Err(Error::Numeric(format!("{m}; {}", dump_batch(step, &samples, &batch, cfg))))
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(Error::Numeric(dump_batch(step, &samples, &batch, cfg)));
        }
        losses.push(loss);
        if optimizer.step(&mut model, &grad)? {
            updates += 1;
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.iterations {
            let mut snapshot = model.clone();
            round_to_f32(&mut snapshot);
            on_checkpoint(step, &snapshot)?;
        }
    }
    round_to_f32(&mut model);
    on_checkpoint(cfg.iterations, &model)?;
    Ok(TrainOutcome { model, losses, updates })
}

/// Loss trace as `step,loss` CSV, steps counted from 1.
pub fn loss_trace_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", i + 1);
    }
    out
}

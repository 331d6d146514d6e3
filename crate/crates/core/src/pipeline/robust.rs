use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dualnet::Denoiser;
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::scene::SceneBundle;

use super::infer::{infer, InferConfig};
use super::products::{precompute_geometry_with, GeometryOptions, Perturbation};
use super::train::{train_scene, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbKind {
    /// Gaussian offsets on a fraction of the fused cloud's points.
    Noise,
    /// A fraction of points removed before projection.
    Sparse,
    /// Extra dynamic-mask pixels: each view's mask gains this fraction of
    /// its zero pixels.
    MaskError,
    /// Dynamic-mask pixels dropped: level 1 removes the masks entirely.
    MaskRemoval,
}

impl PerturbKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::Noise => "noise",
            PerturbKind::Sparse => "sparse",
            PerturbKind::MaskError => "mask-error",
            PerturbKind::MaskRemoval => "mask-removal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [PerturbKind::Noise, PerturbKind::Sparse, PerturbKind::MaskError, PerturbKind::MaskRemoval]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!("unknown perturbation '{s}' (expected noise, sparse, mask-error, mask-removal)"))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSpec {
    pub kind: PerturbKind,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub sigma_fraction: f64,
    /// Train a fresh model per cell on the perturbed geometry; otherwise
    /// only inference sees the perturbation.
    pub retrain: bool,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self {
            kind: PerturbKind::Noise,
            levels: vec![0.0, 0.25, 0.5, 0.75],
            seeds: vec![0, 1, 2],
            sigma_fraction: 0.02,
            retrain: true,
        }
    }
}

impl RobustnessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("robustness spec needs at least one level and one seed".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("robustness level {l} outside [0, 1]")));
        }
        if !(self.sigma_fraction >= 0.0 && self.sigma_fraction.is_finite()) {
            return Err(Error::Config(format!("sigma_fraction {} must be >= 0", self.sigma_fraction)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub kind: PerturbKind,
    pub level: f64,
    pub seed: u64,
    /// Masked-region PSNR.
    pub psnr: f64,
    pub ssim: f64,
    /// `psnr` minus the level-0 cell with the same seed, when present.
    pub delta_psnr: Option<f64>,
}

/// Seeds used for one grid cell: training, model init, sampling and the
/// perturbation all take the cell seed.
fn cell_configs(train: &TrainConfig, infer_cfg: &InferConfig, seed: u64) -> (TrainConfig, InferConfig) {
    let mut t = train.clone();
    t.seed = seed;
    t.model.init_seed = seed;
    (t, InferConfig { seed, ..infer_cfg.clone() })
}

/// Runs every `(level, seed)` cell. With `spec.retrain` a model is trained
/// per cell from `train`; otherwise `model` is reused.
pub fn robustness_run(
    scene: &SceneBundle,
    model: Option<&Denoiser>,
    train: &TrainConfig,
    infer_cfg: &InferConfig,
    spec: &RobustnessSpec,
) -> Result<Vec<RobustnessRow>> {
    spec.validate()?;
    if !spec.retrain && model.is_none() {
        return Err(Error::Config("robustness run without retraining needs a checkpoint".into()));
    }
    let cells: Vec<(f64, u64)> =
        spec.levels.iter().flat_map(|&l| spec.seeds.iter().map(move |&s| (l, s))).collect();
    let results: Vec<Result<(f64, f64)>> = cells
        .par_iter()
        .map(|&(level, seed)| {
            let perturbation = (level > 0.0).then_some(Perturbation {
                kind: spec.kind,
                level,
                sigma_fraction: spec.sigma_fraction,
                seed,
            });
            let opts = GeometryOptions { perturbation, ..GeometryOptions::default() };
            let products = precompute_geometry_with(scene, &opts)?;
            let (tcfg, icfg) = cell_configs(train, infer_cfg, seed);
            let trained;
            let m = if spec.retrain {
                trained = train_scene(scene, &products, &tcfg)?.model;
                &trained
            } else {
                model.expect("checked above")
            };
            let out = infer(scene, &products, m, &icfg)?;
            let truth = &scene.target.view.image;
            Ok((psnr(&out, truth, Some(&scene.target.completion))?, ssim(&out, truth)?))
        })
        .collect();
    let mut rows = Vec::with_capacity(cells.len());
    for ((level, seed), r) in cells.into_iter().zip(results) {
        let (p, s) = r?;
        rows.push(RobustnessRow { kind: spec.kind, level, seed, psnr: p, ssim: s, delta_psnr: None });
    }
    let baseline: Vec<(u64, f64)> = rows.iter().filter(|r| r.level == 0.0).map(|r| (r.seed, r.psnr)).collect();
    for r in &mut rows {
        r.delta_psnr = baseline.iter().find(|(s, _)| *s == r.seed).map(|(_, p)| r.psnr - p);
    }
    Ok(rows)
}

/// `kind,level,seed,psnr,ssim,delta_psnr` CSV.
pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    if rows.is_empty() {
        w.write_record(["kind", "level", "seed", "psnr", "ssim", "delta_psnr"]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

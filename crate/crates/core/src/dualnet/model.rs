//! Dual-branch epsilon predictor: a small pre-norm transformer over latent
//! tokens. Target and cloud tokens are stacked into one `n x dim` matrix
//! (`n = 2L`, or `L` without the cloud branch) and every block runs joint
//! self-attention over it. Only target rows feed the output head.

use std::ops::Range;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::MaskImage;

use super::attention::{masked_attention, masked_attention_backward, AttentionMask, AttentionMode, AttentionProbs};
use super::latent::LatentBlock;
use super::schedule::{NoiseSchedule, ScheduleConfig};
use super::layers::{silu, silu_backward, LayerNorm, LayerNormCache, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    Dual,
    /// No cloud branch; the cloud inputs are ignored.
    TargetOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub width: usize,
    pub height: usize,
    pub patch: usize,
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub mlp_hidden: usize,
    /// Sinusoidal timestep embedding width (even).
    pub time_dim: usize,
    pub branches: BranchMode,
    pub attention: AttentionMode,
    pub separate_cloud_weights: bool,
    /// Start with an all-zero output head.
    pub zero_head: bool,
    pub init_seed: u64,
    /// Noise schedule the model is trained and sampled with.
    pub schedule: ScheduleConfig,
    /// What the head predicts; the output is always an epsilon estimate.
    pub prediction: Prediction,
    /// Add a learned linear map of the target branch's mask and
    /// conditioning-image channels (not the noisy latent) to the head output.
    pub input_skip: bool,
    /// Fixed logit offset on each target token's link to its own cloud
    /// token (dual mode only).
    pub link_bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// `eps_hat = r`.
    Epsilon,
    /// `eps_hat = sqrt(1 - abar) * x_t + sqrt(abar) * r`.
    Velocity,
    /// `r` is a clean-latent estimate:
    /// `eps_hat = (x_t - sqrt(abar) * r) / sqrt(1 - abar)`.
    Sample,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            patch: 8,
            dim: 32,
            heads: 4,
            blocks: 2,
            mlp_hidden: 64,
            time_dim: 16,
            branches: BranchMode::Dual,
            attention: AttentionMode::Masked,
            separate_cloud_weights: false,
            zero_head: true,
            init_seed: 0,
            schedule: ScheduleConfig::default(),
            prediction: Prediction::Sample,
            input_skip: true,
            link_bias: 8.0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch == 0 || self.width == 0 || self.height == 0 {
            return bad("width, height and patch must be positive".into());
        }
        if !self.width.is_multiple_of(self.patch) || !self.height.is_multiple_of(self.patch) {
            return bad(format!("{}x{} is not divisible by patch {}", self.width, self.height, self.patch));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.mlp_hidden == 0 {
            return bad("mlp_hidden must be positive".into());
        }
        if self.time_dim < 2 || !self.time_dim.is_multiple_of(2) {
            return bad(format!("time_dim {} must be even and at least 2", self.time_dim));
        }
        if !self.link_bias.is_finite() {
            return bad("link_bias must be finite".into());
        }
        self.schedule.validate()
    }

    pub fn latent_channels(&self) -> usize {
        3 * self.patch * self.patch
    }

    pub fn mask_channels(&self) -> usize {
        self.patch * self.patch
    }

    /// Branch input width: noisy latent, mask, conditioning latent.
    pub fn input_channels(&self) -> usize {
        2 * self.latent_channels() + self.mask_channels()
    }

    pub fn latent_dims(&self) -> (usize, usize) {
        (self.width / self.patch, self.height / self.patch)
    }

    pub fn tokens(&self) -> usize {
        let (w, h) = self.latent_dims();
        w * h
    }

    fn branch_count(&self) -> usize {
        match self.branches {
            BranchMode::Dual => 2,
            BranchMode::TargetOnly => 1,
        }
    }

    fn weight_sets(&self) -> usize {
        if self.branches == BranchMode::Dual && self.separate_cloud_weights {
            2
        } else {
            1
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub norm1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchWeights {
    pub input: Linear,
    pub blocks: Vec<BlockWeights>,
}

/// One denoiser evaluation. All latents share the same spatial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserInput {
    pub noisy: LatentBlock,
    pub t: usize,
    /// Masked target (or reference) image latent.
    pub image: LatentBlock,
    /// Mask latent, 1 = hidden.
    pub mask: LatentBlock,
    /// Projected cloud latent.
    pub cloud: LatentBlock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub input: DenoiserInput,
    pub eps: LatentBlock,
    /// Latent-resolution loss weight, 1 = counted.
    pub weight: MaskImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub time_in: Linear,
    pub time_out: Linear,
    /// `L x dim`, shared by both branches.
    pub position: Array2<f64>,
    /// One row per branch.
    pub branch: Array2<f64>,
    /// One entry, or two with separate cloud weights.
    pub weights: Vec<BranchWeights>,
    pub final_norm: LayerNorm,
    pub head: Linear,
    /// Present with `input_skip`.
    pub skip: Option<Linear>,
    mask: AttentionMask,
    alpha_bars: Vec<f64>,
}

struct BlockCache {
    h_in: Array2<f64>,
    norm1: Vec<LayerNormCache>,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: AttentionProbs,
    att: Array2<f64>,
    norm2: Vec<LayerNormCache>,
    b: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

struct Cache {
    t: usize,
    x: Array2<f64>,
    temb: Array2<f64>,
    time_pre: Array2<f64>,
    time_act: Array2<f64>,
    blocks: Vec<BlockCache>,
    final_norm: LayerNormCache,
    f: Array2<f64>,
}

pub fn timestep_embedding(t: usize, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for k in 0..half {
        let freq = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[k] = arg.sin();
        out[half + k] = arg.cos();
    }
    out
}

impl Denoiser {
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let d = config.dim;
        let l = config.tokens();
        let time_in = Linear::init(config.time_dim, d, &mut rng);
        let time_out = Linear::init(d, d, &mut rng);
        let normal = Normal::new(0.0, 0.02).expect("finite");
        let position = Array2::from_shape_simple_fn((l, d), || normal.sample(&mut rng));
        let branch = Array2::from_shape_simple_fn((config.branch_count(), d), || normal.sample(&mut rng));
        let residual_std = 1.0 / ((2 * config.blocks.max(1)) as f64).sqrt();
        let weights = (0..config.weight_sets())
            .map(|_| BranchWeights {
                input: Linear::init(config.input_channels(), d, &mut rng),
                blocks: (0..config.blocks)
                    .map(|_| BlockWeights {
                        norm1: LayerNorm::new(d),
                        query: Linear::init(d, d, &mut rng),
                        key: Linear::init(d, d, &mut rng),
                        value: Linear::init(d, d, &mut rng),
                        output: Linear::random(d, d, residual_std / (d as f64).sqrt(), &mut rng),
                        norm2: LayerNorm::new(d),
                        fc1: Linear::init(d, config.mlp_hidden, &mut rng),
                        fc2: Linear::random(
                            config.mlp_hidden,
                            d,
                            residual_std / (config.mlp_hidden as f64).sqrt(),
                            &mut rng,
                        ),
                    })
                    .collect(),
            })
            .collect();
        let head = if config.zero_head {
            Linear::zeros(d, config.latent_channels())
        } else {
            Linear::init(d, config.latent_channels(), &mut rng)
        };
        let mask = Self::mask_for(&config);
        let alpha_bars = NoiseSchedule::linear(&config.schedule)?.alpha_bars;
        let skip = config
            .input_skip
            .then(|| Linear::zeros(config.input_channels() - config.latent_channels(), config.latent_channels()));
        Ok(Self {
            alpha_bars,
            skip,
            time_in,
            time_out,
            position,
            branch,
            weights,
            final_norm: LayerNorm::new(d),
            head,
            mask,
            config,
        })
    }

    fn mask_for(config: &DenoiserConfig) -> AttentionMask {
        let l = config.tokens();
        match config.branches {
            BranchMode::Dual => config.attention.mask(l).with_link_bias(l, config.link_bias),
            BranchMode::TargetOnly => AttentionMask::full(l),
        }
    }

    /// `(a, b)` with `eps_hat = a * x_t + b * r` at step `t`.
    fn output_coefficients(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bars[t];
        match self.config.prediction {
            Prediction::Epsilon => (0.0, 1.0),
            Prediction::Velocity => ((1.0 - ab).sqrt(), ab.sqrt()),
            Prediction::Sample => {
                let s = (1.0 - ab).sqrt();
                (1.0 / s, -ab.sqrt() / s)
            }
        }
    }

    /// Same architecture with every parameter zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, _, values) in out.tensors_mut() {
            values.fill(0.0);
        }
        out
    }

    pub fn attention_mask(&self) -> &AttentionMask {
        &self.mask
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Row ranges handled by each weight set.
    fn segments(&self) -> Vec<Range<usize>> {
        let l = self.config.tokens();
        match self.config.weight_sets() {
            1 => vec![0..l * self.config.branch_count()],
            _ => vec![0..l, l..2 * l],
        }
    }

    fn check_input(&self, input: &DenoiserInput) -> Result<()> {
        let (lw, lh) = self.config.latent_dims();
        let c = self.config.latent_channels();
        let expect = [
            ("noisy", &input.noisy, c),
            ("image", &input.image, c),
            ("mask", &input.mask, self.config.mask_channels()),
            ("cloud", &input.cloud, c),
        ];
        for (name, block, channels) in expect {
            if block.shape() != (channels, lh, lw) {
                return Err(Error::Shape(format!(
                    "{name} latent is {:?}, model expects {:?}",
                    block.shape(),
                    (channels, lh, lw)
                )));
            }
        }
        if input.t >= self.alpha_bars.len() {
            return Err(Error::Parameter(format!("timestep {} outside 0..{}", input.t, self.alpha_bars.len())));
        }
        if !(input.noisy.is_finite() && input.image.is_finite() && input.cloud.is_finite()) {
            return Err(Error::Numeric("non-finite denoiser input".into()));
        }
        Ok(())
    }

    fn input_rows(&self, input: &DenoiserInput) -> Array2<f64> {
        let noisy = input.noisy.to_tokens();
        let mask = input.mask.to_tokens();
        let tar = concatenate(Axis(1), &[noisy.view(), mask.view(), input.image.to_tokens().view()]).expect("rows");
        match self.config.branches {
            BranchMode::TargetOnly => tar,
            BranchMode::Dual => {
                let pt = concatenate(Axis(1), &[noisy.view(), mask.view(), input.cloud.to_tokens().view()])
                    .expect("rows");
                concatenate(Axis(0), &[tar.view(), pt.view()]).expect("cols")
            }
        }
    }

    fn seg_linear(&self, x: ArrayView2<f64>, pick: impl Fn(&BranchWeights) -> &Linear) -> Array2<f64> {
        let segs = self.segments();
        if segs.len() == 1 {
            return pick(&self.weights[0]).forward(x);
        }
        let parts: Vec<Array2<f64>> = segs
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| pick(w).forward(x.slice(s![r.clone(), ..])))
            .collect();
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(0), &views).expect("segments")
    }

    fn seg_linear_back(
        &self,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        grad: &mut Denoiser,
        pick: impl Fn(&BranchWeights) -> &Linear,
        pick_mut: impl Fn(&mut BranchWeights) -> &mut Linear,
    ) -> Array2<f64> {
        let mut dx = Array2::zeros((x.nrows(), pick(&self.weights[0]).weight.nrows()));
        for ((r, w), g) in self.segments().into_iter().zip(&self.weights).zip(grad.weights.iter_mut()) {
            let part = pick(w).backward(x.slice(s![r.clone(), ..]), dy.slice(s![r.clone(), ..]), pick_mut(g));
            dx.slice_mut(s![r, ..]).assign(&part);
        }
        dx
    }

    fn seg_norm(
        &self,
        x: ArrayView2<f64>,
        pick: impl Fn(&BranchWeights) -> &LayerNorm,
    ) -> (Array2<f64>, Vec<LayerNormCache>) {
        let mut out = Array2::zeros(x.dim());
        let mut caches = Vec::new();
        for (r, w) in self.segments().into_iter().zip(&self.weights) {
            let (y, c) = pick(w).forward(x.slice(s![r.clone(), ..]));
            out.slice_mut(s![r, ..]).assign(&y);
            caches.push(c);
        }
        (out, caches)
    }

    fn seg_norm_back(
        &self,
        caches: &[LayerNormCache],
        dy: ArrayView2<f64>,
        grad: &mut Denoiser,
        pick: impl Fn(&BranchWeights) -> &LayerNorm,
        pick_mut: impl Fn(&mut BranchWeights) -> &mut LayerNorm,
    ) -> Array2<f64> {
        let mut dx = Array2::zeros(dy.dim());
        for (((r, w), g), c) in self.segments().into_iter().zip(&self.weights).zip(grad.weights.iter_mut()).zip(caches) {
            let part = pick(w).backward(c, dy.slice(s![r.clone(), ..]), pick_mut(g));
            dx.slice_mut(s![r, ..]).assign(&part);
        }
        dx
    }

    fn forward_cached(&self, input: &DenoiserInput) -> Result<(Array2<f64>, Cache)> {
        self.check_input(input)?;
        let l = self.config.tokens();
        let x = self.input_rows(input);
        let temb = timestep_embedding(input.t, self.config.time_dim).insert_axis(Axis(0));
        let time_pre = self.time_in.forward(temb.view());
        let time_act = silu(&time_pre);
        let e = self.time_out.forward(time_act.view());

        let mut h = self.seg_linear(x.view(), |w| &w.input);
        for b in 0..self.config.branch_count() {
            let mut rows = h.slice_mut(s![b * l..(b + 1) * l, ..]);
            rows += &self.position;
            rows += &self.branch.row(b);
        }
        h += &e.row(0);

        let mut blocks = Vec::with_capacity(self.config.blocks);
        for j in 0..self.config.blocks {
            let (a, norm1) = self.seg_norm(h.view(), |w| &w.blocks[j].norm1);
            let q = self.seg_linear(a.view(), |w| &w.blocks[j].query);
            let k = self.seg_linear(a.view(), |w| &w.blocks[j].key);
            let v = self.seg_linear(a.view(), |w| &w.blocks[j].value);
            let (att, probs) = masked_attention(q.view(), k.view(), v.view(), self.config.heads, &self.mask);
            let o = self.seg_linear(att.view(), |w| &w.blocks[j].output);
            let h1 = &h + &o;
            let (b, norm2) = self.seg_norm(h1.view(), |w| &w.blocks[j].norm2);
            let pre = self.seg_linear(b.view(), |w| &w.blocks[j].fc1);
            let act = silu(&pre);
            let m = self.seg_linear(act.view(), |w| &w.blocks[j].fc2);
            let h2 = &h1 + &m;
            blocks.push(BlockCache { h_in: h, norm1, a, q, k, v, probs, att, norm2, b, pre, act });
            h = h2;
        }

        let (f, final_norm) = self.final_norm.forward(h.slice(s![..l, ..]));
        let mut y = self.head.forward(f.view());
        if let Some(skip) = &self.skip {
            y += &skip.forward(x.slice(s![..l, self.config.latent_channels()..]));
        }
        let (a, b) = self.output_coefficients(input.t);
        if (a, b) != (0.0, 1.0) {
            y *= b;
            y.scaled_add(a, &input.noisy.to_tokens());
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite epsilon prediction at t = {}", input.t)));
        }
        Ok((y, Cache { t: input.t, x, temb, time_pre, time_act, blocks, final_norm, f }))
    }

    /// Epsilon prediction, shaped like `input.noisy`.
    pub fn forward(&self, input: &DenoiserInput) -> Result<LatentBlock> {
        let (y, _) = self.forward_cached(input)?;
        let (lw, lh) = self.config.latent_dims();
        LatentBlock::from_tokens(&y, lh, lw)
    }

    fn backward(&self, cache: &Cache, dy: ArrayView2<f64>, grad: &mut Denoiser) {
        let l = self.config.tokens();
        let n = l * self.config.branch_count();
        let dr = &dy * self.output_coefficients(cache.t).1;
        let df = self.head.backward(cache.f.view(), dr.view(), &mut grad.head);
        if let (Some(skip), Some(gskip)) = (&self.skip, grad.skip.as_mut()) {
            skip.backward_params(cache.x.slice(s![..l, self.config.latent_channels()..]), dr.view(), gskip);
        }
        let dtar = self.final_norm.backward(&cache.final_norm, df.view(), &mut grad.final_norm);
        let mut dh = Array2::zeros((n, self.config.dim));
        dh.slice_mut(s![..l, ..]).assign(&dtar);

        for (j, c) in cache.blocks.iter().enumerate().rev() {
            let ds = self.seg_linear_back(c.act.view(), dh.view(), grad, |w| &w.blocks[j].fc2, |w| &mut w.blocks[j].fc2);
            let dpre = silu_backward(&c.pre, ds.view());
            let db = self.seg_linear_back(c.b.view(), dpre.view(), grad, |w| &w.blocks[j].fc1, |w| &mut w.blocks[j].fc1);
            let dh1 = &dh
                + &self.seg_norm_back(&c.norm2, db.view(), grad, |w| &w.blocks[j].norm2, |w| &mut w.blocks[j].norm2);

            let datt =
                self.seg_linear_back(c.att.view(), dh1.view(), grad, |w| &w.blocks[j].output, |w| &mut w.blocks[j].output);
            let (dq, dk, dv) = masked_attention_backward(c.q.view(), c.k.view(), c.v.view(), &c.probs, datt.view());
            let mut da = self.seg_linear_back(c.a.view(), dq.view(), grad, |w| &w.blocks[j].query, |w| &mut w.blocks[j].query);
            da += &self.seg_linear_back(c.a.view(), dk.view(), grad, |w| &w.blocks[j].key, |w| &mut w.blocks[j].key);
            da += &self.seg_linear_back(c.a.view(), dv.view(), grad, |w| &w.blocks[j].value, |w| &mut w.blocks[j].value);
            dh = &dh1 + &self.seg_norm_back(&c.norm1, da.view(), grad, |w| &w.blocks[j].norm1, |w| &mut w.blocks[j].norm1);
            debug_assert_eq!(c.h_in.dim(), dh.dim());
        }

        for b in 0..self.config.branch_count() {
            let rows = dh.slice(s![b * l..(b + 1) * l, ..]);
            grad.position += &rows;
            let mut brow = grad.branch.row_mut(b);
            brow += &rows.sum_axis(Axis(0));
        }
        let de = dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dact = self.time_out.backward(cache.time_act.view(), de.view(), &mut grad.time_out);
        let dpre = silu_backward(&cache.time_pre, dact.view());
        self.time_in.backward_params(cache.temb.view(), dpre.view(), &mut grad.time_in);
        for (r, (w, g)) in self.segments().into_iter().zip(self.weights.iter().zip(grad.weights.iter_mut())) {
            w.input.backward_params(cache.x.slice(s![r.clone(), ..]), dh.slice(s![r, ..]), &mut g.input);
        }
    }

    fn check_example(&self, ex: &TrainingExample) -> Result<()> {
        let (lw, lh) = self.config.latent_dims();
        if ex.eps.shape() != ex.input.noisy.shape() {
            return Err(Error::Shape("noise target does not match the noisy latent".into()));
        }
        if ex.weight.dims() != (lw, lh) {
            return Err(Error::Shape(format!("weight map is {:?}, latent grid is {:?}", ex.weight.dims(), (lw, lh))));
        }
        Ok(())
    }

    /// Loss of one example: mean over all latent values of
    /// `w * (eps - eps_hat)^2`, with `w` broadcast over channels.
    pub fn example_loss(&self, ex: &TrainingExample) -> Result<f64> {
        self.check_example(ex)?;
        let (y, _) = self.forward_cached(&ex.input)?;
        Ok(weighted_error(&y, ex).0)
    }

    /// Batch-mean loss and its gradient with respect to every parameter.
    /// Per-example gradients are summed in batch order, so the result does
    /// not depend on the thread count.
    pub fn loss_and_grad(&self, batch: &[TrainingExample]) -> Result<(f64, Denoiser)> {
        if batch.is_empty() {
            return Err(Error::Parameter("empty batch".into()));
        }
        for ex in batch {
            self.check_example(ex)?;
        }
        let scale = 1.0 / batch.len() as f64;
        let parts: Vec<Result<(f64, Denoiser)>> = batch
            .par_iter()
            .map(|ex| {
                let (y, cache) = self.forward_cached(&ex.input)?;
                let (loss, mut dy) = weighted_error(&y, ex);
                dy *= scale;
                let mut g = self.zeros_like();
                self.backward(&cache, dy.view(), &mut g);
                Ok((loss, g))
            })
            .collect();
        let mut total = 0.0;
        let mut grad: Option<Denoiser> = None;
        for part in parts {
            let (loss, g) = part?;
            total += loss;
            match grad.as_mut() {
                None => grad = Some(g),
                Some(acc) => acc.add_assign(&g),
            }
        }
        Ok((total * scale, grad.expect("non-empty batch")))
    }

    fn add_assign(&mut self, other: &Denoiser) {
        for ((_, _, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Named parameter tensors in a fixed order, with their shapes.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        push_linear(&mut out, "time_in", &self.time_in);
        push_linear(&mut out, "time_out", &self.time_out);
        out.push(("position".into(), self.position.shape().to_vec(), self.position.as_slice().expect("standard")));
        out.push(("branch".into(), self.branch.shape().to_vec(), self.branch.as_slice().expect("standard")));
        for (i, w) in self.weights.iter().enumerate() {
            push_linear(&mut out, &format!("set{i}.input"), &w.input);
            for (j, b) in w.blocks.iter().enumerate() {
                let p = format!("set{i}.block{j}");
                push_norm(&mut out, &format!("{p}.norm1"), &b.norm1);
                push_linear(&mut out, &format!("{p}.query"), &b.query);
                push_linear(&mut out, &format!("{p}.key"), &b.key);
                push_linear(&mut out, &format!("{p}.value"), &b.value);
                push_linear(&mut out, &format!("{p}.output"), &b.output);
                push_norm(&mut out, &format!("{p}.norm2"), &b.norm2);
                push_linear(&mut out, &format!("{p}.fc1"), &b.fc1);
                push_linear(&mut out, &format!("{p}.fc2"), &b.fc2);
            }
        }
        push_norm(&mut out, "final_norm", &self.final_norm);
        push_linear(&mut out, "head", &self.head);
        if let Some(skip) = &self.skip {
            push_linear(&mut out, "skip", skip);
        }
        out
    }

    /// Mutable counterpart of [`Denoiser::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let mut out = Vec::new();
        push_linear_mut(&mut out, "time_in", &mut self.time_in);
        push_linear_mut(&mut out, "time_out", &mut self.time_out);
        let shape = self.position.shape().to_vec();
        out.push(("position".into(), shape, self.position.as_slice_mut().expect("standard")));
        let shape = self.branch.shape().to_vec();
        out.push(("branch".into(), shape, self.branch.as_slice_mut().expect("standard")));
        for (i, w) in self.weights.iter_mut().enumerate() {
            push_linear_mut(&mut out, &format!("set{i}.input"), &mut w.input);
            for (j, b) in w.blocks.iter_mut().enumerate() {
                let p = format!("set{i}.block{j}");
                push_norm_mut(&mut out, &format!("{p}.norm1"), &mut b.norm1);
                push_linear_mut(&mut out, &format!("{p}.query"), &mut b.query);
                push_linear_mut(&mut out, &format!("{p}.key"), &mut b.key);
                push_linear_mut(&mut out, &format!("{p}.value"), &mut b.value);
                push_linear_mut(&mut out, &format!("{p}.output"), &mut b.output);
                push_norm_mut(&mut out, &format!("{p}.norm2"), &mut b.norm2);
                push_linear_mut(&mut out, &format!("{p}.fc1"), &mut b.fc1);
                push_linear_mut(&mut out, &format!("{p}.fc2"), &mut b.fc2);
            }
        }
        push_norm_mut(&mut out, "final_norm", &mut self.final_norm);
        push_linear_mut(&mut out, "head", &mut self.head);
        if let Some(skip) = &mut self.skip {
            push_linear_mut(&mut out, "skip", skip);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }
}

type Tensor<'a> = (String, Vec<usize>, &'a [f64]);
type TensorMut<'a> = (String, Vec<usize>, &'a mut [f64]);

fn push_linear<'a>(out: &mut Vec<Tensor<'a>>, name: &str, lin: &'a Linear) {
    out.push((format!("{name}.weight"), lin.weight.shape().to_vec(), lin.weight.as_slice().expect("standard")));
    out.push((format!("{name}.bias"), lin.bias.shape().to_vec(), lin.bias.as_slice().expect("standard")));
}

fn push_norm<'a>(out: &mut Vec<Tensor<'a>>, name: &str, ln: &'a LayerNorm) {
    out.push((format!("{name}.gain"), ln.gain.shape().to_vec(), ln.gain.as_slice().expect("standard")));
    out.push((format!("{name}.bias"), ln.bias.shape().to_vec(), ln.bias.as_slice().expect("standard")));
}

fn push_linear_mut<'a>(out: &mut Vec<TensorMut<'a>>, name: &str, lin: &'a mut Linear) {
    let ws = lin.weight.shape().to_vec();
    let bs = lin.bias.shape().to_vec();
    out.push((format!("{name}.weight"), ws, lin.weight.as_slice_mut().expect("standard")));
    out.push((format!("{name}.bias"), bs, lin.bias.as_slice_mut().expect("standard")));
}

fn push_norm_mut<'a>(out: &mut Vec<TensorMut<'a>>, name: &str, ln: &'a mut LayerNorm) {
    let gs = ln.gain.shape().to_vec();
    let bs = ln.bias.shape().to_vec();
    out.push((format!("{name}.gain"), gs, ln.gain.as_slice_mut().expect("standard")));
    out.push((format!("{name}.bias"), bs, ln.bias.as_slice_mut().expect("standard")));
}

/// `(loss, dloss/dy)` for `L x c` predictions `y`.
fn weighted_error(y: &Array2<f64>, ex: &TrainingExample) -> (f64, Array2<f64>) {
    let eps = ex.eps.to_tokens();
    let count = y.len() as f64;
    let mut loss = 0.0;
    let mut dy = Array2::zeros(y.dim());
    for (t, (yrow, erow)) in y.rows().into_iter().zip(eps.rows()).enumerate() {
        if !ex.weight.get_at(t) {
            continue;
        }
        for (c, (&a, &b)) in yrow.iter().zip(erow).enumerate() {
            let diff = a - b;
            loss += diff * diff;
            dy[[t, c]] = 2.0 * diff / count;
        }
    }
    (loss / count, dy)
}

/// Free-function form: target branch conditioned on `(image, mask)`, cloud
/// branch on `(cloud, mask)`.
pub fn denoiser_forward(
    noisy: &LatentBlock,
    t: usize,
    cond_tar: (&LatentBlock, &LatentBlock),
    cloud: &LatentBlock,
    model: &Denoiser,
) -> Result<LatentBlock> {
    model.forward(&DenoiserInput {
        noisy: noisy.clone(),
        t,
        image: cond_tar.0.clone(),
        mask: cond_tar.1.clone(),
        cloud: cloud.clone(),
    })
}

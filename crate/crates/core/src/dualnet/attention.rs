//! Joint self-attention over concatenated target and cloud tokens.
//!
//! Token layout: target tokens occupy rows `0..L`, cloud tokens `L..2L`,
//! and cloud token `L + i` corresponds to target token `i` (same latent
//! pixel).

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::Linear;

/// Square boolean matrix, `true` = attention allowed from row to column.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    size: usize,
    allowed: Vec<bool>,
    /// Constant added to the logit of each target-to-own-cloud pair.
    link: Option<(usize, f64)>,
}

impl AttentionMask {
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                allowed.push(f(i, j));
            }
        }
        Self { size, allowed, link: None }
    }

    pub fn full(size: usize) -> Self {
        Self { size, allowed: vec![true; size * size], link: None }
    }

    /// Each branch attends only to itself.
    pub fn block_diagonal(l: usize) -> Self {
        Self::from_fn(2 * l, |i, j| (i < l) == (j < l))
    }

    /// As [`build_attention_mask`] plus the reverse diagonal link from each
    /// cloud token back to its target token.
    pub fn symmetric(l: usize) -> Self {
        Self::from_fn(2 * l, |i, j| (i < l) == (j < l) || i % l == j % l)
    }

    /// Adds `bias` to the logit from target token `i` to cloud token `l + i`
    /// wherever that pair is allowed. `l` must be half the mask size.
    pub fn with_link_bias(mut self, l: usize, bias: f64) -> Self {
        assert_eq!(2 * l, self.size, "link bias needs a 2L mask");
        self.link = (bias != 0.0).then_some((l, bias));
        self
    }

    /// Logit offset for an allowed pair.
    pub fn bias(&self, row: usize, col: usize) -> f64 {
        match self.link {
            Some((l, b)) if row < l && col == row + l => b,
            _ => 0.0,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.size + col]
    }

    pub fn row_count(&self, row: usize) -> usize {
        self.allowed[row * self.size..(row + 1) * self.size].iter().filter(|&&a| a).count()
    }
}

/// Within-branch attention everywhere, plus target token `i` attending its
/// cloud token `L + i`; every other cross-branch pair is blocked.
pub fn build_attention_mask(l: usize) -> AttentionMask {
    AttentionMask::from_fn(2 * l, |i, j| {
        let (ti, tj) = (i < l, j < l);
        ti == tj || (ti && j == i + l)
    })
}

/// Which attention pattern the dual-branch model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// [`build_attention_mask`].
    Masked,
    /// Every token attends every token.
    Unmasked,
    /// [`AttentionMask::symmetric`].
    Symmetric,
}

impl AttentionMode {
    pub fn mask(self, l: usize) -> AttentionMask {
        match self {
            AttentionMode::Masked => build_attention_mask(l),
            AttentionMode::Unmasked => AttentionMask::full(2 * l),
            AttentionMode::Symmetric => AttentionMask::symmetric(l),
        }
    }
}

/// Per-head softmax probabilities, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionProbs(pub Vec<Array2<f64>>);

/// Multi-head scaled dot-product attention with disallowed logits at
/// `-inf`. `q`, `k`, `v` are `n x d`, split into `heads` column blocks.
pub fn masked_attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    heads: usize,
    mask: &AttentionMask,
) -> (Array2<f64>, AttentionProbs) {
    let (n, d) = q.dim();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut p = q.slice(cols).dot(&k.slice(cols).t());
        for (i, mut row) in p.rows_mut().into_iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for (j, x) in row.iter_mut().enumerate() {
                if mask.allows(i, j) {
                    *x = *x * scale + mask.bias(i, j);
                    max = max.max(*x);
                } else {
                    *x = f64::NEG_INFINITY;
                }
            }
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = if *x == f64::NEG_INFINITY { 0.0 } else { (*x - max).exp() };
                sum += *x;
            }
            row.mapv_inplace(|x| x / sum);
        }
        out.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    (out, AttentionProbs(probs))
}

/// Returns `(dq, dk, dv)`.
pub fn masked_attention_backward(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    probs: &AttentionProbs,
    dout: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (n, d) = q.dim();
    let heads = probs.0.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for (h, p) in probs.0.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let doh = dout.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&doh));
        let dp = doh.dot(&v.slice(cols).t());
        // softmax backward: ds = p * (dp - rowsum(dp * p)), zero where masked
        let row_dot = (&dp * p).sum_axis(Axis(1));
        let mut ds = dp;
        ds.zip_mut_with(p, |g, &pv| *g *= pv);
        for (mut row, (&rd, prow)) in ds.rows_mut().into_iter().zip(row_dot.iter().zip(p.rows())) {
            row.zip_mut_with(&prow, |g, &pv| *g -= pv * rd);
        }
        ds.mapv_inplace(|g| g * scale);
        dq.slice_mut(cols).assign(&ds.dot(&k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&q.slice(cols)));
    }
    (dq, dk, dv)
}

/// Query/key/value/output projections of one attention layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

/// Concatenate the two branches along the token axis, run masked
/// self-attention over all `2L` tokens, and split the result back.
pub fn joint_self_attention(
    h_tar: ArrayView2<f64>,
    h_pt: ArrayView2<f64>,
    mask: &AttentionMask,
    layer: &AttentionLayer,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (l, d) = h_tar.dim();
    if h_pt.dim() != (l, d) {
        return Err(Error::Shape(format!("cloud tokens {:?} differ from target tokens {:?}", h_pt.dim(), (l, d))));
    }
    if mask.size() != 2 * l {
        return Err(Error::Shape(format!("mask size {} does not match 2L = {}", mask.size(), 2 * l)));
    }
    if layer.heads == 0 || d % layer.heads != 0 || layer.query.weight.nrows() != d {
        return Err(Error::Shape("attention layer does not fit the token dimension".into()));
    }
    let cat = concatenate(Axis(0), &[h_tar, h_pt]).expect("equal widths");
    let q = layer.query.forward(cat.view());
    let k = layer.key.forward(cat.view());
    let v = layer.value.forward(cat.view());
    let (att, _) = masked_attention(q.view(), k.view(), v.view(), layer.heads, mask);
    let out = layer.output.forward(att.view());
    Ok((out.slice(s![..l, ..]).to_owned(), out.slice(s![l.., ..]).to_owned()))
}

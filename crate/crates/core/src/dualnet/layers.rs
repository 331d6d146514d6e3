//! Dense layers with hand-written backward passes. Activations are
//! row-major `tokens x features` matrices.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `input x output`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((input, output)), bias: Array1::zeros(output) }
    }

    pub fn random(input: usize, output: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            weight: Array2::from_shape_simple_fn((input, output), || normal.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    /// Fan-in scaled initialisation.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self::random(input, output, 1.0 / (input as f64).sqrt(), rng)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    pub fn backward_params(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self { gain: Array1::ones(dim), bias: Array1::zeros(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { gain: Array1::zeros(dim), bias: Array1::zeros(dim) }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = &x - &mean.insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gain + &self.bias;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: ArrayView2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gain += &(&dy * &cache.xhat).sum_axis(Axis(0));
        grad.bias += &dy.sum_axis(Axis(0));
        let dxhat = &dy * &self.gain;
        let d = dy.ncols() as f64;
        let sum_d = dxhat.sum_axis(Axis(1));
        let sum_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1));
        let mut dx = dxhat;
        for (((mut row, xh), &s1), (&s2, &inv)) in dx
            .rows_mut()
            .into_iter()
            .zip(cache.xhat.rows())
            .zip(&sum_d)
            .zip(sum_dx.iter().zip(&cache.inv_std))
        {
            Zip::from(&mut row).and(&xh).for_each(|g, &xv| {
                *g = inv / d * (d * *g - s1 - xv * s2);
            });
        }
        dx
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// `dy * d silu(x) / dx` for pre-activation `x`.
pub fn silu_backward(x: &Array2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
    let mut out = dy.to_owned();
    Zip::from(&mut out).and(x).for_each(|g, &v| {
        let s = sigmoid(v);
        *g *= s * (1.0 + v * (1.0 - s));
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric_grad(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.dim());
        for idx in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[idx] += h;
            xm.as_slice_mut().unwrap()[idx] -= h;
            g.as_slice_mut().unwrap()[idx] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn layer_norm_input_gradient() {
        let ln = LayerNorm { gain: array![0.5, 1.5, -1.0], bias: array![0.1, 0.0, 0.2] };
        let x = array![[0.3, -1.2, 2.0], [1.0, 1.1, 0.9]];
        let w = array![[1.0, -2.0, 0.5], [0.3, 0.7, -1.1]];
        let loss = |x: &Array2<f64>| (ln.forward(x.view()).0 * &w).sum();
        let (_, cache) = ln.forward(x.view());
        let mut g = LayerNorm::zeros(3);
        let dx = ln.backward(&cache, w.view(), &mut g);
        let num = numeric_grad(loss, &x);
        for (a, b) in dx.iter().zip(&num) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn silu_gradient() {
        let x = array![[-2.0, -0.1, 0.0, 0.4, 3.0]];
        let dy = Array2::ones((1, 5));
        let g = silu_backward(&x, dy.view());
        let num = numeric_grad(|x| silu(x).sum(), &x);
        for (a, b) in g.iter().zip(&num) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

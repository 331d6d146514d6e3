use crate::error::{Error, Result};

/// Per-pixel camera-frame depth with an explicit validity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// Validity derived from the values: positive and finite is valid, and
    /// invalid entries are normalised to `0.0`.
    pub fn from_values(width: usize, height: usize, mut values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "depth buffer holds {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        let valid: Vec<bool> = values.iter().map(|&z| z > 0.0 && z.is_finite()).collect();
        for (z, &ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *z = 0.0;
            }
        }
        Ok(Self { width, height, values, valid })
    }

    /// Raw constructor; only lengths are checked.
    pub fn from_parts(width: usize, height: usize, values: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::Shape("depth values/validity length mismatch".into()));
        }
        Ok(Self { width, height, values, valid })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Copy with every pixel where `drop` is set marked invalid.
    pub fn without(&self, drop: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for i in 0..out.values.len() {
            if drop(i) {
                out.valid[i] = false;
                out.values[i] = 0.0;
            }
        }
        out
    }
}

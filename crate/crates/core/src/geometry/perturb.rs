//! Robustness perturbations of point clouds.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::cloud::PointCloud;

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Parameter(format!("ratio {ratio} outside [0, 1]")));
    }
    Ok(())
}

/// `floor(ratio * n)` distinct indices drawn uniformly: the first `k`
/// positions of a partial Fisher-Yates shuffle of `0..n`, where step `i`
/// swaps position `i` with `rng.random_range(i..n)`.
pub fn choose_indices(n: usize, ratio: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    check_ratio(ratio)?;
    let k = ((ratio * n as f64).floor() as usize).min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        perm.swap(i, j);
    }
    perm.truncate(k);
    Ok(perm)
}

/// Adds i.i.d. `N(0, sigma^2)` offsets to each coordinate of
/// `floor(ratio * N)` uniformly chosen points.
pub fn perturb_noise(cloud: &PointCloud, ratio: f64, sigma: f64, rng: &mut impl Rng) -> Result<PointCloud> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    let chosen = choose_indices(cloud.len(), ratio, rng)?;
    let mut out = cloud.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    for idx in chosen {
        for c in out.points[idx].iter_mut() {
            *c += normal.sample(rng);
        }
    }
    Ok(out)
}

/// Removes `floor(ratio * N)` uniformly chosen points; survivors keep their
/// relative order.
pub fn sparsify(cloud: &PointCloud, ratio: f64, rng: &mut impl Rng) -> Result<PointCloud> {
    let chosen = choose_indices(cloud.len(), ratio, rng)?;
    let mut keep = vec![true; cloud.len()];
    for idx in chosen {
        keep[idx] = false;
    }
    let mut out = PointCloud::default();
    for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
        out.points.push(cloud.points[i]);
        out.colors.push(cloud.colors[i]);
        out.sources.push(cloud.sources[i]);
    }
    Ok(out)
}

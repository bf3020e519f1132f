//! Smooth per-length fallback for sparse calibration buckets.
//!
//! Bucket means and variances are each fitted with a weighted non-increasing
//! isotonic regression across lengths (longer sentences are more
//! predictable), interpolated linearly between observed lengths and held
//! constant beyond them. Each length then gets a moment-matched gamma law.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub loc: f64,
    pub scale: f64,
    pub shape: f64,
}

impl GammaParams {
    pub fn from_moments(mean: f64, var: f64) -> Option<Self> {
        (mean > 0.0 && var > 0.0 && mean.is_finite() && var.is_finite()).then(|| GammaParams {
            loc: 0.0,
            scale: var / mean,
            shape: mean * mean / var,
        })
    }

    /// `P(X >= x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.loc {
            return 1.0;
        }
        statrs::function::gamma::gamma_ur(self.shape, (x - self.loc) / self.scale)
    }
}

/// Pool-adjacent-violators fit of a non-increasing sequence.
pub(crate) fn isotonic_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (weighted mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (v2, w2, c2) = blocks[blocks.len() - 1];
            let (v1, w1, c1) = blocks[blocks.len() - 2];
            if v1 >= v2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, c)| std::iter::repeat_n(v, c))
        .collect()
}

/// Fitted gamma parameters for every length in `first..=last`, or `None` when
/// no bucket has two or more distinct samples.
pub fn fit_length_curve(
    per_length: &BTreeMap<usize, Vec<f64>>,
    first: usize,
    last: usize,
) -> Option<BTreeMap<usize, GammaParams>> {
    let mut knots = Vec::new();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    let mut weights = Vec::new();
    for (&len, xs) in per_length {
        if xs.len() < 2 {
            continue;
        }
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        knots.push(len);
        means.push(mean);
        vars.push(var);
        weights.push(m);
    }
    if knots.is_empty() || first > last {
        return None;
    }
    let means = isotonic_decreasing(&means, &weights);
    let vars = isotonic_decreasing(&vars, &weights);

    let mut out = BTreeMap::new();
    for len in first..=last {
        let (mean, var) = interpolate(&knots, &means, &vars, len);
        out.insert(len, GammaParams::from_moments(mean, var)?);
    }
    Some(out)
}

fn interpolate(knots: &[usize], means: &[f64], vars: &[f64], len: usize) -> (f64, f64) {
    let k = knots.partition_point(|&x| x < len);
    if k == 0 {
        return (means[0], vars[0]);
    }
    if k == knots.len() {
        return (means[k - 1], vars[k - 1]);
    }
    if knots[k] == len {
        return (means[k], vars[k]);
    }
    let (x0, x1) = (knots[k - 1] as f64, knots[k] as f64);
    let t = (len as f64 - x0) / (x1 - x0);
    (
        means[k - 1] + t * (means[k] - means[k - 1]),
        vars[k - 1] + t * (vars[k] - vars[k - 1]),
    )
}

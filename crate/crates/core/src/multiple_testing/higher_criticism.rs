use serde::{Deserialize, Serialize};

use super::check_pvalues;
use crate::error::{Error, Result};

/// Fraction of the smallest P-values the HC maximum ranges over.
pub const DEFAULT_GAMMA0: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcConfig {
    pub gamma0: f64,
    /// HC+ variant: only ranks whose P-value exceeds `1/n` compete.
    pub plus: bool,
}

impl Default for HcConfig {
    fn default() -> Self {
        HcConfig {
            gamma0: DEFAULT_GAMMA0,
            plus: false,
        }
    }
}

impl HcConfig {
    pub fn with_gamma0(gamma0: f64) -> Self {
        HcConfig {
            gamma0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcResult {
    pub hc: f64,
    /// 1-based rank achieving the maximum (smallest on ties).
    pub j_star: usize,
    /// The order statistic at `j_star`.
    pub p_threshold: f64,
    /// Input positions with P-value at or below `p_threshold`, ascending.
    pub selected: Vec<usize>,
    pub gamma0: f64,
    pub n: usize,
}

/// Largest rank considered: `max(1, floor(n * gamma0))`.
pub fn max_rank(n: usize, gamma0: f64) -> usize {
    // the nudge keeps products like 10 * 0.4 from landing just under an integer
    let bound = (n as f64 * gamma0 + 1e-9).floor() as usize;
    bound.max(1)
}

/// Higher Criticism with the default (plain) variant.
pub fn hc(pvalues: &[f64], gamma0: f64) -> Result<HcResult> {
    hc_with(pvalues, HcConfig::with_gamma0(gamma0))
}

pub fn hc_with(pvalues: &[f64], cfg: HcConfig) -> Result<HcResult> {
    if pvalues.is_empty() {
        return Err(Error::NoTestableSentences);
    }
    check_pvalues(pvalues)?;
    let mut sorted = pvalues.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let (value, j_star) = hc_sorted(&sorted, cfg)?;
    let p_threshold = sorted[j_star - 1];
    let selected = pvalues
        .iter()
        .enumerate()
        .filter(|(_, p)| **p <= p_threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(HcResult {
        hc: value,
        j_star,
        p_threshold,
        selected,
        gamma0: cfg.gamma0,
        n: pvalues.len(),
    })
}

/// HC value and its 1-based argmax over P-values already sorted ascending.
/// Inputs are not re-validated; this is the simulation fast path.
pub fn hc_sorted(sorted: &[f64], cfg: HcConfig) -> Result<(f64, usize)> {
    if !(cfg.gamma0 > 0.0 && cfg.gamma0 < 1.0) {
        return Err(Error::InvalidInput(format!(
            "gamma0 must lie in (0, 1), got {}",
            cfg.gamma0
        )));
    }
    let n = sorted.len();
    if n == 0 {
        return Err(Error::NoTestableSentences);
    }
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    // j = n has a zero denominator and is never a candidate
    let last = max_rank(n, cfg.gamma0).min(n - 1);
    let mut best: Option<(f64, usize)> = None;
    for j in 1..=last {
        let p = sorted[j - 1];
        if cfg.plus && p <= 1.0 / nf {
            continue;
        }
        let u = j as f64 / nf;
        let v = sqrt_n * (u - p) / (u * (1.0 - u)).sqrt();
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, j));
        }
    }
    best.ok_or(Error::EmptyRange {
        n,
        gamma0: cfg.gamma0,
    })
}

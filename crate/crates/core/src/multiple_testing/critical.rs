//! Monte-Carlo critical values for HC under independent uniform P-values.
//!
//! Draw `d` for sample size `n` uses the substream
//! `substream(derive_seed(seed, n), d)` and takes `n` values of
//! [`uniform_pvalue`]. Anything that needs the same null sample (e.g. an HC
//! P-value for a report) regenerates it from `(n, n_sims, seed)`.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::higher_criticism::{hc_sorted, HcConfig, DEFAULT_GAMMA0};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, uniform_pvalue};

pub const CRIT_TABLE_FORMAT: u32 = 1;

const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_TAG: u64 = 0xB007_5712_A9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub n: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_sims: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub format: u32,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    pub entries: Vec<CriticalValue>,
}

fn default_gamma0() -> f64 {
    DEFAULT_GAMMA0
}

/// Result of looking up a threshold for a sample size that may not be tabulated.
#[derive(Debug, Clone, PartialEq)]
pub struct TableLookup<'a> {
    pub entry: &'a CriticalValue,
    pub exact: bool,
}

impl CriticalValueTable {
    /// Entry for `alpha` at `n`, or else at the nearest larger tabulated `n`,
    /// or else at the largest smaller one.
    pub fn lookup(&self, n: usize, alpha: f64) -> Option<TableLookup<'_>> {
        let same_alpha = || self.entries.iter().filter(|e| (e.alpha - alpha).abs() < 1e-12);
        if let Some(entry) = same_alpha().find(|e| e.n == n) {
            return Some(TableLookup { entry, exact: true });
        }
        let above = same_alpha().filter(|e| e.n > n).min_by_key(|e| e.n);
        let below = same_alpha().filter(|e| e.n < n).max_by_key(|e| e.n);
        above
            .or(below)
            .map(|entry| TableLookup { entry, exact: false })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: CriticalValueTable = serde_json::from_str(&raw)?;
        if table.format != CRIT_TABLE_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported critical value table format {}",
                path.display(),
                table.format
            )));
        }
        Ok(table)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// `n_sims` HC values of `n` independent uniform P-values, in draw order.
pub fn simulate_null_hc(n: usize, n_sims: usize, seed: u64, cfg: HcConfig) -> Result<Vec<f64>> {
    // surfaces EmptyRange / bad gamma0 once instead of per draw
    hc_sorted(&vec![0.5; n.max(1)], cfg)?;
    let base = derive_seed(seed, n as u64);
    (0..n_sims)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, d| {
                let mut rng = substream(base, d as u64);
                buf.clear();
                buf.extend((0..n).map(|_| uniform_pvalue(&mut rng)));
                buf.sort_unstable_by(f64::total_cmp);
                hc_sorted(buf, cfg).map(|(v, _)| v)
            },
        )
        .collect()
}

/// Empirical `1 - alpha` quantile (inverted CDF) of ascending `sorted`.
/// `alpha = 1` gives the minimum.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    sorted[quantile_index(sorted.len(), 1.0 - alpha)]
}

fn quantile_index(m: usize, level: f64) -> usize {
    let rank = (level * m as f64 - 1e-9).ceil() as isize;
    (rank - 1).clamp(0, m as isize - 1) as usize
}

/// Percentile-bootstrap 0.95 interval for the `1 - alpha` quantile.
pub fn bootstrap_quantile_ci(values: &[f64], alpha: f64, resamples: usize, seed: u64) -> (f64, f64) {
    let m = values.len();
    let idx = quantile_index(m, 1.0 - alpha);
    let mut estimates: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(m),
            |buf: &mut Vec<f64>, b| {
                let mut rng = substream(seed, b as u64);
                buf.clear();
                buf.extend((0..m).map(|_| values[rng.random_range(0..m)]));
                *buf.select_nth_unstable_by(idx, f64::total_cmp).1
            },
        )
        .collect();
    estimates.sort_unstable_by(f64::total_cmp);
    (
        estimates[quantile_index(resamples, 0.025)],
        estimates[quantile_index(resamples, 0.975)],
    )
}

/// Critical values at the default `gamma0`.
pub fn simulate_critical_values(
    ns: &[usize],
    alphas: &[f64],
    n_sims: usize,
    seed: u64,
) -> Result<CriticalValueTable> {
    simulate_critical_values_with(ns, alphas, n_sims, seed, HcConfig::default())
}

pub fn simulate_critical_values_with(
    ns: &[usize],
    alphas: &[f64],
    n_sims: usize,
    seed: u64,
    cfg: HcConfig,
) -> Result<CriticalValueTable> {
    if n_sims < 1000 {
        return Err(Error::InvalidInput(format!(
            "n_sims must be at least 1000, got {n_sims}"
        )));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::InvalidInput(format!("alpha {a} outside (0, 1]")));
    }
    let mut entries = Vec::with_capacity(ns.len() * alphas.len());
    for &n in ns {
        let mut sims = simulate_null_hc(n, n_sims, seed, cfg)?;
        sims.sort_unstable_by(f64::total_cmp);
        let boot_seed = derive_seed(derive_seed(seed, n as u64), BOOTSTRAP_TAG);
        for &alpha in alphas {
            let (ci_low, ci_high) = bootstrap_quantile_ci(
                &sims,
                alpha,
                BOOTSTRAP_RESAMPLES,
                derive_seed(boot_seed, alpha.to_bits()),
            );
            entries.push(CriticalValue {
                n,
                alpha,
                threshold: upper_quantile(&sims, alpha),
                ci_low,
                ci_high,
                n_sims,
                seed,
            });
        }
    }
    Ok(CriticalValueTable {
        format: CRIT_TABLE_FORMAT,
        gamma0: cfg.gamma0,
        entries,
    })
}

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::power::binomial_se;
use crate::error::{Error, Result};
use crate::multiple_testing::{hc_sorted, simes_sorted, upper_quantile, HcConfig};
use crate::rng::{derive_seed, substream, uniform_pvalue};

const NULL_TAG: u64 = 0x6e75_6c6c;
const ALT_TAG: u64 = 0x616c_74;

/// Non-null P-values are `1 - Phi(Z + mu)` with `Z` standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltSpec {
    pub mu: f64,
}

impl AltSpec {
    /// Shift at which the signal sits at `r` on the `mu^2 = 2 r ln n` scale.
    pub fn calibrated(n: usize, r: f64) -> Self {
        AltSpec {
            mu: (2.0 * r * (n as f64).ln()).sqrt(),
        }
    }

    pub fn pvalue<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        normal_survival(z + self.mu).clamp(f64::MIN_POSITIVE, 1.0)
    }
}

pub fn normal_survival(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Hc,
    Fisher,
    /// Benjamini-Hochberg returning a non-empty set.
    Bh,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Hc, Statistic::Fisher, Statistic::Bh];

    /// Value on ascending P-values; larger means more evidence. For BH this is
    /// minus the Simes statistic `min n p_(i) / i`, so that BH at level `q`
    /// rejects exactly when the value is at least `-q`.
    fn value(self, sorted: &[f64], cfg: HcConfig) -> Result<f64> {
        Ok(match self {
            Statistic::Hc => hc_sorted(sorted, cfg)?.0,
            Statistic::Fisher => -2.0 * sorted.iter().map(|p| p.ln()).sum::<f64>(),
            Statistic::Bh => -simes_sorted(sorted),
        })
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Hc => "hc",
            Statistic::Fisher => "fisher",
            Statistic::Bh => "bh",
        })
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc" => Ok(Statistic::Hc),
            "fisher" => Ok(Statistic::Fisher),
            "bh" => Ok(Statistic::Bh),
            other => Err(Error::InvalidInput(format!(
                "unknown statistic {other:?} (expected hc, fisher or bh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub n: usize,
    pub beta: f64,
    pub alt: AltSpec,
    pub stats: Vec<Statistic>,
    pub n_trials: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Null draws behind each statistic's threshold.
    pub null_sims: usize,
    pub hc: HcConfig,
}

impl MixtureConfig {
    pub fn new(n: usize, beta: f64, mu: f64) -> Self {
        MixtureConfig {
            n,
            beta,
            alt: AltSpec { mu },
            stats: Statistic::ALL.to_vec(),
            n_trials: 1000,
            seed: 0,
            alpha: 0.05,
            null_sims: 10_000,
            hc: HcConfig::default(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        (self.n as f64).powf(-self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticPower {
    pub statistic: Statistic,
    pub power: f64,
    pub se: f64,
    /// Simulated level-alpha critical value on the statistic's own scale.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub n: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub alpha: f64,
    pub n_trials: usize,
    pub null_sims: usize,
    pub seed: u64,
    pub rows: Vec<StatisticPower>,
}

impl MixtureReport {
    pub fn get(&self, stat: Statistic) -> Option<&StatisticPower> {
        self.rows.iter().find(|r| r.statistic == stat)
    }
}

/// Power of each statistic against the sparse mixture
/// `(1 - eps) U(0,1) + eps Q` with `eps = n^-beta`.
///
/// Every statistic rejects above its own simulated level-`alpha` critical
/// value, so sizes are matched up to Monte Carlo error.
pub fn mixture_mc(cfg: &MixtureConfig) -> Result<MixtureReport> {
    if !(cfg.beta > 0.5 && cfg.beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0.5, 1), got {}", cfg.beta)));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if !cfg.alt.mu.is_finite() {
        return Err(Error::InvalidInput(format!("mu must be finite, got {}", cfg.alt.mu)));
    }
    if cfg.n_trials == 0 || cfg.null_sims == 0 {
        return Err(Error::InvalidInput("n_trials and null_sims must be positive".into()));
    }
    if cfg.stats.is_empty() {
        return Err(Error::InvalidInput("no statistics requested".into()));
    }
    let eps = cfg.epsilon();
    let null_seed = derive_seed(cfg.seed, NULL_TAG);
    let alt_seed = derive_seed(cfg.seed, ALT_TAG);

    let null = draw_values(cfg, null_seed, cfg.null_sims, None)?;
    let alt = draw_values(cfg, alt_seed, cfg.n_trials, Some(eps))?;

    let rows = cfg
        .stats
        .iter()
        .enumerate()
        .map(|(k, &statistic)| {
            let mut values: Vec<f64> = null.iter().map(|v| v[k]).collect();
            values.sort_unstable_by(f64::total_cmp);
            let threshold = upper_quantile(&values, cfg.alpha);
            let rejections = alt.iter().filter(|v| v[k] > threshold).count();
            let power = rejections as f64 / cfg.n_trials as f64;
            StatisticPower {
                statistic,
                power,
                se: binomial_se(power, cfg.n_trials),
                threshold,
            }
        })
        .collect();
    Ok(MixtureReport {
        n: cfg.n,
        beta: cfg.beta,
        epsilon: eps,
        mu: cfg.alt.mu,
        alpha: cfg.alpha,
        n_trials: cfg.n_trials,
        null_sims: cfg.null_sims,
        seed: cfg.seed,
        rows,
    })
}

/// Statistic values per draw; `eps = None` draws from the pure null.
fn draw_values(cfg: &MixtureConfig, seed: u64, draws: usize, eps: Option<f64>) -> Result<Vec<Vec<f64>>> {
    (0..draws)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(cfg.n),
            |buf: &mut Vec<f64>, d| {
                let mut rng = substream(seed, d as u64);
                buf.clear();
                for _ in 0..cfg.n {
                    let p = match eps {
                        Some(e) if rng.random::<f64>() < e => cfg.alt.pvalue(&mut rng),
                        Some(_) => uniform_pvalue(&mut rng),
                        None => uniform_pvalue(&mut rng),
                    };
                    buf.push(p);
                }
                buf.sort_unstable_by(f64::total_cmp);
                cfg.stats.iter().map(|s| s.value(buf, cfg.hc)).collect()
            },
        )
        .collect()
}

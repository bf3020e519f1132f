use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::mix::{mix, MixSpec};
use crate::calibration::{score_lppts, CalibrationConfig, NullTable};
use crate::error::{Error, Result};
use crate::multiple_testing::{simulate_null_hc, upper_quantile, HcConfig};
use crate::perplexity::LpptScore;
use crate::pipeline::{decide, Verdict};
use crate::rng::{derive_seed, substream};

const CRIT_TAG: u64 = 0x6372_6974;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub alpha: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub calibration: CalibrationConfig,
    pub hc: HcConfig,
    /// Null draws behind each simulated HC threshold.
    pub null_sims: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            epsilons: vec![0.1, 0.2],
            ns: vec![50, 100, 200],
            alpha: 0.05,
            n_trials: 200,
            seed: 0,
            calibration: CalibrationConfig::default(),
            hc: HcConfig::default(),
            null_sims: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub epsilon: f64,
    pub n_sentences: usize,
    pub dataset_id: String,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub config: CellConfig,
    pub power: f64,
    pub se: f64,
    pub n_trials: usize,
    pub rejections: usize,
    /// Mean over rejecting trials that flagged at least one sentence.
    pub mean_precision: Option<f64>,
    /// Mean over rejecting trials with at least one inserted sentence.
    pub mean_recall: Option<f64>,
    /// Trials whose document had too few testable sentences for HC.
    pub untestable_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub config: CellConfig,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub estimates: Vec<PowerEstimate>,
    pub skipped: Vec<SkippedCell>,
}

impl PowerReport {
    pub fn get(&self, epsilon: f64, n: usize) -> Option<&PowerEstimate> {
        self.estimates
            .iter()
            .find(|e| e.config.epsilon == epsilon && e.config.n_sentences == n)
    }
}

/// Binomial standard error of a rejection rate.
pub fn binomial_se(rate: f64, trials: usize) -> f64 {
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trial {
    Untestable,
    Accepted,
    Rejected {
        precision: Option<f64>,
        recall: Option<f64>,
    },
}

/// Level-`alpha` HC thresholds for uniform nulls, memoized by `n`.
struct Thresholds {
    alpha: f64,
    sims: usize,
    seed: u64,
    cfg: HcConfig,
    cache: Mutex<HashMap<usize, f64>>,
}

impl Thresholds {
    fn get(&self, n: usize) -> Result<f64> {
        if let Some(&t) = self.cache.lock().expect("poisoned").get(&n) {
            return Ok(t);
        }
        let mut values = simulate_null_hc(n, self.sims, self.seed, self.cfg)?;
        values.sort_unstable_by(f64::total_cmp);
        let t = upper_quantile(&values, self.alpha);
        self.cache.lock().expect("poisoned").insert(n, t);
        Ok(t)
    }
}

/// Estimates HC detection power on every `(epsilon, n)` cell of the grid.
///
/// Each trial splits the machine sentences in half at random, calibrates a
/// null table on one half, builds a mixed document from the other half (its
/// articles shuffled and concatenated), and runs the test at its simulated
/// level-`alpha` threshold for the number of testable sentences.
pub fn estimate_power(dataset: &Dataset, cfg: &PowerConfig) -> Result<PowerReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be positive".into()));
    }
    let thresholds = Thresholds {
        alpha: cfg.alpha,
        sims: cfg.null_sims,
        seed: derive_seed(cfg.seed, CRIT_TAG),
        cfg: cfg.hc,
        cache: Mutex::new(HashMap::new()),
    };
    let mut report = PowerReport::default();
    for &epsilon in &cfg.epsilons {
        for &n in &cfg.ns {
            let cell = CellConfig {
                epsilon,
                n_sentences: n,
                dataset_id: dataset.id.clone(),
                alpha: cfg.alpha,
            };
            match run_cell(dataset, cfg, &cell, &thresholds) {
                Ok(est) => {
                    log::info!("eps={epsilon} n={n}: power {:.3} (se {:.3})", est.power, est.se);
                    report.estimates.push(est)
                }
                Err(e @ (Error::Insufficient { .. } | Error::InvalidInput(_))) => {
                    log::warn!("skipping cell eps={epsilon} n={n}: {e}");
                    report.skipped.push(SkippedCell {
                        config: cell,
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}

fn run_cell(dataset: &Dataset, cfg: &PowerConfig, cell: &CellConfig, thr: &Thresholds) -> Result<PowerEstimate> {
    let spec = MixSpec::new(cell.epsilon, cell.n_sentences, 0);
    let total = dataset.machine_len();
    let held_out = total - total / 2;
    if held_out < spec.base_len() {
        return Err(Error::Insufficient {
            what: "held-out machine sentences",
            required: spec.base_len(),
            available: held_out,
        });
    }
    let cell_seed = derive_seed(derive_seed(cfg.seed, cell.epsilon.to_bits()), cell.n_sentences as u64);
    let trials = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(cell_seed, t as u64);
            trial(dataset, cfg, spec, thr, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rejections = 0;
    let (mut prec, mut n_prec, mut rec, mut n_rec, mut untestable) = (0.0, 0usize, 0.0, 0usize, 0);
    for t in &trials {
        match *t {
            Trial::Untestable => untestable += 1,
            Trial::Accepted => {}
            Trial::Rejected { precision, recall } => {
                rejections += 1;
                if let Some(p) = precision {
                    prec += p;
                    n_prec += 1;
                }
                if let Some(r) = recall {
                    rec += r;
                    n_rec += 1;
                }
            }
        }
    }
    let power = rejections as f64 / cfg.n_trials as f64;
    Ok(PowerEstimate {
        config: cell.clone(),
        power,
        se: binomial_se(power, cfg.n_trials),
        n_trials: cfg.n_trials,
        rejections,
        mean_precision: (n_prec > 0).then(|| prec / n_prec as f64),
        mean_recall: (n_rec > 0).then(|| rec / n_rec as f64),
        untestable_trials: untestable,
    })
}

fn trial<R: Rng>(
    dataset: &Dataset,
    cfg: &PowerConfig,
    mut spec: MixSpec,
    thr: &Thresholds,
    rng: &mut R,
) -> Result<Trial> {
    let total = dataset.machine_len();
    let mut training = vec![false; total];
    for i in index::sample(rng, total, total / 2) {
        training[i] = true;
    }
    let mut train = Vec::with_capacity(total / 2);
    let mut held: Vec<Vec<LpptScore>> = Vec::with_capacity(dataset.articles.len());
    let mut k = 0;
    for article in &dataset.articles {
        let mut rest = Vec::new();
        for s in article {
            if training[k] {
                train.push(*s);
            } else {
                rest.push(*s);
            }
            k += 1;
        }
        if !rest.is_empty() {
            held.push(rest);
        }
    }
    held.shuffle(rng);
    let machine: Vec<LpptScore> = held.into_iter().flatten().collect();

    let table = NullTable::from_scores(dataset.model_id.clone(), cfg.calibration, train)?;
    spec.seed = rng.random();
    let doc = mix(&machine, &dataset.human, &spec)?;
    let scores: Vec<LpptScore> = doc
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| LpptScore { sent_index: i, ..*s })
        .collect();
    let pv = score_lppts(&scores, &table)?;

    let threshold = match thr.get(pv.entries.len()) {
        Ok(t) => t,
        Err(Error::EmptyRange { .. }) => return Ok(Trial::Untestable),
        Err(e) => return Err(e),
    };
    let decision = match decide(&pv, threshold, cfg.hc) {
        Ok(d) => d,
        Err(Error::NoTestableSentences | Error::EmptyRange { .. }) => return Ok(Trial::Untestable),
        Err(e) => return Err(e),
    };
    if decision.verdict == Verdict::NotEdited {
        return Ok(Trial::Accepted);
    }
    let hits = decision
        .suspected
        .iter()
        .filter(|s| doc.truth.binary_search(&s.sent_index).is_ok())
        .count() as f64;
    Ok(Trial::Rejected {
        precision: (!decision.suspected.is_empty()).then(|| hits / decision.suspected.len() as f64),
        recall: (!doc.truth.is_empty()).then(|| hits / doc.truth.len() as f64),
    })
}

//! Length-conditioned null calibration of LPPT.
//!
//! A [`NullTable`] holds, for each token count, the sorted LPPT values of
//! calibration sentences written by the reference generator. A sentence's
//! P-value is the add-one empirical survival of its LPPT within its own
//! length bucket:
//!
//! ```text
//! p = (1 + #{calibration lppt >= observed}) / (m + 1)
//! ```
//!
//! Buckets with fewer than `min_bucket` samples fall back to a smooth gamma
//! fit across lengths (see [`fit`]). Sentences with at most `min_len` tokens
//! are not tested at all.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perplexity::{lppt, LpptScore};
use crate::provider::{ContextPolicy, TokenizedSentence};

pub mod fit;
mod uniformity;

pub use fit::GammaParams;
pub use uniformity::{kolmogorov_survival, ks_uniform, KsResult};

pub const NULL_TABLE_FORMAT: u32 = 1;
/// Sentences with this many tokens or fewer are excluded.
pub const DEFAULT_MIN_LEN: usize = 10;
pub const DEFAULT_MIN_BUCKET: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub min_len: usize,
    pub min_bucket: usize,
    pub policy: ContextPolicy,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            min_len: DEFAULT_MIN_LEN,
            min_bucket: DEFAULT_MIN_BUCKET,
            policy: ContextPolicy::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTable {
    pub format: u32,
    pub model_id: String,
    pub policy: ContextPolicy,
    /// Largest excluded token count: only sentences with more tokens are tested.
    pub min_len: usize,
    pub min_bucket: usize,
    /// Token count → ascending LPPT samples.
    pub per_length: BTreeMap<usize, Vec<f64>>,
    /// Token count → fitted fallback law. Empty when no fit was possible.
    #[serde(default)]
    pub fit: BTreeMap<usize, GammaParams>,
    pub counts: BTreeMap<usize, usize>,
    /// Calibration sentences dropped for being too short.
    #[serde(default)]
    pub excluded_short: usize,
}

/// Builds a null table from calibration sentences scored under one model and
/// one context policy.
pub fn build_null_table(
    calibration: impl IntoIterator<Item = TokenizedSentence>,
    cfg: CalibrationConfig,
) -> Result<NullTable> {
    if cfg.min_bucket == 0 {
        return Err(Error::InvalidInput("min_bucket must be at least 1".into()));
    }
    let mut model_id: Option<String> = None;
    let mut scores = Vec::new();
    for sentence in calibration {
        sentence.validate()?;
        match &model_id {
            None => model_id = Some(sentence.model_id.clone()),
            Some(m) if *m != sentence.model_id => {
                return Err(Error::InvalidInput(format!(
                    "calibration mixes model ids {m:?} and {:?}",
                    sentence.model_id
                )))
            }
            Some(_) => {}
        }
        if cfg.policy == ContextPolicy::None && sentence.context_id.is_some() {
            return Err(Error::InvalidInput(format!(
                "{}#{} was scored with context but the table policy is none",
                sentence.doc_id, sentence.sent_index
            )));
        }
        scores.push(lppt(&sentence)?);
    }
    let model_id = model_id.ok_or(Error::Insufficient {
        what: "calibration sentences",
        required: 1,
        available: 0,
    })?;
    NullTable::from_scores(model_id, cfg, scores)
}

impl NullTable {
    /// Builds a table from already computed scores.
    pub fn from_scores(
        model_id: String,
        cfg: CalibrationConfig,
        scores: impl IntoIterator<Item = LpptScore>,
    ) -> Result<NullTable> {
        if cfg.min_bucket == 0 {
            return Err(Error::InvalidInput("min_bucket must be at least 1".into()));
        }
        let mut per_length: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut excluded_short = 0usize;
        for score in scores {
            if score.n_tokens <= cfg.min_len {
                excluded_short += 1;
                continue;
            }
            per_length.entry(score.n_tokens).or_default().push(score.lppt);
        }
        if per_length.is_empty() {
            return Err(Error::Insufficient {
                what: "calibration sentences longer than min_len",
                required: 1,
                available: 0,
            });
        }
        for bucket in per_length.values_mut() {
            bucket.sort_unstable_by(f64::total_cmp);
        }
        let counts = per_length.iter().map(|(&l, v)| (l, v.len())).collect();
        let last = *per_length.keys().next_back().expect("non-empty");
        let fit = fit::fit_length_curve(&per_length, cfg.min_len + 1, last).unwrap_or_default();
        if fit.is_empty() {
            log::warn!("no smooth fallback fit: no bucket has two distinct samples");
        }
        Ok(NullTable {
            format: NULL_TABLE_FORMAT,
            model_id,
            policy: cfg.policy,
            min_len: cfg.min_len,
            min_bucket: cfg.min_bucket,
            per_length,
            fit,
            counts,
            excluded_short,
        })
    }
    /// Whether a sentence of `n_tokens` tokens is tested at all.
    pub fn is_testable(&self, n_tokens: usize) -> bool {
        n_tokens > self.min_len
    }

    pub fn is_sparse(&self, n_tokens: usize) -> bool {
        self.counts.get(&n_tokens).copied().unwrap_or(0) < self.min_bucket
    }

    /// Total number of bucketed calibration samples.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    fn fitted(&self, n_tokens: usize) -> Option<&GammaParams> {
        self.fit
            .get(&n_tokens)
            .or_else(|| self.fit.range(n_tokens..).next().map(|(_, g)| g))
            .or_else(|| self.fit.range(..n_tokens).next_back().map(|(_, g)| g))
    }

    /// P-value of `score`, or `None` when the sentence is too short to test.
    pub fn p_value(&self, score: &LpptScore) -> Result<Option<f64>> {
        if !self.is_testable(score.n_tokens) {
            return Ok(None);
        }
        let bucket = self.per_length.get(&score.n_tokens).map(Vec::as_slice).unwrap_or(&[]);
        let m = bucket.len();
        if m >= self.min_bucket {
            return Ok(Some(empirical_survival(bucket, score.lppt)));
        }
        if let Some(params) = self.fitted(score.n_tokens) {
            let floor = 1.0 / (self.total() + 1) as f64;
            return Ok(Some(params.survival(score.lppt).clamp(floor, 1.0)));
        }
        if m > 0 {
            return Ok(Some(empirical_survival(bucket, score.lppt)));
        }
        Err(Error::InvalidInput(format!(
            "no calibration data or fit for sentences of {} tokens",
            score.n_tokens
        )))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: NullTable = serde_json::from_str(&raw)?;
        if table.format != NULL_TABLE_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported null table format {}",
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

/// Add-one survival of `x` in the ascending `sorted` sample; ties count as
/// at-or-above.
pub fn empirical_survival(sorted: &[f64], x: f64) -> f64 {
    let m = sorted.len();
    let at_or_above = m - sorted.partition_point(|&l| l < x);
    (1 + at_or_above) as f64 / (m + 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueEntry {
    pub sent_index: usize,
    pub n_tokens: usize,
    pub lppt: f64,
    pub pvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excluded {
    pub sent_index: usize,
    pub n_tokens: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub entries: Vec<PValueEntry>,
    pub excluded: Vec<Excluded>,
}

impl PValueVector {
    pub fn pvalues(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.pvalue).collect()
    }
}

/// P-values for precomputed scores, in input order.
pub fn score_lppts(scores: &[LpptScore], table: &NullTable) -> Result<PValueVector> {
    let mut out = PValueVector::default();
    for score in scores {
        match table.p_value(score)? {
            Some(pvalue) => out.entries.push(PValueEntry {
                sent_index: score.sent_index,
                n_tokens: score.n_tokens,
                lppt: score.lppt,
                pvalue,
            }),
            None => out.excluded.push(Excluded {
                sent_index: score.sent_index,
                n_tokens: score.n_tokens,
                reason: ExclusionReason::Short,
            }),
        }
    }
    Ok(out)
}

/// Scores every sentence of a document against `table`, in sentence order.
pub fn score_document(sentences: &[TokenizedSentence], table: &NullTable) -> Result<PValueVector> {
    let mut scores = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        if sentence.model_id != table.model_id {
            return Err(Error::Protocol(format!(
                "{}#{} scored by {:?}, table calibrated for {:?}",
                sentence.doc_id, sentence.sent_index, sentence.model_id, table.model_id
            )));
        }
        scores.push(lppt(sentence)?);
    }
    score_lppts(&scores, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// A sentence of `n` tokens whose LPPT is exactly `value`.
    fn sentence(idx: usize, n: usize, value: f64) -> TokenizedSentence {
        TokenizedSentence {
            doc_id: "cal".into(),
            sent_index: idx,
            tokens: vec!["t".into(); n],
            logprobs: vec![-value; n],
            context_id: None,
            model_id: "m".into(),
        }
    }

    fn cfg(min_bucket: usize) -> CalibrationConfig {
        CalibrationConfig {
            min_bucket,
            ..Default::default()
        }
    }

    fn four_sample_table(min_bucket: usize) -> NullTable {
        let cal = [2.0, 3.5, 2.5, 3.0].iter().enumerate().map(|(i, &v)| sentence(i, 12, v));
        build_null_table(cal, cfg(min_bucket)).unwrap()
    }

    fn score(n_tokens: usize, lppt: f64) -> LpptScore {
        LpptScore {
            sent_index: 0,
            lppt,
            n_tokens,
        }
    }

    #[test]
    fn bucketing_sorts_and_flags_sparse() {
        let t = four_sample_table(DEFAULT_MIN_BUCKET);
        assert_eq!(t.per_length[&12], vec![2.0, 2.5, 3.0, 3.5]);
        assert_eq!(t.counts[&12], 4);
        assert!(t.is_sparse(12));
        assert!(!four_sample_table(4).is_sparse(12));
    }

    #[test]
    fn short_calibration_sentences_are_counted_not_bucketed() {
        let cal = vec![sentence(0, 9, 2.0), sentence(1, 12, 2.0), sentence(2, 10, 1.0)];
        let t = build_null_table(cal, cfg(1)).unwrap();
        assert_eq!(t.excluded_short, 2);
        assert_eq!(t.per_length.keys().copied().collect::<Vec<_>>(), vec![12]);
    }

    #[test]
    fn mixed_models_and_empty_input_are_errors() {
        let mut other = sentence(1, 12, 2.0);
        other.model_id = "n".into();
        assert!(build_null_table(vec![sentence(0, 12, 2.0), other], cfg(1)).is_err());
        assert!(build_null_table(Vec::new(), cfg(1)).is_err());
        assert!(build_null_table(vec![sentence(0, 5, 2.0)], cfg(1)).is_err());
    }

    #[test]
    fn context_scored_records_need_context_policy() {
        let mut s = sentence(1, 12, 2.0);
        s.context_id = Some("0".into());
        assert!(build_null_table(vec![s.clone()], cfg(1)).is_err());
        let c = CalibrationConfig {
            policy: ContextPolicy::PrecedingSentence,
            ..cfg(1)
        };
        assert_eq!(build_null_table(vec![s], c).unwrap().policy, ContextPolicy::PrecedingSentence);
    }

    #[test]
    fn empirical_pvalue_examples() {
        let t = four_sample_table(1);
        assert_relative_eq!(t.p_value(&score(12, 3.2)).unwrap().unwrap(), 0.4);
        assert_eq!(t.p_value(&score(12, 1.0)).unwrap().unwrap(), 1.0);
        assert_relative_eq!(t.p_value(&score(12, 9.0)).unwrap().unwrap(), 0.2);
        // ties count as at-or-above
        assert_relative_eq!(t.p_value(&score(12, 3.0)).unwrap().unwrap(), 0.6);
    }

    #[test]
    fn short_query_is_excluded_not_failed() {
        let t = four_sample_table(1);
        assert_eq!(t.p_value(&score(10, 3.0)).unwrap(), None);
        assert_eq!(t.p_value(&score(3, 3.0)).unwrap(), None);
    }

    #[test]
    fn sparse_bucket_uses_fit_within_bounds() {
        let t = four_sample_table(DEFAULT_MIN_BUCKET);
        assert!(!t.fit.is_empty());
        let lo = t.p_value(&score(12, 1.0)).unwrap().unwrap();
        let mid = t.p_value(&score(12, 2.75)).unwrap().unwrap();
        let hi = t.p_value(&score(12, 50.0)).unwrap().unwrap();
        assert!(lo > mid && mid > hi);
        assert_eq!(hi, 1.0 / 5.0);
        // lengths never seen use the nearest fitted law
        let far = t.p_value(&score(200, 2.75)).unwrap().unwrap();
        assert_eq!(far, mid);
    }

    #[test]
    fn empty_bucket_without_fit_is_an_error() {
        let t = build_null_table(vec![sentence(0, 12, 2.0)], cfg(1)).unwrap();
        assert!(t.fit.is_empty());
        assert!(t.p_value(&score(12, 2.0)).is_ok());
        assert!(t.p_value(&score(13, 2.0)).is_err());
    }

    #[test]
    fn score_document_splits_short_sentences() {
        let t = four_sample_table(1);
        let doc = vec![sentence(0, 12, 3.2), sentence(1, 8, 3.2), sentence(2, 12, 3.2)];
        let pv = score_document(&doc, &t).unwrap();
        assert_eq!(pv.entries.iter().map(|e| e.sent_index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(pv.excluded.len(), 1);
        assert_eq!(pv.excluded[0].sent_index, 1);
        assert_eq!(pv.entries[0].pvalue, pv.entries[1].pvalue);

        let all_short = vec![sentence(0, 3, 1.0), sentence(1, 4, 1.0)];
        let pv = score_document(&all_short, &t).unwrap();
        assert!(pv.entries.is_empty());
        assert_eq!(pv.excluded.len(), 2);
    }

    #[test]
    fn score_document_checks_model() {
        let t = four_sample_table(1);
        let mut s = sentence(0, 12, 3.0);
        s.model_id = "other".into();
        assert!(matches!(score_document(&[s], &t), Err(Error::Protocol(_))));
    }

    #[test]
    fn json_round_trip() {
        let t = four_sample_table(DEFAULT_MIN_BUCKET);
        let json = t.to_json().unwrap();
        assert!(json.contains("\"format\": 1"));
        let back: NullTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn disjoint_split_pvalues_are_uniform() {
        let mut rng = substream(8, 0);
        let mut draw = |i: usize| {
            let n = rng.random_range(11..=25);
            let v = 4.0 - 0.05 * n as f64 + rng.random::<f64>() * 1.5;
            sentence(i, n, v)
        };
        let cal: Vec<_> = (0..6000).map(&mut draw).collect();
        let held: Vec<_> = (0..3000).map(&mut draw).collect();
        let t = build_null_table(cal, cfg(30)).unwrap();
        let pv = score_document(&held, &t).unwrap();
        let ks = ks_uniform(&pv.pvalues());
        assert!(ks.statistic < 0.05 && ks.pvalue > 0.01, "{ks:?}");
    }

    proptest! {
        #[test]
        fn pvalue_bounded_and_monotone(
            bucket in prop::collection::vec(0.0f64..10.0, 1..60),
            mut queries in prop::collection::vec(-1.0f64..11.0, 2..20),
        ) {
            let cal = bucket.iter().enumerate().map(|(i, &v)| sentence(i, 15, v));
            let t = build_null_table(cal, cfg(1)).unwrap();
            let m = bucket.len() as f64;
            queries.sort_unstable_by(f64::total_cmp);
            let ps: Vec<f64> = queries.iter().map(|&q| t.p_value(&score(15, q)).unwrap().unwrap()).collect();
            for p in &ps {
                prop_assert!(*p >= 1.0 / (m + 1.0) && *p <= 1.0);
            }
            prop_assert!(ps.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}

//! End-to-end detection: score every sentence, combine the P-values with
//! Higher Criticism, compare against a threshold and, on rejection, report
//! the HC threshold set as the suspected edits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibration::{score_document, NullTable, PValueVector};
use crate::error::{Error, Result};
use crate::multiple_testing::{
    hc_with, simulate_null_hc, upper_quantile, CriticalValueTable, HcConfig, HcResult,
};
use crate::provider::{fetch_logprobs, LogprobProvider};
use crate::text_ingest::Document;

/// Characters of sentence text kept in reports.
pub const PREVIEW_CHARS: usize = 60;
/// Fewest null documents accepted for threshold calibration.
pub const MIN_NULL_DOCS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Edited,
    NotEdited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Table,
    User,
    NullDocs,
}

/// Ways to obtain the HC rejection threshold. When several are present the
/// explicit value wins, then null-document calibration, then table lookup.
#[derive(Debug, Clone, Default)]
pub struct ThresholdSpec {
    pub user: Option<f64>,
    pub null_docs: Option<(Vec<Document>, f64)>,
    pub table: Option<(CriticalValueTable, f64)>,
}

impl ThresholdSpec {
    pub fn user(value: f64) -> Self {
        ThresholdSpec {
            user: Some(value),
            ..Default::default()
        }
    }

    pub fn table(table: CriticalValueTable, alpha: f64) -> Self {
        ThresholdSpec {
            table: Some((table, alpha)),
            ..Default::default()
        }
    }

    pub fn null_docs(docs: Vec<Document>, alpha: f64) -> Self {
        ThresholdSpec {
            null_docs: Some((docs, alpha)),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceDiagnostics {
    pub sent_index: usize,
    pub text_preview: String,
    pub n_tokens: usize,
    pub lppt: f64,
    /// `None` for sentences excluded as too short.
    pub pvalue: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suspect {
    pub sent_index: usize,
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub doc_id: String,
    pub model_id: String,
    pub n_tested: usize,
    pub n_excluded: usize,
    pub per_sentence: Vec<SentenceDiagnostics>,
    /// HC result; `selected` holds sentence indices.
    pub hc: HcResult,
    pub threshold_used: f64,
    pub threshold_source: ThresholdSource,
    pub threshold_detail: String,
    pub verdict: Verdict,
    /// Suspected edits by ascending P-value; empty unless edited.
    pub suspected: Vec<Suspect>,
    pub hc_pvalue: Option<f64>,
    pub warnings: Vec<String>,
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Plain-text table of the suspected sentences and the verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}: {} (HC = {:.6}, threshold = {:.6} [{}]{})",
            self.doc_id,
            match self.verdict {
                Verdict::Edited => "EDITED",
                Verdict::NotEdited => "not edited",
            },
            self.hc.hc,
            self.threshold_used,
            self.threshold_detail,
            self.hc_pvalue
                .map(|p| format!(", HC P-value = {p:.6}"))
                .unwrap_or_default()
        );
        let _ = writeln!(
            out,
            "{} sentences tested, {} excluded as short",
            self.n_tested, self.n_excluded
        );
        if !self.suspected.is_empty() {
            let _ = writeln!(out, "\n{:>5}  {:<60}  {:>8}", "index", "suspected sentence", "P-value");
            for s in &self.suspected {
                let preview = self
                    .per_sentence
                    .iter()
                    .find(|d| d.sent_index == s.sent_index)
                    .map(|d| d.text_preview.as_str())
                    .unwrap_or("");
                let _ = writeln!(out, "{:>5}  {:<60}  {:>8.4}", s.sent_index, preview, s.pvalue);
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Outcome of the global HC test on one P-value vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// HC result with `selected` mapped to sentence indices.
    pub hc: HcResult,
    pub verdict: Verdict,
    pub suspected: Vec<Suspect>,
}

/// Runs HC on scored sentences and applies `threshold`.
pub fn decide(pv: &PValueVector, threshold: f64, cfg: HcConfig) -> Result<Decision> {
    if pv.entries.is_empty() {
        return Err(Error::NoTestableSentences);
    }
    let mut hc = hc_with(&pv.pvalues(), cfg)?;
    hc.selected = hc.selected.iter().map(|&k| pv.entries[k].sent_index).collect();
    let verdict = if hc.hc > threshold {
        Verdict::Edited
    } else {
        Verdict::NotEdited
    };
    let suspected = match verdict {
        Verdict::NotEdited => Vec::new(),
        Verdict::Edited => {
            let mut s: Vec<Suspect> = pv
                .entries
                .iter()
                .filter(|e| e.pvalue <= hc.p_threshold)
                .map(|e| Suspect {
                    sent_index: e.sent_index,
                    pvalue: e.pvalue,
                })
                .collect();
            s.sort_by(|a, b| a.pvalue.total_cmp(&b.pvalue).then(a.sent_index.cmp(&b.sent_index)));
            s
        }
    };
    Ok(Decision {
        hc,
        verdict,
        suspected,
    })
}

/// Threshold estimated from HC values of documents known to be fully generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDocsThreshold {
    pub threshold: f64,
    pub alpha: f64,
    /// Documents that produced an HC value.
    pub n_used: usize,
    pub hc_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Empirical `1 - alpha` quantile of HC over null documents.
pub fn calibrate_threshold_from_null_docs(
    null_docs: &[Document],
    provider: &dyn LogprobProvider,
    table: &NullTable,
    alpha: f64,
    cfg: HcConfig,
) -> Result<NullDocsThreshold> {
    if null_docs.len() < MIN_NULL_DOCS {
        return Err(Error::Insufficient {
            what: "null documents",
            required: MIN_NULL_DOCS,
            available: null_docs.len(),
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut warnings = Vec::new();
    let mut hc_values = Vec::with_capacity(null_docs.len());
    for doc in null_docs {
        let sentences = fetch_logprobs(doc, provider, table.policy)?;
        let pv = score_document(&sentences, table)?;
        match hc_with(&pv.pvalues(), cfg) {
            Ok(r) => hc_values.push(r.hc),
            Err(e @ (Error::NoTestableSentences | Error::EmptyRange { .. })) => {
                warnings.push(format!("null document {:?} skipped: {e}", doc.doc_id));
            }
            Err(e) => return Err(e),
        }
    }
    threshold_from_hc_values(hc_values, alpha, warnings)
}

/// Quantile step of [`calibrate_threshold_from_null_docs`], usable with HC
/// values computed elsewhere.
pub fn threshold_from_hc_values(
    hc_values: Vec<f64>,
    alpha: f64,
    mut warnings: Vec<String>,
) -> Result<NullDocsThreshold> {
    if hc_values.is_empty() {
        return Err(Error::Threshold("no null document produced an HC value".into()));
    }
    let n_used = hc_values.len();
    if (n_used as f64) < 1.0 / alpha {
        warnings.push(format!(
            "only {n_used} null documents for alpha = {alpha}; the quantile is the sample maximum"
        ));
    }
    let mut sorted = hc_values.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(NullDocsThreshold {
        threshold: upper_quantile(&sorted, alpha),
        alpha,
        n_used,
        hc_values,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    pub hc: HcConfig,
}

/// Scores `doc` with `provider`, tests it against `table` and `thr`.
pub fn analyze(
    doc: &Document,
    provider: &dyn LogprobProvider,
    table: &NullTable,
    thr: &ThresholdSpec,
    opts: AnalyzeOptions,
) -> Result<DetectionReport> {
    if let Some(model) = provider.model_id() {
        if model != table.model_id {
            return Err(Error::InvalidInput(format!(
                "provider model {model:?} does not match table model {:?}",
                table.model_id
            )));
        }
    }
    let sentences = fetch_logprobs(doc, provider, table.policy)?;
    let pv = score_document(&sentences, table)?;
    if pv.entries.is_empty() {
        return Err(Error::NoTestableSentences);
    }
    let n_tested = pv.entries.len();
    let mut warnings = Vec::new();

    let (threshold_used, threshold_source, threshold_detail) = if let Some(v) = thr.user {
        (v, ThresholdSource::User, "user-supplied".to_owned())
    } else if let Some((docs, alpha)) = &thr.null_docs {
        let cal = calibrate_threshold_from_null_docs(docs, provider, table, *alpha, opts.hc)?;
        warnings.extend(cal.warnings);
        (
            cal.threshold,
            ThresholdSource::NullDocs,
            format!("1-{alpha} quantile of HC over {} null documents", cal.n_used),
        )
    } else if let Some((crit, alpha)) = &thr.table {
        check_gamma0(crit, opts.hc)?;
        let hit = crit.lookup(n_tested, *alpha).ok_or_else(|| {
            Error::Threshold(format!("critical value table has no entry for alpha = {alpha}"))
        })?;
        if !hit.exact {
            warnings.push(format!(
                "no critical value for n = {n_tested}; used n = {}",
                hit.entry.n
            ));
        }
        (
            hit.entry.threshold,
            ThresholdSource::Table,
            format!("simulated n = {} alpha = {alpha}", hit.entry.n),
        )
    } else {
        return Err(Error::Threshold("no threshold, table or null documents given".into()));
    };

    let decision = decide(&pv, threshold_used, opts.hc)?;

    let hc_pvalue = match &thr.table {
        Some((crit, _)) if crit.gamma0 == opts.hc.gamma0 => {
            match crit.entries.iter().find(|e| e.n == n_tested) {
                Some(e) => Some(simulated_hc_pvalue(decision.hc.hc, e.n, e.n_sims, e.seed, opts.hc)?),
                None => None,
            }
        }
        _ => None,
    };

    let per_sentence = sentences
        .iter()
        .zip(&doc.sentences)
        .map(|(s, span)| {
            let entry = pv.entries.iter().find(|e| e.sent_index == s.sent_index);
            SentenceDiagnostics {
                sent_index: s.sent_index,
                text_preview: preview(&span.text),
                n_tokens: s.len(),
                lppt: crate::perplexity::lppt_of(&s.logprobs),
                pvalue: entry.map(|e| e.pvalue),
            }
        })
        .collect();

    Ok(DetectionReport {
        doc_id: doc.doc_id.clone(),
        model_id: table.model_id.clone(),
        n_tested,
        n_excluded: pv.excluded.len(),
        per_sentence,
        hc: decision.hc,
        threshold_used,
        threshold_source,
        threshold_detail,
        verdict: decision.verdict,
        suspected: decision.suspected,
        hc_pvalue,
        warnings,
    })
}

fn check_gamma0(crit: &CriticalValueTable, cfg: HcConfig) -> Result<()> {
    if (crit.gamma0 - cfg.gamma0).abs() > 1e-12 {
        return Err(Error::Threshold(format!(
            "critical values were simulated with gamma0 = {}, analysis uses {}",
            crit.gamma0, cfg.gamma0
        )));
    }
    Ok(())
}

/// Add-one fraction of simulated null HC values at or above `observed`,
/// regenerating the simulation recorded as `(n, n_sims, seed)`.
pub fn simulated_hc_pvalue(observed: f64, n: usize, n_sims: usize, seed: u64, cfg: HcConfig) -> Result<f64> {
    let sims = simulate_null_hc(n, n_sims, seed, cfg)?;
    let at_or_above = sims.iter().filter(|&&v| v >= observed).count();
    Ok((1 + at_or_above) as f64 / (n_sims + 1) as f64)
}

fn preview(text: &str) -> String {
    if text.chars().count() <= PREVIEW_CHARS {
        text.to_owned()
    } else {
        text.chars().take(PREVIEW_CHARS - 1).chain(['…']).collect()
    }
}

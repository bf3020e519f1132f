use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::surrogate::SurrogateModel;
use crate::error::{Error, Result};
use crate::perplexity::{lppt, LpptScore};
use crate::provider::{FileProvider, TokenizedSentence};
use crate::text_ingest::{segment, SegmentationConfig};

/// One line of a dataset file: a machine article and a human article on the
/// same topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub machine: String,
    pub human: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl DatasetRow {
    /// Title, or `row{line}` for untitled rows (1-based line number).
    pub fn key(&self, line: usize) -> String {
        self.title.clone().unwrap_or_else(|| format!("row{line}"))
    }
}

pub fn machine_doc_id(key: &str) -> String {
    format!("{key}/machine")
}

pub fn human_doc_id(key: &str) -> String {
    format!("{key}/human")
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                Error::InvalidInput(format!("{}: line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

/// Scored sentences available to the power harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub model_id: String,
    /// Machine articles, each in sentence order.
    pub articles: Vec<Vec<LpptScore>>,
    pub human: Vec<LpptScore>,
}

impl Dataset {
    pub fn from_sentences(
        id: impl Into<String>,
        articles: &[Vec<TokenizedSentence>],
        human: &[TokenizedSentence],
    ) -> Result<Self> {
        let mut model_id: Option<String> = None;
        let mut score = |s: &TokenizedSentence| -> Result<LpptScore> {
            s.validate()?;
            match &model_id {
                None => model_id = Some(s.model_id.clone()),
                Some(m) if *m != s.model_id => {
                    return Err(Error::InvalidInput(format!(
                        "dataset mixes model ids {m:?} and {:?}",
                        s.model_id
                    )))
                }
                Some(_) => {}
            }
            lppt(s)
        };
        let articles = articles
            .iter()
            .map(|a| a.iter().map(&mut score).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let human = human.iter().map(&mut score).collect::<Result<Vec<_>>>()?;
        let model_id = model_id
            .ok_or(Error::Insufficient {
                what: "dataset sentences",
                required: 1,
                available: 0,
            })?;
        Ok(Dataset {
            id: id.into(),
            model_id,
            articles,
            human,
        })
    }

    /// Segments each row and looks up its logprob records, keyed by
    /// `{title}/machine` and `{title}/human`.
    pub fn from_rows(
        id: impl Into<String>,
        rows: &[DatasetRow],
        records: &FileProvider,
        rules: &SegmentationConfig,
    ) -> Result<Self> {
        let lookup = |doc_id: String, text: &str| -> Result<Vec<TokenizedSentence>> {
            segment(&doc_id, text, rules)
                .sentences
                .iter()
                .map(|span| {
                    records.get(&doc_id, span.index).cloned().ok_or_else(|| Error::MissingRecord {
                        doc_id: doc_id.clone(),
                        sent_index: span.index,
                    })
                })
                .collect()
        };
        let mut articles = Vec::with_capacity(rows.len());
        let mut human = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let key = row.key(i + 1);
            articles.push(lookup(machine_doc_id(&key), &row.machine)?);
            human.extend(lookup(human_doc_id(&key), &row.human)?);
        }
        Dataset::from_sentences(id, &articles, &human)
    }

    pub fn machine_len(&self) -> usize {
        self.articles.iter().map(Vec::len).sum()
    }
}

/// Rows plus logprob records for a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCorpus {
    pub rows: Vec<DatasetRow>,
    pub records: Vec<TokenizedSentence>,
}

impl SurrogateModel {
    /// `n_articles` topics, each with a machine and a human article of
    /// `sentences_per_article` sentences.
    pub fn corpus<R: Rng + ?Sized>(
        &self,
        n_articles: usize,
        sentences_per_article: usize,
        rng: &mut R,
    ) -> SurrogateCorpus {
        let mut rows = Vec::with_capacity(n_articles);
        let mut records = Vec::with_capacity(2 * n_articles * sentences_per_article);
        for a in 0..n_articles {
            let title = format!("topic-{a:04}");
            let m = self.document(&machine_doc_id(&title), sentences_per_article, 0.0, rng);
            let h = self.document(&human_doc_id(&title), sentences_per_article, 1.0, rng);
            records.extend(m.records);
            records.extend(h.records);
            rows.push(DatasetRow {
                machine: m.text,
                human: h.text,
                title: Some(title),
            });
        }
        SurrogateCorpus { rows, records }
    }

    pub fn dataset<R: Rng + ?Sized>(
        &self,
        id: &str,
        n_articles: usize,
        sentences_per_article: usize,
        rng: &mut R,
    ) -> Result<Dataset> {
        let corpus = self.corpus(n_articles, sentences_per_article, rng);
        let provider = FileProvider::from_records(corpus.records)?;
        Dataset::from_rows(id, &corpus.rows, &provider, &SegmentationConfig::default())
    }
}

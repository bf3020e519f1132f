//! The JSON Lines logprob format: one [`TokenizedSentence`] per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LogprobProvider, SentenceRequest, TokenizedSentence};
use crate::error::{Error, Result};

/// Read-only provider backed by one or more logprob files, keyed by
/// `(doc_id, sent_index)`.
#[derive(Debug, Default)]
pub struct FileProvider {
    records: HashMap<(String, usize), TokenizedSentence>,
    model_id: Option<String>,
}

impl FileProvider {
    pub fn open<I, P>(paths: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<Path>,
    {
        let mut provider = FileProvider::default();
        for path in paths {
            for record in read_records(path)? {
                provider.insert(record)?;
            }
        }
        Ok(provider)
    }

    pub fn from_records(records: impl IntoIterator<Item = TokenizedSentence>) -> Result<Self> {
        let mut provider = FileProvider::default();
        for record in records {
            record.validate()?;
            provider.insert(record)?;
        }
        Ok(provider)
    }

    fn insert(&mut self, record: TokenizedSentence) -> Result<()> {
        match &self.model_id {
            None => self.model_id = Some(record.model_id.clone()),
            Some(m) if *m != record.model_id => {
                return Err(Error::DataIntegrity(format!(
                    "logprob records from two models: {m:?} and {:?}",
                    record.model_id
                )))
            }
            Some(_) => {}
        }
        let key = (record.doc_id.clone(), record.sent_index);
        if self.records.insert(key, record).is_some() {
            return Err(Error::DataIntegrity("duplicate (doc_id, sent_index) record".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, doc_id: &str, sent_index: usize) -> Option<&TokenizedSentence> {
        self.records.get(&(doc_id.to_owned(), sent_index))
    }
}

impl LogprobProvider for FileProvider {
    fn model_id(&self) -> Option<&str> {
        self.model_id.as_deref()
    }

    fn fetch(&self, request: &SentenceRequest<'_>) -> Result<TokenizedSentence> {
        self.get(request.doc_id, request.sent_index)
            .cloned()
            .ok_or_else(|| Error::MissingRecord {
                doc_id: request.doc_id.to_owned(),
                sent_index: request.sent_index,
            })
    }
}

/// Reads every record of a logprob file, failing on the first bad line.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TokenizedSentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TokenizedSentence = serde_json::from_str(&line).map_err(|e| {
            Error::Protocol(format!("{}: line {}: {e}", path.display(), k + 1))
        })?;
        record.validate().map_err(|e| match e {
            Error::DataIntegrity(m) => {
                Error::DataIntegrity(format!("{}: line {}: {m}", path.display(), k + 1))
            }
            Error::Protocol(m) => Error::Protocol(format!("{}: line {}: {m}", path.display(), k + 1)),
            other => other,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a TokenizedSentence>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSummary {
    /// Lines that parsed as records (valid or not).
    pub records: usize,
    pub token_total: usize,
    pub violations: Vec<Violation>,
}

impl ValidationSummary {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Streams a logprob file line by line and reports every invariant violation
/// instead of stopping at the first one.
pub fn validate_logprob_file(path: impl AsRef<Path>) -> Result<ValidationSummary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut summary = ValidationSummary::default();
    let mut model: Option<String> = None;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line_no = k + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                summary.violations.push(Violation {
                    line: line_no,
                    message: format!("unreadable line at line {line_no}: {e}"),
                });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let record: TokenizedSentence = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                summary.violations.push(Violation {
                    line: line_no,
                    message: format!("malformed JSON at line {line_no}: {e}"),
                });
                continue;
            }
        };
        summary.records += 1;
        summary.token_total += record.tokens.len();
        let mut flag = |message: String| summary.violations.push(Violation { line: line_no, message });

        if record.tokens.len() != record.logprobs.len() {
            flag(format!(
                "token/logprob length mismatch ({} vs {}) at line {line_no}",
                record.tokens.len(),
                record.logprobs.len()
            ));
        }
        if record.logprobs.is_empty() {
            flag(format!("empty token list at line {line_no}"));
        }
        if record.logprobs.iter().any(|lp| !lp.is_finite()) {
            flag(format!("non-finite logprob at line {line_no}"));
        }
        if record.logprobs.iter().any(|lp| *lp > 0.0) {
            flag(format!("logprob > 0 at line {line_no}"));
        }
        if record.model_id.is_empty() {
            flag(format!("empty model_id at line {line_no}"));
        }
        match &model {
            None => model = Some(record.model_id.clone()),
            Some(m) if *m != record.model_id => flag(format!(
                "model_id {:?} differs from {m:?} at line {line_no}",
                record.model_id
            )),
            Some(_) => {}
        }
    }
    Ok(summary)
}

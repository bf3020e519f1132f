//! Per-token log-probabilities behind one provider contract.
//!
//! Tokenization belongs to the provider: the token count of a
//! [`TokenizedSentence`] is whatever the scoring model's tokenizer produced,
//! and every stored value is a natural log.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_ingest::Document;

mod file;
mod http;

pub use file::{read_records, validate_logprob_file, write_records, FileProvider, ValidationSummary, Violation};
pub use http::HttpProvider;

/// Environment variable holding an optional bearer token for HTTP providers.
pub const TOKEN_ENV: &str = "HC_EDIT_PROVIDER_TOKEN";

/// One sentence as scored by the language model. Serializes to exactly one
/// line of the JSON Lines logprob format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub doc_id: String,
    pub sent_index: usize,
    pub tokens: Vec<String>,
    /// Natural-log probability of each token given its prefix (and context).
    pub logprobs: Vec<f64>,
    /// Index of the conditioning sentence, when scored with context.
    pub context_id: Option<String>,
    pub model_id: String,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    /// Checks the record invariants: equal, non-zero lengths and finite
    /// logprobs that are at most zero.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.logprobs.len() {
            return Err(Error::Protocol(format!(
                "{}#{}: {} tokens but {} logprobs",
                self.doc_id,
                self.sent_index,
                self.tokens.len(),
                self.logprobs.len()
            )));
        }
        if self.logprobs.is_empty() {
            return Err(Error::Protocol(format!(
                "{}#{}: empty token list",
                self.doc_id, self.sent_index
            )));
        }
        if let Some((pos, lp)) = self
            .logprobs
            .iter()
            .enumerate()
            .find(|(_, lp)| !lp.is_finite() || **lp > 0.0)
        {
            return Err(Error::DataIntegrity(format!(
                "{}#{}: logprob {} at token {} is not a finite value <= 0",
                self.doc_id, self.sent_index, lp, pos
            )));
        }
        Ok(())
    }
}

/// How the provider conditions the first token of each sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    /// Only the provider's own begin-of-sequence convention.
    #[default]
    None,
    /// Sentence `i` is conditioned on the text of sentence `i - 1`.
    PrecedingSentence,
}

impl ContextPolicy {
    /// The `context_id` that sentence `sent_index` carries under this policy.
    pub fn context_id(self, sent_index: usize) -> Option<String> {
        match self {
            ContextPolicy::PrecedingSentence if sent_index > 0 => {
                Some((sent_index - 1).to_string())
            }
            _ => None,
        }
    }
}

impl fmt::Display for ContextPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextPolicy::None => "none",
            ContextPolicy::PrecedingSentence => "preceding_sentence",
        })
    }
}

impl FromStr for ContextPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ContextPolicy::None),
            "prev" | "preceding" | "preceding_sentence" => Ok(ContextPolicy::PrecedingSentence),
            other => Err(Error::InvalidInput(format!("unknown context policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    File,
    Http,
}

/// Where log-probabilities come from. Parsed from `file:PATH` or `http:URL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub kind: ProviderKind,
    /// Expected model id; empty means "accept whatever the provider reports".
    pub model_id: String,
    pub endpoint_or_path: String,
}

impl ProviderDescriptor {
    pub fn file(path: impl Into<String>) -> Self {
        ProviderDescriptor {
            kind: ProviderKind::File,
            model_id: String::new(),
            endpoint_or_path: path.into(),
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        ProviderDescriptor {
            kind: ProviderKind::Http,
            model_id: String::new(),
            endpoint_or_path: endpoint.into(),
        }
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Opens the provider this descriptor names.
    pub fn connect(&self) -> Result<Box<dyn LogprobProvider>> {
        let expected = (!self.model_id.is_empty()).then(|| self.model_id.clone());
        Ok(match self.kind {
            ProviderKind::File => {
                let provider = FileProvider::open([&self.endpoint_or_path])?;
                if let (Some(want), Some(have)) = (&expected, provider.model_id()) {
                    if want != have {
                        return Err(Error::Protocol(format!(
                            "file provider holds model {have:?}, expected {want:?}"
                        )));
                    }
                }
                Box::new(provider)
            }
            ProviderKind::Http => {
                Box::new(HttpProvider::new(&self.endpoint_or_path).with_expected_model(expected))
            }
        })
    }
}

impl FromStr for ProviderDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(ProviderDescriptor::file(path));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(ProviderDescriptor::http(s));
        }
        if let Some(url) = s.strip_prefix("http:") {
            return Ok(ProviderDescriptor::http(url));
        }
        Err(Error::InvalidInput(format!(
            "provider must be file:PATH or http:URL, got {s:?}"
        )))
    }
}

/// A request for one sentence's log-probabilities.
#[derive(Debug, Clone)]
pub struct SentenceRequest<'a> {
    pub doc_id: &'a str,
    pub sent_index: usize,
    pub text: &'a str,
    pub context: Option<&'a str>,
    pub context_id: Option<String>,
}

/// Source of per-token log-probabilities. Implementations must tolerate
/// concurrent fetches of distinct sentences.
pub trait LogprobProvider: Send + Sync {
    /// The model id, when known before any fetch.
    fn model_id(&self) -> Option<&str>;

    fn fetch(&self, request: &SentenceRequest<'_>) -> Result<TokenizedSentence>;
}

/// Fetches one [`TokenizedSentence`] per span of `doc`, in span order.
///
/// Sentences are fetched in parallel; assembly is ordered and all-or-nothing.
pub fn fetch_logprobs(
    doc: &Document,
    provider: &dyn LogprobProvider,
    context_policy: ContextPolicy,
) -> Result<Vec<TokenizedSentence>> {
    if doc.is_empty() {
        return Err(Error::InvalidInput(format!(
            "document {:?} has no sentences",
            doc.doc_id
        )));
    }
    let scored: Vec<TokenizedSentence> = doc
        .sentences
        .par_iter()
        .map(|span| {
            let context = match context_policy {
                ContextPolicy::PrecedingSentence if span.index > 0 => {
                    Some(doc.sentences[span.index - 1].text.as_str())
                }
                ContextPolicy::PrecedingSentence => Some(""),
                ContextPolicy::None => None,
            };
            let request = SentenceRequest {
                doc_id: &doc.doc_id,
                sent_index: span.index,
                text: &span.text,
                context,
                context_id: context_policy.context_id(span.index),
            };
            let sentence = provider.fetch(&request)?;
            check_response(&request, &sentence)?;
            Ok(sentence)
        })
        .collect::<Result<_>>()?;

    if let Some(first) = scored.first() {
        if let Some(other) = scored.iter().find(|s| s.model_id != first.model_id) {
            return Err(Error::Protocol(format!(
                "mixed model ids in one document: {:?} and {:?}",
                first.model_id, other.model_id
            )));
        }
    }
    Ok(scored)
}

fn check_response(request: &SentenceRequest<'_>, sentence: &TokenizedSentence) -> Result<()> {
    sentence.validate()?;
    if sentence.doc_id != request.doc_id || sentence.sent_index != request.sent_index {
        return Err(Error::Protocol(format!(
            "asked for {}#{}, got {}#{}",
            request.doc_id, request.sent_index, sentence.doc_id, sentence.sent_index
        )));
    }
    if sentence.context_id != request.context_id {
        return Err(Error::Protocol(format!(
            "{}#{}: record has context_id {:?}, policy expects {:?}",
            request.doc_id, request.sent_index, sentence.context_id, request.context_id
        )));
    }
    Ok(())
}

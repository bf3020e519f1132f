//! A stand-in language model for tests and demos.
//!
//! Sentence LPPT follows `base + length_slope / L + spread * Z` for machine
//! text; human sentences add `spread * human_shift`. Per-token logprobs are
//! jittered around the sentence mean so that their average is the drawn LPPT.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::provider::TokenizedSentence;

const WORDS: &[&str] = &[
    "river", "stone", "market", "winter", "signal", "garden", "engine", "letter", "harbor",
    "forest", "window", "silver", "museum", "bridge", "season", "planet", "doctor", "canvas",
    "island", "mirror", "school", "valley", "candle", "travel", "number", "summer", "circle",
    "animal", "basket", "pocket", "theory", "record", "meadow", "anchor", "rocket", "ladder",
    "station", "village", "machine", "orchard",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateModel {
    pub model_id: String,
    /// Token counts of ordinary sentences, inclusive.
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a sentence is short (3 to 10 tokens).
    pub short_fraction: f64,
    pub base: f64,
    pub length_slope: f64,
    pub spread: f64,
    /// Location shift of human sentences, in units of `spread`.
    pub human_shift: f64,
}

impl Default for SurrogateModel {
    fn default() -> Self {
        SurrogateModel {
            model_id: "surrogate-v1".into(),
            min_tokens: 12,
            max_tokens: 36,
            short_fraction: 0.1,
            base: 2.4,
            length_slope: 8.0,
            spread: 0.45,
            human_shift: 1.5,
        }
    }
}

/// Sentence text plus the logprob record a provider would return for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSentence {
    pub text: String,
    pub record: TokenizedSentence,
}

/// A generated document whose text segments back into its records.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDocument {
    pub text: String,
    pub records: Vec<TokenizedSentence>,
    /// Indices of sentences drawn from the human law.
    pub truth: Vec<usize>,
}

impl SurrogateModel {
    pub fn sample_len<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.short_fraction {
            rng.random_range(3..=10)
        } else {
            rng.random_range(self.min_tokens..=self.max_tokens.max(self.min_tokens))
        }
    }

    pub fn mean_lppt(&self, n_tokens: usize) -> f64 {
        self.base + self.length_slope / n_tokens as f64
    }

    pub fn sentence<R: Rng + ?Sized>(
        &self,
        doc_id: &str,
        sent_index: usize,
        human: bool,
        rng: &mut R,
    ) -> SurrogateSentence {
        let n = self.sample_len(rng);
        let z: f64 = StandardNormal.sample(rng);
        let shift = if human { self.human_shift } else { 0.0 };
        let target = (self.mean_lppt(n) + self.spread * (z + shift)).max(0.05);

        let jitter: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let centre = jitter.iter().sum::<f64>() / n as f64;
        let logprobs = jitter.iter().map(|u| -target * (1.0 + 0.6 * (u - centre))).collect();

        let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect();
        let mut text = words.join(" ");
        text[..1].make_ascii_uppercase();
        text.push('.');

        SurrogateSentence {
            text,
            record: TokenizedSentence {
                doc_id: doc_id.to_string(),
                sent_index,
                tokens: words.iter().map(|w| format!("\u{2581}{w}")).collect(),
                logprobs,
                context_id: None,
                model_id: self.model_id.clone(),
            },
        }
    }

    /// `n_sentences` sentences, each human with probability `edit_rate`.
    pub fn document<R: Rng + ?Sized>(
        &self,
        doc_id: &str,
        n_sentences: usize,
        edit_rate: f64,
        rng: &mut R,
    ) -> SurrogateDocument {
        let mut texts = Vec::with_capacity(n_sentences);
        let mut records = Vec::with_capacity(n_sentences);
        let mut truth = Vec::new();
        for i in 0..n_sentences {
            let human = edit_rate > 0.0 && rng.random::<f64>() < edit_rate;
            if human {
                truth.push(i);
            }
            let s = self.sentence(doc_id, i, human, rng);
            texts.push(s.text);
            records.push(s.record);
        }
        SurrogateDocument {
            text: texts.join(" "),
            records,
            truth,
        }
    }
}

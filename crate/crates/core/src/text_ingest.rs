//! Rule-based sentence segmentation with stable indices and character offsets.
//!
//! A sentence ends at terminal punctuation (`.`, `!`, `?`, possibly followed by
//! closing quotes or brackets) when the next character is whitespace or the end
//! of the text, unless the word carrying a single period is a known
//! abbreviation. Every line break also ends a sentence, so blank-line
//! paragraphs and unpunctuated header lines become their own spans.
//!
//! Offsets count Unicode scalar values (`char`s), not bytes.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Rules for [`segment`]. Loaded from JSON with keys `abbreviations` and
/// `min_chars`; a missing key takes the default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Words (with their trailing period) that never end a sentence.
    pub abbreviations: BTreeSet<String>,
    /// Spans with fewer non-whitespace characters than this are dropped.
    pub min_chars: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            abbreviations: parse_abbreviation_list(DEFAULT_ABBREVIATIONS),
            min_chars: 1,
        }
    }
}

impl SegmentationConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SegmentationConfig = serde_json::from_str(&raw)?;
        Ok(cfg)
    }

    /// Config with the given abbreviations instead of the bundled list.
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SegmentationConfig {
            abbreviations: abbreviations.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }
}

/// Parses the plain-text abbreviation format: one entry per line, `#` comments.
pub fn parse_abbreviation_list(raw: &str) -> BTreeSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    /// 0-based position in the document.
    pub index: usize,
    /// Character offset of the first character.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Reads and segments a UTF-8 text file; the doc id is the file stem.
    pub fn from_file(path: impl AsRef<Path>, rules: &SegmentationConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(segment(&doc_id, &text, rules))
    }
}

pub const SPANS_FORMAT: u32 = 1;

/// Segmentation handed to an external scorer so that it scores exactly the
/// spans this crate will look up. Offsets count Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanFile {
    pub format: u32,
    pub doc_id: String,
    pub sentences: Vec<SentenceSpan>,
}

impl SpanFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SpanFile = serde_json::from_str(&raw)?;
        if file.format != SPANS_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported span file format {}",
                path.display(),
                file.format
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

impl From<&Document> for SpanFile {
    fn from(doc: &Document) -> Self {
        SpanFile {
            format: SPANS_FORMAT,
            doc_id: doc.doc_id.clone(),
            sentences: doc.sentences.clone(),
        }
    }
}

const TERMINALS: [char; 3] = ['.', '!', '?'];

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '{' | '\u{201C}' | '\u{2018}' | '\u{00AB}')
}

/// Splits `text` into sentences.
pub fn segment(doc_id: &str, text: &str, rules: &SegmentationConfig) -> Document {
    let abbreviations: HashSet<String> =
        rules.abbreviations.iter().map(|a| a.to_lowercase()).collect();
    let chars: Vec<char> = text.chars().collect();
    let mut bounds: Vec<(usize, usize)> = Vec::new();

    let mut start: Option<usize> = None;
    let mut last_non_ws = 0usize;
    let mut word_start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' || c == '\r' {
            if let Some(s) = start.take() {
                bounds.push((s, last_non_ws + 1));
            }
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if i == 0 || chars[i - 1].is_whitespace() {
            word_start = i;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_non_ws = i;

        if TERMINALS.contains(&c) {
            let mut j = i + 1;
            while j < chars.len() && (TERMINALS.contains(&chars[j]) || is_closer(chars[j])) {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].is_whitespace();
            let single_period = c == '.' && j == i + 1;
            if at_break && !(single_period && is_abbreviation(&chars[word_start..=i], &abbreviations))
            {
                if let Some(s) = start.take() {
                    bounds.push((s, j));
                }
            }
            last_non_ws = j - 1;
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        bounds.push((s, last_non_ws + 1));
    }

    let sentences = bounds
        .into_iter()
        .filter(|&(s, e)| {
            chars[s..e].iter().filter(|c| !c.is_whitespace()).count() >= rules.min_chars
        })
        .enumerate()
        .map(|(index, (s, e))| SentenceSpan {
            index,
            start: s,
            end: e,
            text: chars[s..e].iter().collect(),
        })
        .collect();

    Document {
        doc_id: doc_id.to_owned(),
        text: text.to_owned(),
        sentences,
    }
}

fn is_abbreviation(word: &[char], abbreviations: &HashSet<String>) -> bool {
    let trimmed: String = word
        .iter()
        .skip_while(|c| is_opener(**c))
        .collect::<String>()
        .to_lowercase();
    abbreviations.contains(&trimmed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spans(text: &str, rules: &SegmentationConfig) -> Vec<(usize, usize)> {
        segment("t", text, rules)
            .sentences
            .iter()
            .map(|s| (s.start, s.end))
            .collect()
    }

    #[test]
    fn span_file_round_trip() {
        let doc = segment("d", "Über alles. Zwei!", &SegmentationConfig::default());
        let file = SpanFile::from(&doc);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.spans.json");
        std::fs::write(&path, file.to_json().unwrap()).unwrap();
        let back = SpanFile::read(&path).unwrap();
        assert_eq!(back.sentences, doc.sentences);
        assert_eq!((back.sentences[1].start, back.sentences[1].end), (12, 17));
        std::fs::write(&path, r#"{"format":9,"doc_id":"d","sentences":[]}"#).unwrap();
        assert!(SpanFile::read(&path).is_err());
    }

    #[test]
    fn two_short_sentences() {
        let rules = SegmentationConfig::default();
        assert_eq!(spans("A dog. A cat.", &rules), vec![(0, 6), (7, 13)]);
    }

    #[test]
    fn empty_input_has_no_sentences() {
        let doc = segment("e", "", &SegmentationConfig::default());
        assert!(doc.is_empty());
        assert!(segment("e", " \n\n\t ", &SegmentationConfig::default()).is_empty());
    }

    #[test]
    fn abbreviation_does_not_end_sentence() {
        let rules = SegmentationConfig::with_abbreviations(["Dr."]);
        let doc = segment("d", "Dr. Smith ran.", &rules);
        assert_eq!(doc.len(), 1);
        assert_eq!(doc.sentences[0].text, "Dr. Smith ran.");

        let plain = SegmentationConfig::with_abbreviations(Vec::<String>::new());
        assert_eq!(segment("d", "Dr. Smith ran.", &plain).len(), 2);
    }

    #[test]
    fn abbreviation_match_ignores_case_and_openers() {
        let rules = SegmentationConfig::default();
        assert_eq!(segment("d", "See (e.g. the list) here. Next one.", &rules).len(), 2);
        assert_eq!(segment("d", "Ask DR. Who now.", &rules).len(), 1);
    }

    #[test]
    fn paragraphs_and_headers_are_their_own_spans() {
        let text = "History\n\nThe breed is old. It herds cattle\n\nToday it is a pet!";
        let doc = segment("d", text, &SegmentationConfig::default());
        let texts: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            ["History", "The breed is old.", "It herds cattle", "Today it is a pet!"]
        );
    }

    #[test]
    fn closing_quotes_stay_with_the_sentence() {
        let doc = segment("d", "He said \"stop.\" Then he left?! Ok", &SegmentationConfig::default());
        let texts: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["He said \"stop.\"", "Then he left?!", "Ok"]);
    }

    #[test]
    fn decimals_do_not_split() {
        assert_eq!(segment("d", "It weighs 3.5 kg. Yes.", &SegmentationConfig::default()).len(), 2);
    }

    #[test]
    fn offsets_are_in_chars() {
        let doc = segment("d", "Ça va. Très bien.", &SegmentationConfig::default());
        assert_eq!(doc.sentences[1].start, 7);
        assert_eq!(doc.sentences[1].end, 17);
        assert_eq!(doc.sentences[1].text, "Très bien.");
    }

    #[test]
    fn min_chars_drops_tiny_spans() {
        let rules = SegmentationConfig {
            min_chars: 3,
            ..Default::default()
        };
        let doc = segment("d", "A.\nThe dog ran.", &rules);
        assert_eq!(doc.len(), 1);
        assert_eq!(doc.sentences[0].index, 0);
    }

    #[test]
    fn config_json_defaults_and_override() {
        let cfg: SegmentationConfig = serde_json::from_str(r#"{"min_chars": 2}"#).unwrap();
        assert!(cfg.abbreviations.contains("Dr."));
        let cfg: SegmentationConfig =
            serde_json::from_str(r#"{"abbreviations": ["Fig."]}"#).unwrap();
        assert_eq!(cfg.abbreviations.len(), 1);
        assert_eq!(cfg.min_chars, 1);
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-zA-Z]{1,8}"
    }

    fn sentence() -> impl Strategy<Value = String> {
        (prop::collection::vec(word(), 1..8), prop::sample::select(vec![".", "!", "?", "?!"]))
            .prop_map(|(words, end)| format!("{}{}", words.join(" "), end))
    }

    fn document_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            (sentence(), prop::sample::select(vec![" ", "  ", "\n", "\n\n", " \t"])),
            0..12,
        )
        .prop_map(|parts| parts.into_iter().map(|(s, sep)| s + sep).collect())
    }

    fn no_abbreviations() -> SegmentationConfig {
        SegmentationConfig::with_abbreviations(Vec::<String>::new())
    }

    proptest! {
        #[test]
        fn spans_are_ordered_and_match_text(text in document_text()) {
            let doc = segment("p", &text, &SegmentationConfig::default());
            let chars: Vec<char> = text.chars().collect();
            let mut prev_end = 0;
            for (k, s) in doc.sentences.iter().enumerate() {
                prop_assert_eq!(s.index, k);
                prop_assert!(s.start < s.end && s.end <= chars.len());
                prop_assert!(s.start >= prev_end);
                prop_assert_eq!(&s.text, &chars[s.start..s.end].iter().collect::<String>());
                prev_end = s.end;
            }
        }

        #[test]
        fn every_visible_char_is_covered_once(text in document_text()) {
            let doc = segment("p", &text, &SegmentationConfig::default());
            for (pos, c) in text.chars().enumerate() {
                let hits = doc.sentences.iter().filter(|s| s.start <= pos && pos < s.end).count();
                if c.is_whitespace() {
                    prop_assert!(hits <= 1);
                } else {
                    prop_assert_eq!(hits, 1, "char {:?} at {}", c, pos);
                }
            }
        }

        #[test]
        fn resegmenting_joined_spans_is_stable(text in document_text()) {
            let rules = no_abbreviations();
            let doc = segment("p", &text, &rules);
            let joined = doc.sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
            prop_assert_eq!(segment("p", &joined, &rules).len(), doc.len());
        }
    }
}

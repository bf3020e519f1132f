//! Detect sparse human edits in machine-generated text.
//!
//! Each sentence of a document is scored by its log-perplexity under the
//! generating model and turned into a P-value against unedited machine text
//! of the same length. The P-values are combined with the Higher Criticism
//! statistic, which is sensitive to a small fraction of moderately surprising
//! sentences. When the statistic exceeds its null threshold, the sentences
//! below the Higher Criticism P-value threshold are reported as likely edits.
//!
//! The entry point is [`pipeline::analyze`]. The guide in `book/` walks through
//! every step with runnable examples.

pub mod calibration;
pub mod error;
pub mod harness;
pub mod multiple_testing;
pub mod perplexity;
pub mod pipeline;
pub mod provider;
pub mod rng;
pub mod text_ingest;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/segmentation.md")]
    mod segmentation {}
    #[doc = include_str!("../../../book/src/logprobs.md")]
    mod logprobs {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/higher-criticism.md")]
    mod higher_criticism {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

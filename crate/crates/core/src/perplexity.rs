//! Normalized log-perplexity (LPPT): the mean negative natural-log
//! probability per token, in nats per token.
//!
//! Context conditioning changes only the logprobs a provider returns, so the
//! same arithmetic serves both the plain and the context-conditioned score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::TokenizedSentence;

/// Sentences longer than this are summed with compensation.
const COMPENSATED_ABOVE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpptScore {
    pub sent_index: usize,
    pub lppt: f64,
    pub n_tokens: usize,
}

pub fn lppt(sentence: &TokenizedSentence) -> Result<LpptScore> {
    if sentence.logprobs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}#{}: cannot score an empty token list",
            sentence.doc_id, sentence.sent_index
        )));
    }
    Ok(LpptScore {
        sent_index: sentence.sent_index,
        lppt: lppt_of(&sentence.logprobs),
        n_tokens: sentence.logprobs.len(),
    })
}

/// LPPT of a raw logprob slice. The slice must be non-empty.
pub fn lppt_of(logprobs: &[f64]) -> f64 {
    let sum = if logprobs.len() > COMPENSATED_ABOVE {
        neumaier_sum(logprobs)
    } else {
        logprobs.iter().sum()
    };
    // + 0.0 turns -0.0 into 0.0
    -sum / logprobs.len() as f64 + 0.0
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sent(logprobs: Vec<f64>) -> TokenizedSentence {
        TokenizedSentence {
            doc_id: "d".into(),
            sent_index: 3,
            tokens: vec!["t".into(); logprobs.len()],
            logprobs,
            context_id: None,
            model_id: "m".into(),
        }
    }

    #[test]
    fn uniform_halves() {
        let s = lppt(&sent(vec![0.5f64.ln(); 4])).unwrap();
        assert_abs_diff_eq!(s.lppt, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lppt, 0.6931, epsilon = 1e-4);
        assert_eq!((s.sent_index, s.n_tokens), (3, 4));
    }

    #[test]
    fn certain_token_scores_zero() {
        let s = lppt(&sent(vec![0.0])).unwrap();
        assert_eq!(s.lppt.to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn hand_mean() {
        assert_eq!(lppt(&sent(vec![-1.0, -3.0])).unwrap().lppt, 2.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(lppt(&sent(vec![])).is_err());
    }

    #[test]
    fn compensated_sum_on_long_sentences() {
        // 0.1 is inexact; a naive running sum of 10^5 copies drifts
        let xs = vec![-0.1; 100_000];
        assert_abs_diff_eq!(lppt_of(&xs), 0.1, epsilon = 1e-15);
    }

    fn logprobs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-20.0f64..=0.0, 1..1500)
    }

    proptest! {
        #[test]
        fn non_negative(xs in logprobs()) {
            prop_assert!(lppt_of(&xs) >= 0.0);
        }

        #[test]
        fn order_free(mut xs in logprobs()) {
            let before = lppt_of(&xs);
            xs.reverse();
            prop_assert!((lppt_of(&xs) - before).abs() <= 1e-12 * before.max(1.0));
        }

        #[test]
        fn mean_fixed_point(xs in prop::collection::vec(-20.0f64..=0.0, 1..900)) {
            let before = lppt_of(&xs);
            let mut ys = xs.clone();
            ys.push(-before);
            prop_assert!((lppt_of(&ys) - before).abs() <= 1e-12 * before.max(1.0));
        }
    }
}

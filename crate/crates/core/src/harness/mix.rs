use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// How to build one mixed document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// Expected fraction of inserted human sentences.
    pub epsilon: f64,
    pub target_len: usize,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(epsilon: f64, target_len: usize, seed: u64) -> Self {
        MixSpec {
            epsilon,
            target_len,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.target_len < 2 {
            return Err(Error::InvalidInput(format!(
                "target_len must be at least 2, got {}",
                self.target_len
            )));
        }
        Ok(())
    }

    /// Machine sentences kept before insertion.
    pub fn base_len(&self) -> usize {
        (self.target_len as f64 * (1.0 - self.epsilon)).round() as usize
    }
}

/// Where a sentence of a mixed document came from, as an index into the
/// pool it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "origin", content = "index")]
pub enum Source {
    Machine(usize),
    Human(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDocument<T> {
    pub sentences: Vec<T>,
    /// Ascending positions of the inserted human sentences.
    pub truth: Vec<usize>,
    pub sources: Vec<Source>,
}

impl<T> MixedDocument<T> {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn edited_fraction(&self) -> f64 {
        self.truth.len() as f64 / self.sentences.len() as f64
    }
}

/// Inserts `K ~ Binomial(target_len, epsilon)` human sentences into the first
/// `round(target_len * (1 - epsilon))` machine sentences.
///
/// Human sentences are drawn without replacement and each lands at an
/// independent uniform position of the document built so far. Items are
/// cloned, never modified.
pub fn mix<T: Clone>(machine: &[T], human: &[T], spec: &MixSpec) -> Result<MixedDocument<T>> {
    spec.check()?;
    let mut rng = substream(spec.seed, 0);
    let k = if spec.epsilon == 0.0 {
        0
    } else {
        let binomial = Binomial::new(spec.target_len as u64, spec.epsilon)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        binomial.sample(&mut rng) as usize
    };
    insert(machine, human, spec.base_len(), k, &mut rng)
}

/// Like [`mix`] with the insertion count fixed at `k`; the result has exactly
/// `target_len` sentences.
pub fn mix_with_count<T: Clone>(
    machine: &[T],
    human: &[T],
    target_len: usize,
    k: usize,
    seed: u64,
) -> Result<MixedDocument<T>> {
    if k > target_len {
        return Err(Error::InvalidInput(format!(
            "cannot insert {k} sentences into a document of {target_len}"
        )));
    }
    let mut rng = substream(seed, 0);
    insert(machine, human, target_len - k, k, &mut rng)
}

fn insert<T: Clone, R: Rng>(
    machine: &[T],
    human: &[T],
    base_len: usize,
    k: usize,
    rng: &mut R,
) -> Result<MixedDocument<T>> {
    if machine.len() < base_len {
        return Err(Error::Insufficient {
            what: "machine sentences",
            required: base_len,
            available: machine.len(),
        });
    }
    if human.len() < k {
        return Err(Error::Insufficient {
            what: "human sentences",
            required: k,
            available: human.len(),
        });
    }
    let mut sources: Vec<Source> = (0..base_len).map(Source::Machine).collect();
    for pick in index::sample(rng, human.len(), k) {
        let at = rng.random_range(0..=sources.len());
        sources.insert(at, Source::Human(pick));
    }
    let sentences = sources
        .iter()
        .map(|s| match *s {
            Source::Machine(i) => machine[i].clone(),
            Source::Human(i) => human[i].clone(),
        })
        .collect();
    let truth = sources
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Source::Human(_)))
        .map(|(i, _)| i)
        .collect();
    Ok(MixedDocument {
        sentences,
        truth,
        sources,
    })
}

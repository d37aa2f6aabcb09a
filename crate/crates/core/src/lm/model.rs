use std::sync::Arc;

use super::{ProbDist, TokenId, Vocabulary};
use crate::costmodel::ModelDescriptor;
use crate::error::{Error, Result};

/// A language model as seen by the decoders: a pure map from a token prefix
/// to the next-token distribution.
///
/// Implementations must not keep state between calls; equal prefixes give
/// equal distributions.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Distribution of the token following `prefix`. The prefix may be empty.
    fn score_next(&self, prefix: &[TokenId]) -> Result<ProbDist>;

    /// One distribution per position: element `m` (0-based) is conditioned
    /// on `sequence[..=m]`. The empty-prefix distribution is not included.
    fn score_all(&self, sequence: &[TokenId]) -> Result<Vec<ProbDist>> {
        if sequence.is_empty() {
            return Err(Error::InvalidInput(
                "score_all needs a non-empty sequence; use score_next(&[]) for the first position"
                    .into(),
            ));
        }
        self.vocab().check_all(sequence)?;
        (1..=sequence.len())
            .map(|m| self.score_next(&sequence[..m]))
            .collect()
    }

    /// Shape parameters used for cost accounting, when known.
    fn descriptor(&self) -> Option<&ModelDescriptor> {
        None
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn score_next(&self, prefix: &[TokenId]) -> Result<ProbDist> {
        (**self).score_next(prefix)
    }
    fn score_all(&self, sequence: &[TokenId]) -> Result<Vec<ProbDist>> {
        (**self).score_all(sequence)
    }
    fn descriptor(&self) -> Option<&ModelDescriptor> {
        (**self).descriptor()
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn score_next(&self, prefix: &[TokenId]) -> Result<ProbDist> {
        (**self).score_next(prefix)
    }
    fn score_all(&self, sequence: &[TokenId]) -> Result<Vec<ProbDist>> {
        (**self).score_all(sequence)
    }
    fn descriptor(&self) -> Option<&ModelDescriptor> {
        (**self).descriptor()
    }
}

/// Attaches a [`ModelDescriptor`] to any model.
#[derive(Debug, Clone)]
pub struct Described<M> {
    pub model: M,
    pub descriptor: ModelDescriptor,
}

impl<M: LanguageModel> LanguageModel for Described<M> {
    fn vocab(&self) -> &Vocabulary {
        self.model.vocab()
    }
    fn score_next(&self, prefix: &[TokenId]) -> Result<ProbDist> {
        self.model.score_next(prefix)
    }
    fn score_all(&self, sequence: &[TokenId]) -> Result<Vec<ProbDist>> {
        self.model.score_all(sequence)
    }
    fn descriptor(&self) -> Option<&ModelDescriptor> {
        Some(&self.descriptor)
    }
}

/// Distributions conditioned on `sequence[..m]` for every `m` in
/// `start..=sequence.len()`, as one logical model invocation.
pub fn score_range(
    model: &dyn LanguageModel,
    sequence: &[TokenId],
    start: usize,
) -> Result<Vec<ProbDist>> {
    if start > sequence.len() {
        return Err(Error::InvalidInput(format!(
            "score_range start {start} past sequence length {}",
            sequence.len()
        )));
    }
    let mut out = Vec::with_capacity(sequence.len() + 1 - start);
    if start == 0 {
        out.push(model.score_next(&[])?);
    }
    if !sequence.is_empty() {
        let all = model.score_all(sequence)?;
        out.extend(all.into_iter().skip(start.saturating_sub(1)));
    }
    Ok(out)
}

//! Vocabularies, distributions, the model interface and sampling.

mod dist;
mod model;
mod sampler;
mod vocab;

pub use dist::{ProbDist, NORMALIZATION_TOLERANCE, PROB_FLOOR};
pub use model::{score_range, Described, LanguageModel};
pub use sampler::{inverse_cdf, nucleus_support, DecodeRng, Sampler, SamplerKind};
pub use vocab::{format_sequences, read_sequences, TokenId, Vocabulary, EOS_SYMBOL};

/// Convenience for tests and examples: raw ids to [`TokenId`]s.
pub fn tokens(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().copied().map(TokenId).collect()
}

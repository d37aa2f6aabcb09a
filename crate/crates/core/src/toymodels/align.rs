use rayon::prelude::*;

use super::ngram::NgramLM;
use crate::engine::vanilla_decode;
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, Sampler, TokenId};

/// Prompts paired with the designated model's greedy continuations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationSet {
    pub pairs: Vec<(Vec<TokenId>, Vec<TokenId>)>,
}

impl CalibrationSet {
    /// `prompt ++ output` for every pair.
    pub fn full_sequences(&self) -> Vec<Vec<TokenId>> {
        self.pairs
            .iter()
            .map(|(p, o)| p.iter().chain(o).copied().collect())
            .collect()
    }
}

/// Decodes a continuation of every prompt with `model`, stopping at eos or
/// `max_len`. Outputs exclude the prompt and are ordered like `prompts`.
///
/// Prompt `i` is decoded with seed `sampler.seed + i`, so stochastic
/// samplers give independent but reproducible continuations.
pub fn generate_corpus(
    model: &dyn LanguageModel,
    prompts: &[Vec<TokenId>],
    sampler: &Sampler,
    max_len: usize,
) -> Result<Vec<Vec<TokenId>>> {
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, prompt)| {
            let s = sampler.with_seed(sampler.seed.wrapping_add(i as u64));
            vanilla_decode(model, prompt, &s, max_len).map(|r| r.sequence)
        })
        .collect()
}

/// A small model refit on the large model's greedy outputs.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub model: NgramLM,
    pub calibration: CalibrationSet,
}

/// Builds a calibration set from `large`'s greedy continuations of
/// `prompts` and fits an n-gram to it. Only output tokens are counted as
/// targets; their contexts include the prompt.
pub fn align_small(
    large: &dyn LanguageModel,
    prompts: &[Vec<TokenId>],
    order: usize,
    smoothing: f64,
    max_len: usize,
) -> Result<Alignment> {
    if prompts.is_empty() {
        return Err(Error::InvalidInput(
            "alignment needs at least one prompt".into(),
        ));
    }
    let outputs = generate_corpus(large, prompts, &Sampler::greedy(), max_len)?;
    let calibration = CalibrationSet {
        pairs: prompts.iter().cloned().zip(outputs).collect(),
    };
    let mut model = NgramLM::empty(large.vocab().clone(), order, smoothing)?;
    for (prompt, output) in &calibration.pairs {
        let full: Vec<TokenId> = prompt.iter().chain(output).copied().collect();
        for i in prompt.len()..full.len() {
            let ctx = model.context_of(&full[..i]);
            model.observe(ctx, full[i], 1)?;
        }
    }
    Ok(Alignment { model, calibration })
}

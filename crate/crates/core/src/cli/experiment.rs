use rayon::prelude::*;

use super::config::{load_model, ExperimentConfig, ModelSpec, Strategy};
use crate::costmodel::{tally_trace, ModelDescriptor, TallyOptions, TraceTally};
use crate::engine::{check_pair, vanilla_decode_as, DecodeResult, Provenance};
use crate::error::{Error, Result};
use crate::lm::{read_sequences, LanguageModel, Sampler, TokenId, Vocabulary};
use crate::metrics::{summarize, summarize_runs, RunSummary};
use crate::policies::PolicyConfig;

/// A loaded experiment: vocabulary, both models with their cost
/// descriptors, and the prompts.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub vocab: Vocabulary,
    pub small: Box<dyn LanguageModel>,
    pub large: Box<dyn LanguageModel>,
    pub small_desc: ModelDescriptor,
    pub large_desc: ModelDescriptor,
    pub prompts: Vec<Vec<TokenId>>,
}

/// One strategy run on one prompt, with its cost tally.
#[derive(Debug, Clone)]
pub struct PromptRun {
    pub result: DecodeResult,
    pub tally: TraceTally,
}

fn load_spec(spec: &ModelSpec, default_vocab: &Vocabulary) -> Result<Box<dyn LanguageModel>> {
    let vocab = match &spec.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => default_vocab.clone(),
    };
    load_model(spec.kind, &spec.path, vocab)
}

fn descriptor(spec: &ModelSpec, default: ModelDescriptor) -> Result<ModelDescriptor> {
    spec.descriptor
        .as_deref()
        .map_or(Ok(default), ModelDescriptor::load)
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::load(&config.vocab)?;
        let small = load_spec(&config.small_model, &vocab)?;
        let large = load_spec(&config.large_model, &vocab)?;
        check_pair(small.as_ref(), large.as_ref())?;
        let small_desc = descriptor(&config.small_model, ModelDescriptor::T5_SMALL)?;
        let large_desc = descriptor(&config.large_model, ModelDescriptor::T5_LARGE)?;
        let prompts = read_sequences(&config.prompts, small.vocab())?;
        if prompts.is_empty() {
            return Err(Error::Config(format!(
                "{}: no prompts (write `-` for an empty prompt)",
                config.prompts.display()
            )));
        }
        Ok(Self {
            vocab: small.vocab().clone(),
            config,
            small,
            large,
            small_desc,
            large_desc,
            prompts,
        })
    }

    /// Prompt `i` is decoded with seed `seed + i` under every strategy.
    pub fn sampler_for(&self, i: usize) -> Sampler {
        let s = self.config.sampler;
        s.with_seed(s.seed.wrapping_add(i as u64))
    }

    /// The large model's own decode of every prompt, used as the agreement
    /// reference.
    pub fn references(&self) -> Result<Vec<Vec<TokenId>>> {
        (0..self.prompts.len())
            .into_par_iter()
            .map(|i| {
                vanilla_decode_as(
                    self.large.as_ref(),
                    Provenance::Large,
                    &self.prompts[i],
                    &self.sampler_for(i),
                    self.config.max_len,
                )
                .map(|r| r.sequence)
            })
            .collect()
    }

    pub fn run(&self, strategy: Strategy, policy: &PolicyConfig) -> Result<Vec<PromptRun>> {
        (0..self.prompts.len())
            .into_par_iter()
            .map(|i| {
                let prompt = &self.prompts[i];
                let result = strategy.run(
                    self.small.as_ref(),
                    self.large.as_ref(),
                    policy,
                    &self.sampler_for(i),
                    prompt,
                    self.config.max_len,
                )?;
                let opts = TallyOptions {
                    prompt_len: prompt.len(),
                    ..Default::default()
                };
                let tally = tally_trace(&result.trace, &self.small_desc, &self.large_desc, &opts)?;
                Ok(PromptRun { result, tally })
            })
            .collect()
    }

    /// Summary of one prompt: agreement with its reference, perplexity
    /// under the large model.
    pub fn prompt_summary(&self, run: &PromptRun, reference: &[TokenId]) -> Result<RunSummary> {
        summarize(
            &run.result,
            Some(&run.tally),
            Some(reference),
            Some(self.large.as_ref()),
        )
    }

    pub fn group_summary(
        &self,
        runs: &[PromptRun],
        references: &[Vec<TokenId>],
    ) -> Result<RunSummary> {
        let results: Vec<DecodeResult> = runs.iter().map(|r| r.result.clone()).collect();
        let tallies: Vec<TraceTally> = runs.iter().map(|r| r.tally).collect();
        summarize_runs(
            &results,
            Some(&tallies),
            Some(references),
            Some(self.large.as_ref()),
        )
    }
}

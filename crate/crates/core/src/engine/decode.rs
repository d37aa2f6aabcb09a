use crate::error::{Error, Result};
use crate::lm::{score_range, LanguageModel, Sampler, TokenId, Vocabulary};
use crate::policies::{distance, find_rollback_position, should_fallback, PolicyConfig};

use super::state::{GenerationState, Recorder};
use super::trace::{DecodeResult, FallbackReason, Provenance};

pub(crate) fn check_pair(small: &dyn LanguageModel, large: &dyn LanguageModel) -> Result<()> {
    if small.vocab().is_compatible(large.vocab()) {
        Ok(())
    } else {
        Err(Error::VocabMismatch {
            small: small.vocab().describe(),
            large: large.vocab().describe(),
        })
    }
}

pub(crate) fn check_run(
    vocab: &Vocabulary,
    sampler: &Sampler,
    prompt: &[TokenId],
    max_len: usize,
) -> Result<()> {
    if max_len == 0 {
        return Err(Error::InvalidInput("max_len must be at least 1".into()));
    }
    sampler.validate()?;
    vocab.check_all(prompt)
}

/// Plain autoregressive decoding with the small model: one `score_next`
/// and one sample per emitted token.
pub fn vanilla_decode(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    sampler: &Sampler,
    max_len: usize,
) -> Result<DecodeResult> {
    vanilla_decode_as(model, Provenance::Small, prompt, sampler, max_len)
}

/// Plain autoregressive decoding, recording the model as playing `role`.
///
/// As the small model each token is a `SmallStep`; as the large model each
/// token is a one-position `LargeVerify` followed by a `LargeAppend`, so the
/// cost model charges it to the large descriptor.
pub fn vanilla_decode_as(
    model: &dyn LanguageModel,
    role: Provenance,
    prompt: &[TokenId],
    sampler: &Sampler,
    max_len: usize,
) -> Result<DecodeResult> {
    let vocab = model.vocab();
    check_run(vocab, sampler, prompt, max_len)?;
    let eos = vocab.eos();
    let mut rng = sampler.rng();
    let mut state = GenerationState::new(prompt);
    let mut rec = Recorder::default();
    while state.len() < max_len {
        let position = state.len();
        let dist = model.score_next(&state.working())?;
        let token = sampler.sample(&dist, &mut rng);
        match role {
            Provenance::Small => {
                rec.counters.small_calls += 1;
                rec.small_step(position, token, dist.max_prob());
            }
            Provenance::Large => {
                rec.verify(position..position + 1, Vec::new());
                rec.large_append(position, token);
            }
        }
        state.commit(token, role);
        if token == eos {
            rec.eos(position);
            break;
        }
    }
    let strategy = match role {
        Provenance::Small => "vanilla_small",
        Provenance::Large => "vanilla_large",
    };
    Ok(rec.finish(strategy, prompt, state.committed()))
}

/// Collaborative big/little decoding.
///
/// Each iteration either drafts one small-model token into the pending
/// window or falls back to the large model. A fallback happens when the
/// small model is not confident (`max p_S < alpha_fb`), when the window cap
/// is reached, or when pending tokens must be verified because the length
/// budget is used up (or a drafted eos must be checked with `verify_eos`).
///
/// On fallback the large model scores every pending position and the next
/// position in one invocation. The first pending token whose distance
/// exceeds `alpha_rb` is replaced by a large-model sample and everything
/// after it is discarded; otherwise all pending tokens are committed and a
/// large-model token is appended.
///
/// With `alpha_fb == 0` (confidence mode) the large model is never
/// consulted and the output equals [`vanilla_decode`] of the small model.
/// A drafted eos ends the run without verification unless `verify_eos` is
/// set.
pub fn bild_decode(
    small: &dyn LanguageModel,
    large: &dyn LanguageModel,
    config: &PolicyConfig,
    sampler: &Sampler,
    prompt: &[TokenId],
    max_len: usize,
) -> Result<DecodeResult> {
    check_pair(small, large)?;
    config.validate()?;
    check_run(small.vocab(), sampler, prompt, max_len)?;

    let eos = small.vocab().eos();
    let window = config.effective_window();
    let small_only = config.small_only();
    let mut rng = sampler.rng();
    let mut state = GenerationState::new(prompt);
    let mut rec = Recorder::default();

    loop {
        let n = state.len();
        let has_pending = !state.pending().is_empty();
        if !has_pending && (n >= max_len || state.last() == Some(eos)) {
            break;
        }

        let forced = if small_only {
            None
        } else if state.steps_since_fallback() >= window {
            Some(FallbackReason::WindowCap)
        } else if has_pending && (n >= max_len || state.last() == Some(eos)) {
            Some(FallbackReason::Forced)
        } else {
            None
        };

        let reason = match forced {
            Some(reason) => reason,
            None => {
                let dist = small.score_next(&state.working())?;
                rec.counters.small_calls += 1;
                if should_fallback(&dist, config) {
                    FallbackReason::LowConfidence
                } else {
                    let token = sampler.sample(&dist, &mut rng);
                    rec.small_step(n, token, dist.max_prob());
                    if small_only {
                        state.commit(token, Provenance::Small);
                    } else {
                        state.push_pending(token, dist);
                    }
                    if token == eos && (small_only || !config.verify_eos) {
                        state.accept_pending(usize::MAX);
                        rec.eos(n);
                        break;
                    }
                    continue;
                }
            }
        };

        // Fallback: one large-model invocation over pending + next position.
        rec.fallback(n, reason);
        let start = state.committed().len();
        let pending_tokens: Vec<TokenId> = state.pending().iter().map(|p| p.token).collect();
        let k = pending_tokens.len();
        let pending_eos = pending_tokens.last() == Some(&eos);
        let need_next = n < max_len && !pending_eos;

        let mut working = state.working();
        if !need_next {
            working.pop();
        }
        let large_dists = score_range(large, &working, state.prompt_len() + start)?;
        debug_assert_eq!(large_dists.len(), k + usize::from(need_next));
        let dists: Vec<f64> = pending_tokens
            .iter()
            .zip(&large_dists)
            .map(|(&t, d)| distance(t, d).value())
            .collect();
        rec.verify(start..start + large_dists.len(), dists);

        match find_rollback_position(&pending_tokens, &large_dists[..k], config) {
            Some(m) => {
                state.accept_pending(m);
                let token = sampler.sample(&large_dists[m], &mut rng);
                state.commit(token, Provenance::Large);
                rec.rollback(start + m, k - m, token);
                if token == eos {
                    rec.eos(start + m);
                    break;
                }
            }
            None => {
                state.accept_pending(k);
                if need_next {
                    let token = sampler.sample(&large_dists[k], &mut rng);
                    state.commit(token, Provenance::Large);
                    rec.large_append(start + k, token);
                    if token == eos {
                        rec.eos(start + k);
                        break;
                    }
                } else if pending_eos {
                    rec.eos(start + k - 1);
                    break;
                }
            }
        }
        state.reset_window();
    }

    Ok(rec.finish(strategy_name(config), prompt, state.committed()))
}

fn strategy_name(config: &PolicyConfig) -> String {
    use crate::policies::FallbackMode;
    match (config.fallback_mode, config.rollback_enabled) {
        (FallbackMode::FixedWindow(k), _) => format!("fixed_window({k})"),
        (FallbackMode::Confidence, false) => "no_rollback".to_string(),
        (FallbackMode::Confidence, true) => "bild".to_string(),
    }
}

/// The two ablations of the collaborative decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Rollback disabled; fallback unchanged.
    NoRollback,
    /// Confidence check replaced by an unconditional fallback after `k`
    /// small-model tokens; rollback kept.
    FixedWindow(usize),
}

pub fn ablation_decode(
    variant: Ablation,
    small: &dyn LanguageModel,
    large: &dyn LanguageModel,
    config: &PolicyConfig,
    sampler: &Sampler,
    prompt: &[TokenId],
    max_len: usize,
) -> Result<DecodeResult> {
    let config = match variant {
        Ablation::NoRollback => config.without_rollback(),
        Ablation::FixedWindow(k) => config.with_fixed_window(k),
    };
    bild_decode(small, large, &config, sampler, prompt, max_len)
}

/// Outcome of [`oracle_blend_decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBlend {
    pub result: DecodeResult,
    /// Replaced positions over generated positions.
    pub engagement: f64,
}

/// Runs both models at every position. The small model's sample is kept
/// unless the large model gives it probability below
/// `likelihood_threshold`, in which case the large model's sample replaces
/// it.
///
/// The small and large samples come from two generators seeded identically,
/// so a threshold of 0 reproduces [`vanilla_decode`] of the small model and
/// a threshold above 1 reproduces vanilla decoding of the large model, for
/// any sampler.
pub fn oracle_blend_decode(
    small: &dyn LanguageModel,
    large: &dyn LanguageModel,
    likelihood_threshold: f64,
    sampler: &Sampler,
    prompt: &[TokenId],
    max_len: usize,
) -> Result<OracleBlend> {
    check_pair(small, large)?;
    check_run(small.vocab(), sampler, prompt, max_len)?;
    if likelihood_threshold.is_nan() || likelihood_threshold < 0.0 {
        return Err(Error::InvalidInput(format!(
            "likelihood threshold must be non-negative, got {likelihood_threshold}"
        )));
    }
    let eos = small.vocab().eos();
    let mut small_rng = sampler.rng();
    let mut large_rng = sampler.rng();
    let mut state = GenerationState::new(prompt);
    let mut rec = Recorder::default();
    while state.len() < max_len {
        let n = state.len();
        let context = state.working();
        let small_dist = small.score_next(&context)?;
        let large_dist = large.score_next(&context)?;
        rec.counters.small_calls += 1;
        let small_token = sampler.sample(&small_dist, &mut small_rng);
        let large_token = sampler.sample(&large_dist, &mut large_rng);
        rec.small_step(n, small_token, small_dist.max_prob());
        rec.verify(n..n + 1, vec![distance(small_token, &large_dist).value()]);
        let token = if large_dist.prob(small_token) < likelihood_threshold {
            rec.rollback(n, 1, large_token);
            state.commit(large_token, Provenance::Large);
            large_token
        } else {
            state.commit(small_token, Provenance::Small);
            small_token
        };
        if token == eos {
            rec.eos(n);
            break;
        }
    }
    let positions = state.len();
    let engagement = rec.counters.rollback_count as f64 / positions as f64;
    let result = rec.finish(
        format!("oracle_blend({likelihood_threshold})"),
        prompt,
        state.committed(),
    );
    Ok(OracleBlend { result, engagement })
}

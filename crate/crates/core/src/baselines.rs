//! Rejection-sampling speculative decoding with a fixed draft window.
//!
//! Acceptance and resampling act on the sampler-warped distributions, so a
//! stochastic sampler yields tokens distributed exactly as the large model's
//! warped conditional. With a greedy sampler the scheme degenerates to
//! exact-match verification against the large model's argmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    check_pair, check_run, DecodeResult, FallbackReason, GenerationState, Provenance, Recorder,
};
use crate::error::{Error, Result};
use crate::lm::{inverse_cdf, score_range, LanguageModel, ProbDist, Sampler, TokenId};
use crate::policies::distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecConfig {
    /// Draft length per round.
    pub window: usize,
    /// Draft and verification sampler; its seed drives every random draw.
    pub sampler: Sampler,
}

impl SpecConfig {
    pub fn new(window: usize, sampler: Sampler) -> Self {
        Self { window, sampler }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config(
                "speculative window must be at least 1".into(),
            ));
        }
        self.sampler.validate()
    }
}

/// `min(1, p_L(token) / p_S(token))`.
pub fn acceptance_probability(token: TokenId, small: &ProbDist, large: &ProbDist) -> f64 {
    let ps = small.prob(token);
    if ps <= 0.0 {
        return 1.0;
    }
    (large.prob(token) / ps).clamp(0.0, 1.0)
}

/// `normalize(max(0, p_L - p_S))`, or `p_L` itself when the difference has
/// no mass (which only happens when the two distributions are equal).
pub fn residual(small: &ProbDist, large: &ProbDist) -> ProbDist {
    let weights: Vec<f64> = large
        .probs()
        .iter()
        .zip(small.probs())
        .map(|(l, s)| (l - s).max(0.0))
        .collect();
    if weights.iter().sum::<f64>() > 0.0 {
        ProbDist::from_weights(weights).expect("positive residual mass")
    } else {
        large.clone()
    }
}

/// Speculative decoding: each round the small model drafts up to `window`
/// tokens, the large model scores every draft position plus the next one in
/// a single invocation, and drafts are accepted left to right with
/// probability [`acceptance_probability`]. The first rejected position is
/// resampled from the [`residual`]; if every draft survives, a bonus token
/// is drawn from the large model.
///
/// Drafting stops early at eos or when one slot of the length budget is
/// left for the large model's token. Random draws per round: one per draft,
/// one acceptance draw per verified draft, then one for the replacement or
/// bonus token.
pub fn speculative_decode(
    small: &dyn LanguageModel,
    large: &dyn LanguageModel,
    config: &SpecConfig,
    prompt: &[TokenId],
    max_len: usize,
) -> Result<DecodeResult> {
    check_pair(small, large)?;
    config.validate()?;
    let sampler = &config.sampler;
    check_run(small.vocab(), sampler, prompt, max_len)?;

    let eos = small.vocab().eos();
    let mut rng = sampler.rng();
    let mut state = GenerationState::new(prompt);
    let mut rec = Recorder::default();

    while state.len() < max_len && state.last() != Some(eos) {
        let start = state.len();
        let budget = max_len - start - 1;
        while state.pending().len() < config.window.min(budget) && state.last() != Some(eos) {
            let dist = small.score_next(&state.working())?;
            rec.counters.small_calls += 1;
            let token = sampler.sample(&dist, &mut rng);
            rec.small_step(state.len(), token, dist.max_prob());
            state.push_pending(token, dist);
        }

        let drafts: Vec<TokenId> = state.pending().iter().map(|p| p.token).collect();
        let d = drafts.len();
        let draft_eos = drafts.last() == Some(&eos);
        let reason = if d == config.window {
            FallbackReason::WindowCap
        } else {
            FallbackReason::Forced
        };
        rec.fallback(start + d, reason);

        let mut working = state.working();
        if draft_eos {
            working.pop();
        }
        let large_dists = score_range(large, &working, state.prompt_len() + start)?;
        let dists = drafts
            .iter()
            .zip(&large_dists)
            .map(|(&t, l)| distance(t, l).value())
            .collect();
        rec.verify(start..start + large_dists.len(), dists);

        let mut rejected = None;
        for (i, pending) in state.pending().iter().enumerate() {
            let ps = sampler.warp(&pending.small_dist);
            let pl = sampler.warp(&large_dists[i]);
            let u: f64 = rng.random();
            if u >= acceptance_probability(pending.token, &ps, &pl) {
                rejected = Some((i, residual(&ps, &pl)));
                break;
            }
        }

        match rejected {
            Some((i, resid)) => {
                state.accept_pending(i);
                let token = inverse_cdf(&resid, rng.random());
                state.commit(token, Provenance::Large);
                rec.rejection(start + i, d - i, token);
                if token == eos {
                    rec.eos(start + i);
                }
            }
            None => {
                state.accept_pending(d);
                if draft_eos {
                    rec.eos(start + d - 1);
                } else {
                    let token = sampler.sample(&large_dists[d], &mut rng);
                    state.commit(token, Provenance::Large);
                    rec.large_append(start + d, token);
                    if token == eos {
                        rec.eos(start + d);
                    }
                }
            }
        }
        state.reset_window();
    }

    Ok(rec.finish(
        format!("speculative({})", config.window),
        prompt,
        state.committed(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{replay, vanilla_decode, TraceEvent};
    use crate::lm::{Vocabulary, EOS_SYMBOL};
    use crate::toymodels::synthetic::random_pair;
    use crate::toymodels::TableLM;

    fn abe() -> Vocabulary {
        Vocabulary::from_symbols(vec!["a", "b", EOS_SYMBOL], EOS_SYMBOL).unwrap()
    }

    fn first_token_frequencies(ps: [f64; 3], pl: [f64; 3], runs: u64) -> Vec<f64> {
        // eos gets no mass here, so use a 4-token vocabulary with eos last
        let vocab = Vocabulary::new(4, 3).unwrap();
        let small = TableLM::constant(vocab.clone(), &[ps[0], ps[1], ps[2], 0.0]).unwrap();
        let large = TableLM::constant(vocab, &[pl[0], pl[1], pl[2], 0.0]).unwrap();
        let mut counts = [0u64; 4];
        for seed in 0..runs {
            let cfg = SpecConfig::new(3, Sampler::temperature(1.0, seed));
            let r = speculative_decode(&small, &large, &cfg, &[], 2).unwrap();
            counts[r.sequence[0].index()] += 1;
        }
        counts.iter().map(|&c| c as f64 / runs as f64).collect()
    }

    #[test]
    fn first_token_matches_large_model() {
        for (ps, pl) in [
            ([0.6, 0.3, 0.1], [0.3, 0.5, 0.2]),
            ([0.1, 0.1, 0.8], [0.7, 0.2, 0.1]),
            ([1.0 / 3.0; 3], [0.05, 0.05, 0.9]),
        ] {
            let freq = first_token_frequencies(ps, pl, 10_000);
            let tv: f64 = 0.5
                * pl.iter()
                    .zip(&freq)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            assert!(tv < 0.02, "{ps:?} vs {pl:?}: tv {tv}");
        }
    }

    #[test]
    fn identical_models_never_reject() {
        for seed in 0..20 {
            let (m, _) = random_pair(6, seed);
            let cfg = SpecConfig::new(4, Sampler::temperature(1.0, seed));
            let r = speculative_decode(&m, &m, &cfg, &[], 15).unwrap();
            assert_eq!(r.counters.rollback_count, 0);
            assert_eq!(replay(&r.trace).unwrap(), r.sequence);
        }
    }

    #[test]
    fn disjoint_support_rejects_every_draft() {
        let small = TableLM::constant(abe(), &[1.0, 0.0, 0.0]).unwrap();
        let large = TableLM::constant(abe(), &[0.0, 0.6, 0.4]).unwrap();
        let cfg = SpecConfig::new(2, Sampler::temperature(1.0, 3));
        let r = speculative_decode(&small, &large, &cfg, &[], 6).unwrap();
        assert!(!r.sequence.contains(&TokenId(0)));
        let rounds = r
            .trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::LargeVerify { .. }))
            .count();
        let rejections: Vec<_> = r
            .trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Rejection {
                    tokens_discarded, ..
                } => Some(*tokens_discarded),
                _ => None,
            })
            .collect();
        // every round with a draft rejects at its first position
        assert!(rejections.iter().all(|&k| k >= 1));
        assert!(rejections.len() + 1 >= rounds);
        assert_eq!(
            residual(
                &ProbDist::one_hot(3, TokenId(0)),
                &ProbDist::new(vec![0.0, 0.6, 0.4]).unwrap()
            )
            .probs(),
            &[0.0, 0.6, 0.4]
        );
    }

    #[test]
    fn window_and_budget_are_respected() {
        for seed in 0..30 {
            let (s, l) = random_pair(5, seed);
            let k = 1 + (seed as usize % 4);
            let cfg = SpecConfig::new(k, Sampler::nucleus(0.8, seed));
            let r = speculative_decode(&s, &l, &cfg, &[], 12).unwrap();
            assert!(r.sequence.len() <= 12);
            let mut run = 0;
            for ev in &r.trace {
                match ev {
                    TraceEvent::SmallStep { .. } => {
                        run += 1;
                        assert!(run <= k);
                    }
                    TraceEvent::LargeVerify { .. } => run = 0,
                    _ => {}
                }
            }
            assert_eq!(r.counters.large_calls, r.counters.fallback_count);
            assert_eq!(replay(&r.trace).unwrap(), r.sequence);
        }
    }

    #[test]
    fn greedy_speculation_equals_large_greedy() {
        for seed in 0..20 {
            let (s, l) = random_pair(6, seed);
            let cfg = SpecConfig::new(3, Sampler::greedy());
            let spec = speculative_decode(&s, &l, &cfg, &[], 15).unwrap();
            let van = vanilla_decode(&l, &[], &Sampler::greedy(), 15).unwrap();
            assert_eq!(spec.sequence, van.sequence);
        }
    }

    #[test]
    fn mismatched_vocabularies_are_rejected() {
        let small = TableLM::constant(abe(), &[0.5, 0.25, 0.25]).unwrap();
        let large = TableLM::constant(Vocabulary::new(4, 3).unwrap(), &[0.25; 4]).unwrap();
        let cfg = SpecConfig::new(2, Sampler::greedy());
        assert!(matches!(
            speculative_decode(&small, &large, &cfg, &[], 4),
            Err(Error::VocabMismatch { .. })
        ));
    }
}

use crate::lm::{ProbDist, TokenId};

use super::trace::{Counters, DecodeResult, FallbackReason, Provenance, TraceEvent};

/// An unverified small-model token and the distribution it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingToken {
    pub token: TokenId,
    pub small_dist: ProbDist,
}

/// Working state of one collaborative decode run.
///
/// `prompt ++ committed ++ pending` is the current working sequence.
#[derive(Debug, Clone)]
pub struct GenerationState {
    prompt: Vec<TokenId>,
    committed: Vec<(TokenId, Provenance)>,
    pending: Vec<PendingToken>,
    steps_since_fallback: usize,
}

impl GenerationState {
    pub fn new(prompt: &[TokenId]) -> Self {
        Self {
            prompt: prompt.to_vec(),
            committed: Vec::new(),
            pending: Vec::new(),
            steps_since_fallback: 0,
        }
    }

    pub fn committed(&self) -> &[(TokenId, Provenance)] {
        &self.committed
    }

    pub fn pending(&self) -> &[PendingToken] {
        &self.pending
    }

    pub fn steps_since_fallback(&self) -> usize {
        self.steps_since_fallback
    }

    /// Generated length, pending tokens included.
    pub fn len(&self) -> usize {
        self.committed.len() + self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> Option<TokenId> {
        self.pending
            .last()
            .map(|p| p.token)
            .or_else(|| self.committed.last().map(|c| c.0))
    }

    /// Prompt, committed and pending tokens, in order.
    pub fn working(&self) -> Vec<TokenId> {
        let mut seq = Vec::with_capacity(self.prompt.len() + self.len());
        seq.extend_from_slice(&self.prompt);
        seq.extend(self.committed.iter().map(|c| c.0));
        seq.extend(self.pending.iter().map(|p| p.token));
        seq
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt.len()
    }

    pub fn push_pending(&mut self, token: TokenId, small_dist: ProbDist) {
        self.pending.push(PendingToken { token, small_dist });
        self.steps_since_fallback += 1;
    }

    pub fn commit(&mut self, token: TokenId, provenance: Provenance) {
        debug_assert!(self.pending.is_empty());
        self.committed.push((token, provenance));
    }

    /// Commits `pending[..keep]` as small-model tokens and drops the rest.
    pub fn accept_pending(&mut self, keep: usize) {
        let kept = self.pending.drain(..).take(keep);
        self.committed
            .extend(kept.map(|p| (p.token, Provenance::Small)));
    }

    pub fn reset_window(&mut self) {
        self.steps_since_fallback = 0;
    }
}

/// Accumulates trace events and counters alongside a [`GenerationState`].
#[derive(Debug, Default)]
pub(crate) struct Recorder {
    pub trace: Vec<TraceEvent>,
    pub counters: Counters,
}

impl Recorder {
    pub fn small_step(&mut self, position: usize, token: TokenId, max_prob: f64) {
        self.counters.small_emitted += 1;
        self.trace.push(TraceEvent::SmallStep {
            position,
            token,
            max_prob,
        });
    }

    pub fn fallback(&mut self, position: usize, reason: FallbackReason) {
        self.counters.fallback_count += 1;
        self.trace.push(TraceEvent::Fallback { position, reason });
    }

    pub fn verify(&mut self, positions: std::ops::Range<usize>, distances: Vec<f64>) {
        self.counters.large_calls += 1;
        self.trace.push(TraceEvent::LargeVerify {
            positions: positions.collect(),
            distances,
        });
    }

    pub fn rollback(&mut self, position: usize, tokens_discarded: usize, replacement: TokenId) {
        self.counters.rollback_count += 1;
        self.counters.tokens_discarded += tokens_discarded;
        self.trace.push(TraceEvent::Rollback {
            position,
            tokens_discarded,
            replacement,
        });
    }

    pub fn rejection(&mut self, position: usize, tokens_discarded: usize, replacement: TokenId) {
        self.counters.rollback_count += 1;
        self.counters.tokens_discarded += tokens_discarded;
        self.trace.push(TraceEvent::Rejection {
            position,
            tokens_discarded,
            replacement,
        });
    }

    pub fn large_append(&mut self, position: usize, token: TokenId) {
        self.trace.push(TraceEvent::LargeAppend { position, token });
    }

    pub fn eos(&mut self, position: usize) {
        self.trace.push(TraceEvent::Eos { position });
    }

    pub fn finish(
        mut self,
        strategy: impl Into<String>,
        prompt: &[TokenId],
        committed: &[(TokenId, Provenance)],
    ) -> DecodeResult {
        self.counters.small_tokens = committed
            .iter()
            .filter(|c| c.1 == Provenance::Small)
            .count();
        self.counters.large_tokens = committed.len() - self.counters.small_tokens;
        DecodeResult {
            strategy: strategy.into(),
            prompt: prompt.to_vec(),
            sequence: committed.iter().map(|c| c.0).collect(),
            provenance: committed.iter().map(|c| c.1).collect(),
            trace: self.trace,
            counters: self.counters,
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::TokenId;

/// Which model produced a committed token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    /// The small model's max probability fell below the fallback threshold.
    LowConfidence,
    /// The pending window reached its cap.
    WindowCap,
    /// Verification required for another reason: the length budget is used
    /// up, or a small-model eos must be checked.
    Forced,
}

/// One decision of a decode run. Positions count generated tokens only
/// (the prompt is not included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A token drafted by the small (or only) model.
    SmallStep {
        position: usize,
        token: TokenId,
        max_prob: f64,
    },
    Fallback {
        position: usize,
        reason: FallbackReason,
    },
    /// One large-model invocation scoring `positions`. `distances` covers the
    /// pending tokens being checked (it may be shorter than `positions`).
    LargeVerify {
        positions: Vec<usize>,
        distances: Vec<f64>,
    },
    /// Pending tokens from `position` on were discarded and `replacement`
    /// was committed at `position`.
    Rollback {
        position: usize,
        tokens_discarded: usize,
        replacement: TokenId,
    },
    /// Speculative-sampling counterpart of [`TraceEvent::Rollback`].
    Rejection {
        position: usize,
        tokens_discarded: usize,
        replacement: TokenId,
    },
    LargeAppend {
        position: usize,
        token: TokenId,
    },
    Eos {
        position: usize,
    },
}

/// Run counters. `small_emitted` counts every small-model token including
/// ones later discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub small_tokens: usize,
    pub large_tokens: usize,
    pub fallback_count: usize,
    pub rollback_count: usize,
    pub tokens_discarded: usize,
    pub small_calls: usize,
    pub large_calls: usize,
    pub small_emitted: usize,
}

impl Counters {
    /// Decode-loop iterations: each either drafts one small token or falls back.
    pub fn iterations(&self) -> usize {
        self.small_emitted + self.fallback_count
    }

    /// Share of iterations that fell back to the large model.
    pub fn fallback_fraction(&self) -> f64 {
        ratio(self.fallback_count, self.iterations())
    }

    /// Share of small-model tokens that were rolled back (or rejected).
    /// Zero when the small model emitted nothing.
    pub fn rollback_fraction(&self) -> f64 {
        ratio(self.tokens_discarded, self.small_emitted)
    }
}

impl std::ops::AddAssign for Counters {
    fn add_assign(&mut self, o: Self) {
        self.small_tokens += o.small_tokens;
        self.large_tokens += o.large_tokens;
        self.fallback_count += o.fallback_count;
        self.rollback_count += o.rollback_count;
        self.tokens_discarded += o.tokens_discarded;
        self.small_calls += o.small_calls;
        self.large_calls += o.large_calls;
        self.small_emitted += o.small_emitted;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Outcome of one decode run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub strategy: String,
    pub prompt: Vec<TokenId>,
    /// Generated tokens, ending at eos or the length budget.
    pub sequence: Vec<TokenId>,
    pub provenance: Vec<Provenance>,
    pub trace: Vec<TraceEvent>,
    pub counters: Counters,
}

#[derive(Serialize)]
struct Summary<'a> {
    strategy: &'a str,
    prompt: &'a [TokenId],
    sequence: &'a [TokenId],
    counters: Counters,
    iterations: usize,
    fallback_pct: f64,
    rollback_pct: f64,
}

impl DecodeResult {
    pub fn trace_jsonl(&self) -> String {
        trace_to_jsonl(&self.trace)
    }

    pub fn summary_json(&self) -> String {
        let s = Summary {
            strategy: &self.strategy,
            prompt: &self.prompt,
            sequence: &self.sequence,
            counters: self.counters,
            iterations: self.counters.iterations(),
            fallback_pct: self.counters.fallback_fraction(),
            rollback_pct: self.counters.rollback_fraction(),
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }
}

pub fn trace_to_jsonl(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in trace {
        out.push_str(&serde_json::to_string(ev).expect("trace event serializes"));
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<TraceEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::InvalidTrace(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Rebuilds the generated sequence from a trace, checking that every event
/// is positioned consistently with the sequence built so far.
pub fn replay(trace: &[TraceEvent]) -> Result<Vec<TokenId>> {
    let mut seq: Vec<TokenId> = Vec::new();
    let bad = |i: usize, msg: String| Error::InvalidTrace(format!("event {i}: {msg}"));
    for (i, ev) in trace.iter().enumerate() {
        match ev {
            TraceEvent::SmallStep {
                position, token, ..
            }
            | TraceEvent::LargeAppend { position, token } => {
                if *position != seq.len() {
                    return Err(bad(
                        i,
                        format!("token at {position} but length is {}", seq.len()),
                    ));
                }
                seq.push(*token);
            }
            TraceEvent::Fallback { position, .. } => {
                if *position != seq.len() {
                    return Err(bad(
                        i,
                        format!("fallback at {position} but length is {}", seq.len()),
                    ));
                }
            }
            TraceEvent::LargeVerify {
                positions,
                distances,
            } => {
                let Some(&first) = positions.first() else {
                    return Err(bad(i, "verification scores no positions".into()));
                };
                if positions.windows(2).any(|w| w[1] != w[0] + 1) {
                    return Err(bad(i, "verified positions are not contiguous".into()));
                }
                let last = first + positions.len() - 1;
                if last > seq.len() {
                    return Err(bad(
                        i,
                        format!("scores position {last} past length {}", seq.len()),
                    ));
                }
                if distances.len() > positions.len() {
                    return Err(bad(i, "more distances than positions".into()));
                }
            }
            TraceEvent::Rollback {
                position,
                tokens_discarded,
                replacement,
            }
            | TraceEvent::Rejection {
                position,
                tokens_discarded,
                replacement,
            } => {
                if *position >= seq.len() || seq.len() - position != *tokens_discarded {
                    return Err(bad(
                        i,
                        format!(
                            "discarding {tokens_discarded} from {position} with length {}",
                            seq.len()
                        ),
                    ));
                }
                seq.truncate(*position);
                seq.push(*replacement);
            }
            TraceEvent::Eos { position } => {
                if *position + 1 != seq.len() {
                    return Err(bad(
                        i,
                        format!("eos at {position} but length is {}", seq.len()),
                    ));
                }
            }
        }
    }
    Ok(seq)
}

//! Analytical FLOPs / memory-traffic accounting for decode traces.
//!
//! One model invocation that processes `n` new tokens with `c` tokens
//! already in its key/value cache costs
//!
//! * FLOPs: `2 · params · n`
//! * weight traffic: `params · bytes_per_param`, once per invocation
//! * KV traffic: `kv_bytes_per_token · ((c + n) + n)`: every cache entry
//!   the new tokens attend to is read once, and `n` new entries are written.
//!
//! Encoder cost is not modeled. Latency is estimated per invocation with a
//! roofline, `max(flops / peak_flops, bytes / peak_bandwidth)`.

use std::fs;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{replay, FallbackReason, TraceEvent};
use crate::error::{Error, Result};
use crate::lm::TokenId;

/// Decoder shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub layers: u64,
    pub hidden_dim: u64,
    pub ffn_dim: u64,
    pub decoder_params: u64,
    #[serde(default = "default_bytes_per_param")]
    pub bytes_per_param: u64,
}

fn default_bytes_per_param() -> u64 {
    2
}

impl ModelDescriptor {
    pub const MT5_LARGE: Self = Self::fp16(24, 1024, 2816, 409_000_000);
    pub const MT5_SMALL: Self = Self::fp16(8, 512, 1024, 25_000_000);
    pub const T5_LARGE: Self = Self::fp16(24, 1024, 4096, 402_000_000);
    pub const T5_SMALL: Self = Self::fp16(6, 512, 2048, 25_000_000);

    const fn fp16(layers: u64, hidden_dim: u64, ffn_dim: u64, decoder_params: u64) -> Self {
        Self {
            layers,
            hidden_dim,
            ffn_dim,
            decoder_params,
            bytes_per_param: 2,
        }
    }

    /// `mt5-large`, `mt5-small`, `t5-large` or `t5-small`.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mt5-large" => Some(Self::MT5_LARGE),
            "mt5-small" => Some(Self::MT5_SMALL),
            "t5-large" => Some(Self::T5_LARGE),
            "t5-small" => Some(Self::T5_SMALL),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.hidden_dim == 0
            || self.ffn_dim == 0
            || self.decoder_params == 0
            || self.bytes_per_param == 0
        {
            return Err(Error::Config(format!(
                "model descriptor fields must all be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn weight_bytes(&self) -> f64 {
        (self.decoder_params * self.bytes_per_param) as f64
    }

    /// Bytes of one cache entry: a key and a value vector in every layer.
    pub fn kv_bytes_per_token(&self) -> f64 {
        (2 * self.layers * self.hidden_dim * self.bytes_per_param) as f64
    }

    /// Reads a descriptor JSON file, or a preset name.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(d) = Self::preset(spec) {
            return Ok(d);
        }
        let path = Path::new(spec);
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        d.validate()?;
        Ok(d)
    }
}

/// Accumulated work. `mops` counts bytes moved and includes `weight_mops`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTally {
    pub flops: f64,
    pub mops: f64,
    pub weight_mops: f64,
    pub invocations: u64,
}

impl WorkloadTally {
    /// FLOPs per byte moved; zero for an empty tally.
    pub fn arithmetic_intensity(&self) -> f64 {
        if self.mops > 0.0 {
            self.flops / self.mops
        } else {
            0.0
        }
    }
}

impl Add for WorkloadTally {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            flops: self.flops + o.flops,
            mops: self.mops + o.mops,
            weight_mops: self.weight_mops + o.weight_mops,
            invocations: self.invocations + o.invocations,
        }
    }
}

impl AddAssign for WorkloadTally {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for WorkloadTally {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Cost of one invocation processing `new_tokens` with `context_len`
/// tokens already cached. Zero new tokens means no invocation.
pub fn step_cost(desc: &ModelDescriptor, context_len: usize, new_tokens: usize) -> WorkloadTally {
    if new_tokens == 0 {
        return WorkloadTally::default();
    }
    let n = new_tokens as f64;
    let weight = desc.weight_bytes();
    let kv = desc.kv_bytes_per_token() * ((context_len + new_tokens) as f64 + n);
    WorkloadTally {
        flops: 2.0 * desc.decoder_params as f64 * n,
        mops: weight + kv,
        weight_mops: weight,
        invocations: 1,
    }
}

/// Peak compute and bandwidth for the roofline latency proxy. The default
/// is a 65 TFLOP/s, 320 GB/s fp16 inference card.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roofline {
    pub peak_flops: f64,
    pub peak_bandwidth: f64,
}

impl Default for Roofline {
    fn default() -> Self {
        Self {
            peak_flops: 65e12,
            peak_bandwidth: 320e9,
        }
    }
}

impl Roofline {
    pub fn seconds(&self, t: &WorkloadTally) -> f64 {
        (t.flops / self.peak_flops).max(t.mops / self.peak_bandwidth)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TallyOptions {
    /// Prompt tokens already in both models' caches.
    pub prompt_len: usize,
    pub roofline: Roofline,
}

/// Per-model work charged by a run of trace events, plus the roofline time
/// summed over invocations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTally {
    pub small: WorkloadTally,
    pub large: WorkloadTally,
    pub seconds: f64,
}

impl Add for EventTally {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            small: self.small + o.small,
            large: self.large + o.large,
            seconds: self.seconds + o.seconds,
        }
    }
}

/// Charges each event independently: a `SmallStep` or low-confidence
/// `Fallback` is one single-token small-model call, a `LargeVerify` is one
/// large-model call over its scored positions. Other events are free.
pub fn tally_events(
    trace: &[TraceEvent],
    small: &ModelDescriptor,
    large: &ModelDescriptor,
    opts: &TallyOptions,
) -> EventTally {
    let mut out = EventTally::default();
    for ev in trace {
        match ev {
            TraceEvent::SmallStep { position, .. }
            | TraceEvent::Fallback {
                position,
                reason: FallbackReason::LowConfidence,
            } => {
                let t = step_cost(small, opts.prompt_len + position, 1);
                out.seconds += opts.roofline.seconds(&t);
                out.small += t;
            }
            TraceEvent::LargeVerify { positions, .. } => {
                let first = positions.first().copied().unwrap_or(0);
                let t = step_cost(large, opts.prompt_len + first, positions.len());
                out.seconds += opts.roofline.seconds(&t);
                out.large += t;
            }
            _ => {}
        }
    }
    out
}

/// Cost of decoding `len` tokens one at a time with `desc`.
pub fn autoregressive_cost(
    desc: &ModelDescriptor,
    prompt_len: usize,
    len: usize,
    roofline: &Roofline,
) -> (WorkloadTally, f64) {
    (0..len)
        .map(|p| step_cost(desc, prompt_len + p, 1))
        .fold((WorkloadTally::default(), 0.0), |(acc, s), t| {
            (acc + t, s + roofline.seconds(&t))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceTally {
    pub sequence_len: usize,
    pub small: WorkloadTally,
    pub large: WorkloadTally,
    /// Small and large work combined.
    pub bild: WorkloadTally,
    /// Decoding the same final length with the large model alone.
    pub vanilla_large_equivalent: WorkloadTally,
    pub bild_seconds: f64,
    pub vanilla_seconds: f64,
    pub speedup_estimate: f64,
    /// vanilla MOPs / collaborative MOPs.
    pub mops_ratio: f64,
    /// collaborative arithmetic intensity / vanilla arithmetic intensity.
    pub arithmetic_intensity_ratio: f64,
}

pub fn tally_trace(
    trace: &[TraceEvent],
    small: &ModelDescriptor,
    large: &ModelDescriptor,
    opts: &TallyOptions,
) -> Result<TraceTally> {
    small.validate()?;
    large.validate()?;
    let sequence_len = replay(trace)?.len();
    let events = tally_events(trace, small, large, opts);
    let (vanilla, vanilla_seconds) =
        autoregressive_cost(large, opts.prompt_len, sequence_len, &opts.roofline);
    let bild = events.small + events.large;
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 1.0 };
    Ok(TraceTally {
        sequence_len,
        small: events.small,
        large: events.large,
        bild,
        vanilla_large_equivalent: vanilla,
        bild_seconds: events.seconds,
        vanilla_seconds,
        speedup_estimate: div(vanilla_seconds, events.seconds),
        mops_ratio: div(vanilla.mops, bild.mops),
        arithmetic_intensity_ratio: div(
            bild.arithmetic_intensity(),
            vanilla.arithmetic_intensity(),
        ),
    })
}

/// Target rates for [`synthesize_trace`]. Rates are fractions, with the
/// same denominators as the decode counters: fallbacks over loop
/// iterations, discarded tokens over small-model tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRates {
    pub tokens: usize,
    pub fallback_rate: f64,
    pub rollback_rate: f64,
    pub window_cap: usize,
}

/// Builds a well-formed collaborative trace of `tokens` generated tokens
/// whose fallback and rollback rates track the targets. Decisions are
/// made by error accumulation, so the result is deterministic.
pub fn synthesize_trace(rates: &SyntheticRates) -> Vec<TraceEvent> {
    let small_tok = TokenId(0);
    let large_tok = TokenId(1);
    let mut trace = Vec::new();
    let (mut emitted, mut fallbacks, mut discarded) = (0usize, 0usize, 0usize);
    let mut committed = 0usize;
    let mut pending = 0usize;
    while committed < rates.tokens {
        let iterations = emitted + fallbacks + 1;
        let wants_fallback = (fallbacks as f64) < rates.fallback_rate * iterations as f64;
        let at_cap = pending >= rates.window_cap;
        let at_budget = committed + pending + 1 >= rates.tokens;
        if !(wants_fallback || at_cap || at_budget) {
            trace.push(TraceEvent::SmallStep {
                position: committed + pending,
                token: small_tok,
                max_prob: 0.9,
            });
            pending += 1;
            emitted += 1;
            continue;
        }
        let reason = if wants_fallback {
            FallbackReason::LowConfidence
        } else if at_cap {
            FallbackReason::WindowCap
        } else {
            FallbackReason::Forced
        };
        trace.push(TraceEvent::Fallback {
            position: committed + pending,
            reason,
        });
        fallbacks += 1;
        let target = (rates.rollback_rate * emitted as f64).round() as usize;
        let drop = target.saturating_sub(discarded).min(pending);
        let keep = pending - drop;
        let distances = (0..pending)
            .map(|i| if i < keep { 0.1 } else { 10.0 })
            .collect();
        trace.push(TraceEvent::LargeVerify {
            positions: (committed..=committed + pending).collect(),
            distances,
        });
        if drop > 0 {
            trace.push(TraceEvent::Rollback {
                position: committed + keep,
                tokens_discarded: drop,
                replacement: large_tok,
            });
            discarded += drop;
            committed += keep + 1;
        } else {
            trace.push(TraceEvent::LargeAppend {
                position: committed + pending,
                token: large_tok,
            });
            committed += pending + 1;
        }
        pending = 0;
    }
    trace
}

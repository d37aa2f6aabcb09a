//! Decode loops: vanilla autoregressive, collaborative big/little with
//! fallback and rollback, its ablations, and the oracle-blend experiment.

mod decode;
mod state;
mod trace;

pub(crate) use decode::{check_pair, check_run};
pub(crate) use state::Recorder;

pub use decode::{
    ablation_decode, bild_decode, oracle_blend_decode, vanilla_decode, vanilla_decode_as, Ablation,
    OracleBlend,
};
pub use state::{GenerationState, PendingToken};
pub use trace::{
    replay, trace_from_jsonl, trace_to_jsonl, Counters, DecodeResult, FallbackReason, Provenance,
    TraceEvent,
};

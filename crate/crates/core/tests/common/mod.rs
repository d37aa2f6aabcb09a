//! Helpers shared by the integration tests.
#![allow(dead_code)]

use bild::engine::{replay, DecodeResult, TraceEvent};
use bild::lm::{LanguageModel, Sampler, TokenId};
use bild::metrics::agreement;
use bild::policies::PolicyConfig;

/// Checks a collaborative trace against the policy it was produced with:
/// replay consistency, length budget, window cap, and that every rollback
/// sits at the first pending position whose distance exceeds `alpha_rb`.
pub fn check_trace(r: &DecodeResult, config: &PolicyConfig, max_len: usize) -> Result<(), String> {
    let seq = replay(&r.trace).map_err(|e| e.to_string())?;
    if seq != r.sequence {
        return Err("replayed sequence differs from the result".into());
    }
    if r.sequence.len() > max_len {
        return Err(format!(
            "{} tokens exceed max_len {max_len}",
            r.sequence.len()
        ));
    }
    let cap = match config.fallback_mode {
        bild::policies::FallbackMode::Confidence => config.window_cap,
        bild::policies::FallbackMode::FixedWindow(k) => k,
    };
    let small_only =
        config.fallback_mode == bild::policies::FallbackMode::Confidence && config.alpha_fb <= 0.0;
    let mut run = 0usize;
    let mut last: Option<&Vec<f64>> = None;
    for ev in &r.trace {
        match ev {
            TraceEvent::SmallStep { .. } => {
                run += 1;
                if !small_only && run > cap {
                    return Err(format!("{run} consecutive small tokens with cap {cap}"));
                }
            }
            TraceEvent::LargeVerify { distances, .. } => {
                run = 0;
                last = Some(distances);
            }
            TraceEvent::Rollback {
                tokens_discarded, ..
            } => {
                let ds = last.take().ok_or("rollback without verification")?;
                if !config.rollback_enabled {
                    return Err("rollback with rollback disabled".into());
                }
                let m = ds.len() - tokens_discarded;
                if ds[..m].iter().any(|&d| d > config.alpha_rb) {
                    return Err(format!(
                        "rollback at {m} is not the first exceeding position"
                    ));
                }
                if ds[m] <= config.alpha_rb {
                    return Err(format!(
                        "rolled back a token at distance {} <= {}",
                        ds[m], config.alpha_rb
                    ));
                }
            }
            TraceEvent::LargeAppend { .. } => {
                if let Some(ds) = last.take() {
                    if config.rollback_enabled && ds.iter().any(|&d| d > config.alpha_rb) {
                        return Err("a token past alpha_rb was committed".into());
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Mean agreement of `outputs` with `model`'s own greedy decodes.
pub fn mean_agreement(
    model: &dyn LanguageModel,
    prompts: &[Vec<TokenId>],
    outputs: &[Vec<TokenId>],
    max_len: usize,
) -> f64 {
    let total: f64 = prompts
        .iter()
        .zip(outputs)
        .map(|(p, out)| {
            let reference = bild::engine::vanilla_decode(model, p, &Sampler::greedy(), max_len)
                .unwrap()
                .sequence;
            agreement(out, &reference).fraction
        })
        .sum();
    total / prompts.len() as f64
}

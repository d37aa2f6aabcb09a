//! Quality proxies (token agreement, perplexity) and per-run summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::costmodel::TraceTally;
use crate::engine::{Counters, DecodeResult};
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Position-wise matches over the longer length. Two empty sequences
    /// agree fully.
    pub fraction: f64,
    pub common_prefix: usize,
}

pub fn agreement(candidate: &[TokenId], reference: &[TokenId]) -> Agreement {
    let longest = candidate.len().max(reference.len());
    let matches = candidate
        .iter()
        .zip(reference)
        .filter(|(a, b)| a == b)
        .count();
    let common_prefix = candidate
        .iter()
        .zip(reference)
        .take_while(|(a, b)| a == b)
        .count();
    let fraction = if longest == 0 {
        1.0
    } else {
        matches as f64 / longest as f64
    };
    Agreement {
        fraction,
        common_prefix,
    }
}

/// Summed negative log-likelihood (natural log, floored) of `continuation`
/// given `prompt`, and the number of scored tokens.
pub fn continuation_nll(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    continuation: &[TokenId],
) -> Result<(f64, usize)> {
    let mut full = prompt.to_vec();
    let mut nll = 0.0;
    for &t in continuation {
        nll -= model.score_next(&full)?.ln_prob(t);
        full.push(t);
    }
    Ok((nll, continuation.len()))
}

/// `exp` of the mean per-token negative log-likelihood over every token of
/// every sequence, each conditioned on its own prefix.
pub fn perplexity(model: &dyn LanguageModel, sequences: &[Vec<TokenId>]) -> Result<f64> {
    let pairs: Vec<(&[TokenId], &[TokenId])> =
        sequences.iter().map(|s| (&[][..], &s[..])).collect();
    perplexity_of_continuations(model, &pairs)
}

/// Like [`perplexity`], but only the continuation tokens are scored, each
/// conditioned on the prompt and the continuation so far.
pub fn perplexity_of_continuations(
    model: &dyn LanguageModel,
    pairs: &[(&[TokenId], &[TokenId])],
) -> Result<f64> {
    let mut nll = 0.0;
    let mut count = 0;
    for (prompt, cont) in pairs {
        let (n, c) = continuation_nll(model, prompt, cont)?;
        nll += n;
        count += c;
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "perplexity needs at least one token".into(),
        ));
    }
    Ok((nll / count as f64).exp())
}

/// Summary of one run or of a group of runs sharing a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean agreement with the reference sequences.
    pub agreement: Option<f64>,
    /// Perplexity of the generated tokens under the evaluation model.
    pub perplexity: Option<f64>,
    pub fallback_pct: f64,
    pub rollback_pct: f64,
    /// Roofline speedup over decoding with the large model alone.
    pub modeled_speedup: Option<f64>,
    pub large_calls: usize,
}

/// Summarizes `results` together. Counters are pooled before taking
/// fractions; perplexity pools all generated tokens; speedup is total
/// vanilla time over total collaborative time.
pub fn summarize_runs(
    results: &[DecodeResult],
    tallies: Option<&[TraceTally]>,
    references: Option<&[Vec<TokenId>]>,
    eval_model: Option<&dyn LanguageModel>,
) -> Result<RunSummary> {
    let mut counters = Counters::default();
    for r in results {
        counters += r.counters;
    }
    let agreement = match references {
        Some(refs) if !results.is_empty() => {
            if refs.len() != results.len() {
                return Err(Error::InvalidInput(format!(
                    "{} references for {} runs",
                    refs.len(),
                    results.len()
                )));
            }
            let total: f64 = results
                .iter()
                .zip(refs)
                .map(|(r, reference)| agreement(&r.sequence, reference).fraction)
                .sum();
            Some(total / results.len() as f64)
        }
        _ => None,
    };
    let perplexity = match eval_model {
        Some(m) if results.iter().any(|r| !r.sequence.is_empty()) => {
            let pairs: Vec<(&[TokenId], &[TokenId])> = results
                .iter()
                .map(|r| (&r.prompt[..], &r.sequence[..]))
                .collect();
            Some(perplexity_of_continuations(m, &pairs)?)
        }
        _ => None,
    };
    let modeled_speedup = tallies.map(|ts| {
        let vanilla: f64 = ts.iter().map(|t| t.vanilla_seconds).sum();
        let bild: f64 = ts.iter().map(|t| t.bild_seconds).sum();
        if bild > 0.0 {
            vanilla / bild
        } else {
            1.0
        }
    });
    Ok(RunSummary {
        agreement,
        perplexity,
        fallback_pct: counters.fallback_fraction(),
        rollback_pct: counters.rollback_fraction(),
        modeled_speedup,
        large_calls: counters.large_calls,
    })
}

pub fn summarize(
    result: &DecodeResult,
    tally: Option<&TraceTally>,
    reference: Option<&[TokenId]>,
    eval_model: Option<&dyn LanguageModel>,
) -> Result<RunSummary> {
    let refs = reference.map(|r| vec![r.to_vec()]);
    summarize_runs(
        std::slice::from_ref(result),
        tally.map(std::slice::from_ref),
        refs.as_deref(),
        eval_model,
    )
}

/// One line of `summary.csv`. Column order is fixed; absent values are
/// written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub alpha_fb: f64,
    pub alpha_rb: f64,
    pub window_cap: usize,
    pub strategy: String,
    pub agreement: Option<f64>,
    pub perplexity: Option<f64>,
    pub fallback_pct: f64,
    pub rollback_pct: f64,
    pub modeled_speedup: Option<f64>,
}

impl SummaryRow {
    pub fn new(
        run_id: impl Into<String>,
        strategy: impl Into<String>,
        policy: &crate::policies::PolicyConfig,
        summary: &RunSummary,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            alpha_fb: policy.alpha_fb,
            alpha_rb: policy.alpha_rb,
            window_cap: policy.window_cap,
            strategy: strategy.into(),
            agreement: summary.agreement,
            perplexity: summary.perplexity,
            fallback_pct: summary.fallback_pct,
            rollback_pct: summary.rollback_pct,
            modeled_speedup: summary.modeled_speedup,
        }
    }
}

/// Writes `rows` as CSV with a header line.
pub fn write_rows<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows not dominated in (agreement, modeled speedup), in input order.
/// Rows missing either value are left out.
pub fn pareto_front(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let points: Vec<Option<(f64, f64)>> = rows
        .iter()
        .map(|r| Some((r.agreement?, r.modeled_speedup?)))
        .collect();
    let dominated = |a: (f64, f64)| {
        points
            .iter()
            .flatten()
            .any(|&b| b.0 >= a.0 && b.1 >= a.1 && (b.0 > a.0 || b.1 > a.1))
    };
    rows.iter()
        .zip(&points)
        .filter(|(_, p)| matches!(p, Some(p) if !dominated(*p)))
        .map(|(r, _)| r.clone())
        .collect()
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lm::{LanguageModel, ProbDist, TokenId, Vocabulary};

/// Lookup-table model: each listed context (the full prefix) maps to a
/// distribution, everything else gets the default row.
///
/// Text format, one record per line:
///
/// ```text
/// # comment
/// -       | 0.7 0.2 0.1
/// a       | 0.1 0.8 0.1
/// a b     | 0.0 0.0 1.0
/// DEFAULT | 0.2 0.2 0.6
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct TableLM {
    vocab: Vocabulary,
    rows: BTreeMap<Vec<TokenId>, ProbDist>,
    default_row: ProbDist,
}

impl TableLM {
    pub fn new(vocab: Vocabulary, default_row: ProbDist) -> Result<Self> {
        check_row_len(&vocab, &default_row)?;
        Ok(Self {
            vocab,
            rows: BTreeMap::new(),
            default_row,
        })
    }

    /// A model that ignores its context entirely.
    pub fn constant(vocab: Vocabulary, probs: &[f64]) -> Result<Self> {
        Self::new(vocab, ProbDist::new(probs.to_vec())?)
    }

    pub fn with_row(mut self, context: Vec<TokenId>, row: ProbDist) -> Result<Self> {
        self.insert(context, row)?;
        Ok(self)
    }

    pub fn insert(&mut self, context: Vec<TokenId>, row: ProbDist) -> Result<()> {
        self.vocab.check_all(&context)?;
        check_row_len(&self.vocab, &row)?;
        self.rows.insert(context, row);
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[TokenId], &ProbDist)> {
        self.rows.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn default_row(&self) -> &ProbDist {
        &self.default_row
    }

    pub fn load(path: impl AsRef<Path>, vocab: Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    /// Parses the text format; errors carry a 1-based line number.
    pub fn parse(text: &str, vocab: Vocabulary) -> std::result::Result<Self, (usize, String)> {
        let mut rows = BTreeMap::new();
        let mut default_row = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (ctx, probs) = line
                .split_once('|')
                .ok_or((line_no, "expected `<context> | <probs>`".to_string()))?;
            let probs = probs
                .split_whitespace()
                .map(|w| {
                    w.parse::<f64>()
                        .map_err(|_| format!("bad probability `{w}`"))
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|m| (line_no, m))?;
            if probs.len() != vocab.size() {
                return Err((
                    line_no,
                    format!(
                        "row has {} probabilities but the vocabulary has {} tokens",
                        probs.len(),
                        vocab.size()
                    ),
                ));
            }
            let row = ProbDist::new(probs).map_err(|e| (line_no, e.to_string()))?;
            let ctx = ctx.trim();
            if ctx == "DEFAULT" {
                if default_row.replace(row).is_some() {
                    return Err((line_no, "duplicate DEFAULT row".into()));
                }
                continue;
            }
            let context = vocab.parse_sequence(ctx).map_err(|m| (line_no, m))?;
            if rows.insert(context, row).is_some() {
                return Err((line_no, format!("duplicate context `{ctx}`")));
            }
        }
        let default_row = default_row.ok_or((0, "missing DEFAULT row".to_string()))?;
        Ok(Self {
            vocab,
            rows,
            default_row,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fmt_row = |d: &ProbDist| {
            d.probs()
                .iter()
                .map(|p| format!("{p}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (ctx, row) in &self.rows {
            let _ = writeln!(out, "{} | {}", self.vocab.render(ctx), fmt_row(row));
        }
        let _ = writeln!(out, "DEFAULT | {}", fmt_row(&self.default_row));
        out
    }
}

fn check_row_len(vocab: &Vocabulary, row: &ProbDist) -> Result<()> {
    if row.len() != vocab.size() {
        return Err(Error::InvalidInput(format!(
            "row length {} does not match vocabulary size {}",
            row.len(),
            vocab.size()
        )));
    }
    Ok(())
}

impl LanguageModel for TableLM {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn score_next(&self, prefix: &[TokenId]) -> Result<ProbDist> {
        self.vocab.check_all(prefix)?;
        Ok(self.rows.get(prefix).unwrap_or(&self.default_row).clone())
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{LanguageModel, ProbDist, TokenId, Vocabulary};

/// One position of an n-gram context. `Bos` pads contexts that reach past
/// the start of the sequence and is never sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContextSymbol {
    Bos,
    Token(TokenId),
}

impl ContextSymbol {
    /// JSON encoding: `-1` for begin-of-sequence, otherwise the token id.
    fn to_json(self) -> i64 {
        match self {
            ContextSymbol::Bos => -1,
            ContextSymbol::Token(t) => t.0 as i64,
        }
    }
}

/// Laplace-smoothed n-gram model:
/// `p(t | c) = (count(c, t) + λ) / (Σ count(c, ·) + λ·V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLM {
    vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    counts: BTreeMap<Vec<ContextSymbol>, Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct NgramJson {
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    counts: Vec<(Vec<i64>, u32, u64)>,
}

impl NgramLM {
    /// An untrained model (every context is uniform).
    pub fn empty(vocab: Vocabulary, order: usize, smoothing: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput(
                "n-gram order must be at least 1".into(),
            ));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "smoothing must be positive and finite, got {smoothing}"
            )));
        }
        Ok(Self {
            vocab,
            order,
            smoothing,
            counts: BTreeMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// The `order - 1` symbols conditioning the token after `prefix`.
    pub fn context_of(&self, prefix: &[TokenId]) -> Vec<ContextSymbol> {
        let width = self.order - 1;
        let pad = width.saturating_sub(prefix.len());
        let tail = &prefix[prefix.len().saturating_sub(width)..];
        std::iter::repeat_n(ContextSymbol::Bos, pad)
            .chain(tail.iter().map(|&t| ContextSymbol::Token(t)))
            .collect()
    }

    /// Adds `by` observations of `next` after `context`.
    pub fn observe(&mut self, context: Vec<ContextSymbol>, next: TokenId, by: u64) -> Result<()> {
        self.vocab.check(next)?;
        if context.len() != self.order - 1 {
            return Err(Error::InvalidInput(format!(
                "context of length {} for an order-{} model",
                context.len(),
                self.order
            )));
        }
        let row = self
            .counts
            .entry(context)
            .or_insert_with(|| vec![0; self.vocab.size()]);
        row[next.index()] += by;
        Ok(())
    }

    /// Adds every window of one sequence.
    pub fn observe_sequence(&mut self, sequence: &[TokenId]) -> Result<()> {
        self.vocab.check_all(sequence)?;
        for i in 0..sequence.len() {
            let ctx = self.context_of(&sequence[..i]);
            self.observe(ctx, sequence[i], 1)?;
        }
        Ok(())
    }

    pub fn count(&self, context: &[ContextSymbol], next: TokenId) -> u64 {
        self.counts
            .get(context)
            .and_then(|row| row.get(next.index()).copied())
            .unwrap_or(0)
    }

    pub fn distribution(&self, context: &[ContextSymbol]) -> ProbDist {
        let v = self.vocab.size();
        match self.counts.get(context) {
            None => ProbDist::uniform(v),
            Some(row) => {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + self.smoothing * v as f64;
                let probs = row
                    .iter()
                    .map(|&c| (c as f64 + self.smoothing) / denom)
                    .collect();
                ProbDist::new(probs).expect("smoothed counts normalize")
            }
        }
    }

    pub fn to_json(&self) -> String {
        let counts = self
            .counts
            .iter()
            .flat_map(|(ctx, row)| {
                let ctx: Vec<i64> = ctx.iter().map(|s| s.to_json()).collect();
                row.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(move |(t, &c)| (ctx.clone(), t as u32, c))
            })
            .collect();
        let doc = NgramJson {
            order: self.order,
            smoothing: self.smoothing,
            vocab_size: self.vocab.size(),
            counts,
        };
        serde_json::to_string_pretty(&doc).expect("n-gram document serializes")
    }

    pub fn from_json(text: &str, vocab: Vocabulary) -> Result<Self> {
        let doc: NgramJson = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("n-gram JSON: {e}")))?;
        if doc.vocab_size != vocab.size() {
            return Err(Error::InvalidInput(format!(
                "n-gram model has vocab_size {} but the vocabulary has {} tokens",
                doc.vocab_size,
                vocab.size()
            )));
        }
        let mut lm = Self::empty(vocab, doc.order, doc.smoothing)?;
        for (ctx, token, count) in doc.counts {
            let ctx = ctx
                .into_iter()
                .map(|id| match id {
                    -1 => Ok(ContextSymbol::Bos),
                    id if id >= 0 && (id as usize) < lm.vocab.size() => {
                        Ok(ContextSymbol::Token(TokenId(id as u32)))
                    }
                    id => Err(Error::InvalidInput(format!("context id {id} out of range"))),
                })
                .collect::<Result<Vec<_>>>()?;
            lm.observe(ctx, TokenId(token), count)?;
        }
        Ok(lm)
    }

    pub fn load(path: impl AsRef<Path>, vocab: Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, vocab).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

impl LanguageModel for NgramLM {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn score_next(&self, prefix: &[TokenId]) -> Result<ProbDist> {
        self.vocab.check_all(prefix)?;
        Ok(self.distribution(&self.context_of(prefix)))
    }
}

/// Counts every window of every corpus sequence, padding the start with
/// [`ContextSymbol::Bos`]. No end marker is appended; sequences carry their
/// own eos tokens if they have them.
pub fn fit_ngram(
    corpus: &[Vec<TokenId>],
    vocab: &Vocabulary,
    order: usize,
    smoothing: f64,
) -> Result<NgramLM> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let mut lm = NgramLM::empty(vocab.clone(), order, smoothing)?;
    for seq in corpus {
        lm.observe_sequence(seq)?;
    }
    Ok(lm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{tokens, EOS_SYMBOL};
    use proptest::prelude::*;

    fn abe() -> Vocabulary {
        Vocabulary::from_symbols(vec!["a", "b", EOS_SYMBOL], EOS_SYMBOL).unwrap()
    }

    #[test]
    fn bigram_laplace_by_hand() {
        // "a b a b": a→b twice, so p(b|a) = (2+1)/(2+3).
        let lm = fit_ngram(&[tokens(&[0, 1, 0, 1])], &abe(), 2, 1.0).unwrap();
        let d = lm.score_next(&tokens(&[1, 0])).unwrap();
        assert!((d.probs()[1] - 0.6).abs() < 1e-15);
        assert!((d.probs()[0] - 0.2).abs() < 1e-15);
        assert!((d.probs()[2] - 0.2).abs() < 1e-15);
        // b→a once: (1+1)/(1+3)
        let d = lm.score_next(&tokens(&[1])).unwrap();
        assert!((d.probs()[0] - 0.5).abs() < 1e-15);
        // BOS→a once
        let d = lm.score_next(&[]).unwrap();
        assert!((d.probs()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unigram_by_hand() {
        let lm = fit_ngram(&[tokens(&[0])], &abe(), 1, 1.0).unwrap();
        let d = lm.score_next(&tokens(&[1, 1, 1])).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn unseen_context_is_uniform() {
        let lm = fit_ngram(&[tokens(&[0, 1, 0, 1])], &abe(), 2, 1.0).unwrap();
        let d = lm.score_next(&tokens(&[2])).unwrap();
        assert_eq!(d, ProbDist::uniform(3));
    }

    #[test]
    fn trigram_pads_with_bos() {
        let lm = fit_ngram(&[tokens(&[0, 1])], &abe(), 3, 0.5).unwrap();
        let bos = ContextSymbol::Bos;
        let a = ContextSymbol::Token(TokenId(0));
        assert_eq!(lm.context_of(&[]), vec![bos, bos]);
        assert_eq!(lm.context_of(&tokens(&[0])), vec![bos, a]);
        assert_eq!(lm.count(&[bos, bos], TokenId(0)), 1);
        assert_eq!(lm.count(&[bos, a], TokenId(1)), 1);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_ngram(&[], &abe(), 2, 1.0).is_err());
        assert!(fit_ngram(&[vec![]], &abe(), 2, 1.0).is_err());
        assert!(fit_ngram(&[tokens(&[0])], &abe(), 0, 1.0).is_err());
        assert!(fit_ngram(&[tokens(&[0])], &abe(), 2, 0.0).is_err());
        assert!(fit_ngram(&[tokens(&[7])], &abe(), 2, 1.0).is_err());
    }

    #[test]
    fn json_round_trip_and_shape() {
        let lm = fit_ngram(&[tokens(&[0, 1, 0, 1, 2])], &abe(), 2, 1.0).unwrap();
        let text = lm.to_json();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["order"], 2);
        assert_eq!(doc["vocab_size"], 3);
        assert_eq!(doc["counts"][0], serde_json::json!([[-1], 0, 1]));
        assert_eq!(NgramLM::from_json(&text, abe()).unwrap(), lm);
        let four = Vocabulary::new(4, 3).unwrap();
        assert!(NgramLM::from_json(&text, four).is_err());
    }

    proptest! {
        #[test]
        fn conditionals_normalize(
            corpus in prop::collection::vec(prop::collection::vec(0u32..5, 1..12), 1..6),
            order in 1usize..4,
            smoothing in 0.01f64..3.0,
            probe in prop::collection::vec(0u32..5, 0..6),
        ) {
            let vocab = Vocabulary::new(5, 4).unwrap();
            let corpus: Vec<_> = corpus.iter().map(|s| tokens(s)).collect();
            let lm = fit_ngram(&corpus, &vocab, order, smoothing).unwrap();
            let d = lm.score_next(&tokens(&probe)).unwrap();
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert_eq!(d, lm.score_next(&tokens(&probe)).unwrap());
        }
    }
}

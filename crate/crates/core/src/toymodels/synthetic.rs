//! Seeded synthetic tasks used by the tests, the acceptance suite and the
//! demo configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::align::generate_corpus;
use super::ngram::{fit_ngram, ContextSymbol, NgramLM};
use crate::engine::vanilla_decode;
use crate::lm::{LanguageModel, Sampler, TokenId, Vocabulary};
use crate::policies::distance;

fn all_contexts(vocab: &Vocabulary, width: usize) -> Vec<Vec<ContextSymbol>> {
    let symbols: Vec<ContextSymbol> = std::iter::once(ContextSymbol::Bos)
        .chain((0..vocab.size() as u32).map(|t| ContextSymbol::Token(TokenId(t))))
        .collect();
    let mut out = vec![Vec::new()];
    for _ in 0..width {
        out = out
            .into_iter()
            .flat_map(|ctx| {
                symbols.iter().map(move |&s| {
                    let mut c = ctx.clone();
                    c.push(s);
                    c
                })
            })
            .collect();
    }
    out
}

/// An n-gram with random, moderately peaked conditionals over every context.
pub fn random_ngram(vocab: &Vocabulary, order: usize, seed: u64) -> NgramLM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lm = NgramLM::empty(vocab.clone(), order, 0.5).expect("valid order");
    let v = vocab.size();
    for ctx in all_contexts(vocab, order - 1) {
        let dominant = rng.random_range(0..v);
        for t in 0..v {
            let mut c = (rng.random::<f64>().powi(3) * 12.0) as u64;
            if t == dominant {
                c += rng.random_range(5..40);
            }
            if c > 0 {
                lm.observe(ctx.clone(), TokenId(t as u32), c)
                    .expect("context width");
            }
        }
    }
    lm
}

/// A pair of unrelated random models sharing a vocabulary of `vocab_size`
/// tokens (the last one is eos).
pub fn random_pair(vocab_size: usize, seed: u64) -> (NgramLM, NgramLM) {
    let vocab = Vocabulary::new(vocab_size, vocab_size as u32 - 1).expect("vocab size >= 2");
    let small_order = 1 + (seed % 2) as usize;
    let large_order = 2 + (seed % 2) as usize;
    (
        random_ngram(&vocab, small_order, seed.wrapping_mul(2)),
        random_ngram(&vocab, large_order, seed.wrapping_mul(2) + 1),
    )
}

/// Draws `count` sequences from `model` by plain sampling.
pub fn sample_corpus(
    model: &dyn LanguageModel,
    count: usize,
    max_len: usize,
    seed: u64,
) -> Vec<Vec<TokenId>> {
    let prompts = vec![Vec::new(); count];
    generate_corpus(model, &prompts, &Sampler::temperature(1.0, seed), max_len)
        .expect("sampling from a valid model")
}

/// First `len` tokens of each sequence that has at least `len + 1` tokens.
fn prefixes(corpus: &[Vec<TokenId>], len: usize, eos: TokenId) -> Vec<Vec<TokenId>> {
    corpus
        .iter()
        .filter(|s| s.len() > len && !s[..len].contains(&eos))
        .map(|s| s[..len].to_vec())
        .collect()
}

/// Gold generator, a well-trained large model and an under-trained small
/// model on an 8-token vocabulary.
///
/// The large model is a trigram fit on 1500 gold samples; the small model
/// is a bigram fit on 150 of them, so the large model has lower held-out
/// perplexity.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub vocab: Vocabulary,
    pub gold: NgramLM,
    pub large: NgramLM,
    pub small: NgramLM,
    /// Held-out gold sequences.
    pub heldout: Vec<Vec<TokenId>>,
    /// Two-token prompts taken from held-out gold samples.
    pub prompts: Vec<Vec<TokenId>>,
}

impl SyntheticTask {
    pub const MAX_LEN: usize = 16;

    pub fn generate(seed: u64) -> Self {
        let vocab = Vocabulary::new(8, 7).expect("static vocabulary");
        let gold = random_ngram(&vocab, 3, seed ^ 0x9e37_79b9);
        let train = sample_corpus(&gold, 1500, Self::MAX_LEN, seed.wrapping_mul(31));
        let large = fit_ngram(&train, &vocab, 3, 0.1).expect("non-empty corpus");
        let small = fit_ngram(&train[..150], &vocab, 2, 1.0).expect("non-empty corpus");
        let heldout = sample_corpus(&gold, 200, Self::MAX_LEN, seed.wrapping_mul(31) + 7);
        let mut prompts = prefixes(&heldout, 2, vocab.eos());
        prompts.truncate(12);
        Self {
            vocab,
            gold,
            large,
            small,
            heldout,
            prompts,
        }
    }
}

/// The "two phrasings" setup: a small model trained on text that says
/// `hard` where the large model says `difficult`.
///
/// Tokens `0..=5` are shared content, `6` is `hard`, `7` is `difficult` and
/// `8` is eos. After the slot token `2` the original phrasing chain emits
/// `hard` and the large model's chain emits `difficult`; all other
/// transitions are shared.
#[derive(Debug, Clone)]
pub struct TwoPhrasingTask {
    pub vocab: Vocabulary,
    pub original_corpus: Vec<Vec<TokenId>>,
    pub large: NgramLM,
    pub original_small: NgramLM,
    pub train_prompts: Vec<Vec<TokenId>>,
    pub heldout_prompts: Vec<Vec<TokenId>>,
}

impl TwoPhrasingTask {
    pub const SLOT: TokenId = TokenId(2);
    pub const HARD: TokenId = TokenId(6);
    pub const DIFFICULT: TokenId = TokenId(7);
    pub const MAX_LEN: usize = 14;

    pub fn generate(seed: u64) -> Self {
        let vocab = Vocabulary::from_symbols(
            vec![
                "we",
                "writing",
                "is",
                "very",
                "and",
                "fun",
                "hard",
                "difficult",
                "<eos>",
            ],
            "<eos>",
        )
        .expect("static vocabulary");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let content = 6;
        let eos = vocab.eos();

        // Shared transition weights over content tokens and eos.
        let mut rows: Vec<Vec<u64>> = Vec::new();
        for _ in 0..=content {
            let mut row = vec![0u64; vocab.size()];
            for slot in row.iter_mut().take(content) {
                *slot = rng.random_range(0..6);
            }
            row[rng.random_range(0..content)] += rng.random_range(10..30);
            row[Self::SLOT.index()] += rng.random_range(0..12);
            row[eos.index()] = rng.random_range(1..5);
            rows.push(row);
        }
        let synonym_row = rows[rng.random_range(0..=content)].clone();

        let chain = |synonym: TokenId| {
            let mut lm = NgramLM::empty(vocab.clone(), 2, 0.01).expect("valid order");
            let mut put = |ctx: ContextSymbol, row: &[u64]| {
                for (t, &c) in row.iter().enumerate() {
                    if c > 0 {
                        lm.observe(vec![ctx], TokenId(t as u32), c * 10)
                            .expect("width 1");
                    }
                }
            };
            put(ContextSymbol::Bos, &rows[content]);
            for (t, row) in rows.iter().enumerate().take(content) {
                if t == Self::SLOT.index() {
                    let mut slot = vec![0u64; vocab.size()];
                    slot[synonym.index()] = 90;
                    slot[0] = 5;
                    slot[3] = 5;
                    put(ContextSymbol::Token(TokenId(t as u32)), &slot);
                } else {
                    put(ContextSymbol::Token(TokenId(t as u32)), row);
                }
            }
            put(ContextSymbol::Token(synonym), &synonym_row);
            lm
        };
        let original_chain = chain(Self::HARD);
        let large_chain = chain(Self::DIFFICULT);

        let original_corpus =
            sample_corpus(&original_chain, 400, Self::MAX_LEN, seed.wrapping_add(1));
        let large_corpus = sample_corpus(&large_chain, 3000, Self::MAX_LEN, seed.wrapping_add(2));
        let large = fit_ngram(&large_corpus, &vocab, 2, 0.1).expect("non-empty corpus");
        let original_small = fit_ngram(&original_corpus, &vocab, 2, 1.0).expect("non-empty corpus");

        let mut train_prompts: Vec<Vec<TokenId>> =
            (0..content as u32).map(|t| vec![TokenId(t)]).collect();
        train_prompts.push(Vec::new());
        train_prompts.extend(prefixes(&large_corpus[..200], 2, eos).into_iter().take(40));
        let fresh = sample_corpus(&large_chain, 60, Self::MAX_LEN, seed.wrapping_add(3));
        let mut heldout_prompts = prefixes(&fresh, 1, eos);
        heldout_prompts.extend(prefixes(&fresh, 2, eos));
        heldout_prompts.truncate(20);

        Self {
            vocab,
            original_corpus,
            large,
            original_small,
            train_prompts,
            heldout_prompts,
        }
    }
}

/// Mean rollback distance between `small`'s greedy token and `large`'s
/// distribution, over every prefix of `large`'s greedy continuations of
/// `prompts`.
pub fn mean_greedy_distance(
    small: &dyn LanguageModel,
    large: &dyn LanguageModel,
    prompts: &[Vec<TokenId>],
    max_len: usize,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for prompt in prompts {
        let out = vanilla_decode(large, prompt, &Sampler::greedy(), max_len)
            .expect("valid prompt")
            .sequence;
        let full: Vec<TokenId> = prompt.iter().chain(&out).copied().collect();
        for i in prompt.len()..full.len() {
            let ctx = &full[..i];
            let chosen = small.score_next(ctx).expect("valid context").argmax();
            total += distance(chosen, &large.score_next(ctx).expect("valid context")).value();
            count += 1;
        }
    }
    total / count.max(1) as f64
}

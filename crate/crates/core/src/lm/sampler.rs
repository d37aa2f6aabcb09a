//! Token sampling strategies.
//!
//! Every call to [`Sampler::sample`] consumes exactly one uniform draw from the
//! run's generator, whatever the kind, so two runs with the same seed and the
//! same sequence of sample calls see the same draws. The draw is mapped to a
//! token by inverse CDF over the *warped* distribution (see
//! [`Sampler::warp`]), scanning token ids in ascending order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProbDist, TokenId};
use crate::error::{Error, Result};

/// The seeded generator owned by a single decode run.
pub type DecodeRng = ChaCha8Rng;

/// Slack for floating-point accumulation when testing nucleus mass.
const NUCLEUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    Greedy,
    Nucleus { p: f64 },
    Temperature { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    #[serde(flatten)]
    pub kind: SamplerKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Sampler {
    fn default() -> Self {
        Self::greedy()
    }
}

impl Sampler {
    pub fn greedy() -> Self {
        Self {
            kind: SamplerKind::Greedy,
            seed: 0,
        }
    }

    pub fn nucleus(p: f64, seed: u64) -> Self {
        Self {
            kind: SamplerKind::Nucleus { p },
            seed,
        }
    }

    pub fn temperature(t: f64, seed: u64) -> Self {
        Self {
            kind: SamplerKind::Temperature { t },
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn is_greedy(&self) -> bool {
        matches!(self.kind, SamplerKind::Greedy)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SamplerKind::Greedy => Ok(()),
            SamplerKind::Nucleus { p } if p > 0.0 && p <= 1.0 => Ok(()),
            SamplerKind::Nucleus { p } => Err(Error::Config(format!(
                "nucleus p must lie in (0, 1], got {p}"
            ))),
            SamplerKind::Temperature { t } if t > 0.0 && t.is_finite() => Ok(()),
            SamplerKind::Temperature { t } => Err(Error::Config(format!(
                "temperature must be positive and finite, got {t}"
            ))),
        }
    }

    pub fn rng(&self) -> DecodeRng {
        DecodeRng::seed_from_u64(self.seed)
    }

    /// The distribution this sampler actually draws from: one-hot at the
    /// argmax for greedy, the renormalized nucleus, or `probs^(1/t)`
    /// renormalized.
    pub fn warp(&self, dist: &ProbDist) -> ProbDist {
        match self.kind {
            SamplerKind::Greedy => ProbDist::one_hot(dist.len(), dist.argmax()),
            SamplerKind::Nucleus { p } => {
                let mut weights = vec![0.0; dist.len()];
                for t in nucleus_support(dist, p) {
                    weights[t.index()] = dist.prob(t);
                }
                ProbDist::from_weights(weights).expect("nucleus support carries mass")
            }
            SamplerKind::Temperature { t } => {
                let max_ln = dist.max_prob().ln();
                let weights = dist
                    .probs()
                    .iter()
                    .map(|&p| {
                        if p > 0.0 {
                            ((p.ln() - max_ln) / t).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                ProbDist::from_weights(weights).expect("argmax has positive weight")
            }
        }
    }

    pub fn sample(&self, dist: &ProbDist, rng: &mut DecodeRng) -> TokenId {
        let u: f64 = rng.random();
        self.sample_with_uniform(dist, u)
    }

    /// Deterministic core of [`Sampler::sample`] for a given draw `u` in `[0, 1)`.
    pub fn sample_with_uniform(&self, dist: &ProbDist, u: f64) -> TokenId {
        match self.kind {
            SamplerKind::Greedy => dist.argmax(),
            _ => inverse_cdf(&self.warp(dist), u),
        }
    }
}

/// Smallest set of tokens, taken in descending-probability order (ties to
/// the lower id), whose cumulative mass reaches `p`. Returned in that order.
pub fn nucleus_support(dist: &ProbDist, p: f64) -> Vec<TokenId> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    let probs = dist.probs();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut support = Vec::new();
    let mut mass = 0.0;
    for i in order {
        if probs[i] <= 0.0 {
            break;
        }
        support.push(TokenId(i as u32));
        mass += probs[i];
        if mass >= p - NUCLEUS_SLACK {
            break;
        }
    }
    support
}

/// First token id whose cumulative probability exceeds `u`.
pub fn inverse_cdf(dist: &ProbDist, u: f64) -> TokenId {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if u < cum {
                return TokenId(i as u32);
            }
        }
    }
    TokenId(last_positive as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(p: &[f64]) -> ProbDist {
        ProbDist::new(p.to_vec()).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let s = Sampler::greedy();
        assert_eq!(
            s.sample_with_uniform(&d(&[0.1, 0.8, 0.1]), 0.99),
            TokenId(1)
        );
        assert_eq!(
            s.sample_with_uniform(&d(&[0.45, 0.45, 0.1]), 0.99),
            TokenId(0)
        );
    }

    #[test]
    fn nucleus_example_by_hand() {
        // 0.7 < 0.8 so token 1 joins; support {0, 1} renormalizes to [7/9, 2/9].
        let dist = d(&[0.7, 0.2, 0.1]);
        assert_eq!(nucleus_support(&dist, 0.8), vec![TokenId(0), TokenId(1)]);
        let s = Sampler::nucleus(0.8, 0);
        let warped = s.warp(&dist);
        assert!((warped.probs()[0] - 7.0 / 9.0).abs() < 1e-15);
        assert!((warped.probs()[1] - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(warped.probs()[2], 0.0);
        assert_eq!(s.sample_with_uniform(&dist, 0.5), TokenId(0));
        assert_eq!(s.sample_with_uniform(&dist, 0.8), TokenId(1));
        assert_eq!(s.sample_with_uniform(&dist, 0.999_999), TokenId(1));
    }

    #[test]
    fn nucleus_one_keeps_everything_with_mass() {
        let dist = d(&[0.5, 0.0, 0.5]);
        assert_eq!(nucleus_support(&dist, 1.0), vec![TokenId(0), TokenId(2)]);
    }

    #[test]
    fn temperature_sharpens_and_flattens() {
        let dist = d(&[0.6, 0.3, 0.1]);
        let cold = Sampler::temperature(0.5, 0).warp(&dist);
        let hot = Sampler::temperature(2.0, 0).warp(&dist);
        assert!(cold.probs()[0] > 0.6);
        assert!(hot.probs()[0] < 0.6);
        let same = Sampler::temperature(1.0, 0).warp(&dist);
        assert!(same.total_variation(&dist) < 1e-12);
        // probs^2 renormalized: [0.36, 0.09, 0.01] / 0.46
        assert!((cold.probs()[1] - 0.09 / 0.46).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Sampler::nucleus(0.0, 0).validate().is_err());
        assert!(Sampler::nucleus(1.5, 0).validate().is_err());
        assert!(Sampler::temperature(0.0, 0).validate().is_err());
        assert!(Sampler::nucleus(1.0, 0).validate().is_ok());
    }

    #[test]
    fn temperature_one_matches_source_empirically() {
        let dist = d(&[0.5, 0.25, 0.15, 0.1]);
        let s = Sampler::temperature(1.0, 1234);
        let mut rng = s.rng();
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[s.sample(&dist, &mut rng).index()] += 1;
        }
        let empirical = ProbDist::from_weights(counts.iter().map(|&c| c as f64).collect()).unwrap();
        assert!(empirical.total_variation(&dist) < 0.02);
    }

    #[test]
    fn seeded_draws_are_reproducible() {
        let dist = d(&[0.2, 0.3, 0.5]);
        let s = Sampler::nucleus(0.9, 7);
        let run = || {
            let mut rng = s.rng();
            (0..50)
                .map(|_| s.sample(&dist, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sampler_json_shape() {
        let s: Sampler = serde_json::from_str(r#"{"kind":"nucleus","p":0.8,"seed":3}"#).unwrap();
        assert_eq!(s, Sampler::nucleus(0.8, 3));
        let g: Sampler = serde_json::from_str(r#"{"kind":"greedy"}"#).unwrap();
        assert_eq!(g, Sampler::greedy());
    }

    fn arb_dist() -> impl Strategy<Value = ProbDist> {
        prop::collection::vec(0.0f64..1.0, 2..8)
            .prop_filter_map("zero mass", |w| ProbDist::from_weights(w).ok())
    }

    proptest! {
        #[test]
        fn nucleus_support_is_minimal(dist in arb_dist(), p in 0.05f64..1.0) {
            let support = nucleus_support(&dist, p);
            let mass: f64 = support.iter().map(|&t| dist.prob(t)).sum();
            prop_assert!(mass >= p - NUCLEUS_SLACK);
            let last = *support.last().unwrap();
            prop_assert!(mass - dist.prob(last) < p);
        }

        #[test]
        fn sampled_token_lies_in_support(dist in arb_dist(), p in 0.05f64..1.0, u in 0.0f64..1.0) {
            let token = Sampler::nucleus(p, 0).sample_with_uniform(&dist, u);
            prop_assert!(nucleus_support(&dist, p).contains(&token));
        }

        #[test]
        fn greedy_is_argmax(dist in arb_dist(), u in 0.0f64..1.0) {
            prop_assert_eq!(Sampler::greedy().sample_with_uniform(&dist, u), dist.argmax());
        }
    }
}

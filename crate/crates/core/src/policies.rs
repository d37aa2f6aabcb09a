//! Fallback and rollback decisions.
//!
//! The small model hands control to the large model when its most likely
//! token has probability strictly below `alpha_fb`. After the large model has
//! scored the pending window, the first small-model token whose hard-label
//! cross-entropy against the large model's distribution strictly exceeds
//! `alpha_rb` is rolled back together with everything after it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{ProbDist, TokenId, PROB_FLOOR};

/// Default cap on consecutive small-model tokens before a forced fallback.
pub const DEFAULT_WINDOW_CAP: usize = 10;

/// Largest value [`distance`] can return, `-ln(PROB_FLOOR)`.
pub fn max_distance() -> f64 {
    -PROB_FLOOR.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackMode {
    /// Fall back when the small model's max probability is below `alpha_fb`.
    Confidence,
    /// Fall back unconditionally after exactly `k` small-model tokens.
    FixedWindow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub alpha_fb: f64,
    pub alpha_rb: f64,
    #[serde(default = "default_window_cap")]
    pub window_cap: usize,
    #[serde(default = "default_true")]
    pub rollback_enabled: bool,
    #[serde(default = "default_mode")]
    pub fallback_mode: FallbackMode,
    /// Verify a small-model eos with the large model before stopping.
    #[serde(default)]
    pub verify_eos: bool,
}

fn default_window_cap() -> usize {
    DEFAULT_WINDOW_CAP
}

fn default_true() -> bool {
    true
}

fn default_mode() -> FallbackMode {
    FallbackMode::Confidence
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self::new(0.5, 5.0)
    }
}

impl PolicyConfig {
    pub fn new(alpha_fb: f64, alpha_rb: f64) -> Self {
        Self {
            alpha_fb,
            alpha_rb,
            window_cap: DEFAULT_WINDOW_CAP,
            rollback_enabled: true,
            fallback_mode: FallbackMode::Confidence,
            verify_eos: false,
        }
    }

    pub fn with_window_cap(self, window_cap: usize) -> Self {
        Self { window_cap, ..self }
    }

    pub fn without_rollback(self) -> Self {
        Self {
            rollback_enabled: false,
            ..self
        }
    }

    pub fn with_fixed_window(self, k: usize) -> Self {
        Self {
            fallback_mode: FallbackMode::FixedWindow(k),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_fb.is_nan() || self.alpha_fb < 0.0 {
            return Err(Error::Config(format!(
                "alpha_fb must be >= 0, got {}",
                self.alpha_fb
            )));
        }
        if self.alpha_rb.is_nan() || self.alpha_rb < 0.0 {
            return Err(Error::Config(format!(
                "alpha_rb must be >= 0, got {}",
                self.alpha_rb
            )));
        }
        if self.window_cap == 0 {
            return Err(Error::Config("window_cap must be at least 1".into()));
        }
        if self.fallback_mode == FallbackMode::FixedWindow(0) {
            return Err(Error::Config("fixed window must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of consecutive small-model tokens allowed before a fallback
    /// is forced.
    pub fn effective_window(&self) -> usize {
        match self.fallback_mode {
            FallbackMode::Confidence => self.window_cap,
            FallbackMode::FixedWindow(k) => k,
        }
    }

    /// `alpha_fb == 0` in confidence mode: the large model is never engaged,
    /// so the window cap does not apply either.
    pub fn small_only(&self) -> bool {
        self.fallback_mode == FallbackMode::Confidence && self.alpha_fb <= 0.0
    }
}

/// Rollback distance in nats: `-ln(max(p_large(chosen), 1e-12))`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distance(pub f64);

impl Distance {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// True iff the small model's max probability is strictly below `alpha_fb`.
/// Always false under a fixed-window fallback mode.
pub fn should_fallback(small_dist: &ProbDist, config: &PolicyConfig) -> bool {
    match config.fallback_mode {
        FallbackMode::Confidence => small_dist.max_prob() < config.alpha_fb,
        FallbackMode::FixedWindow(_) => false,
    }
}

pub fn distance(chosen: TokenId, large_dist: &ProbDist) -> Distance {
    // -ln(1) is -0.0; normalize the sign.
    Distance(-large_dist.ln_prob(chosen) + 0.0)
}

pub fn distances(tokens: &[TokenId], large_dists: &[ProbDist]) -> Vec<Distance> {
    tokens
        .iter()
        .zip(large_dists)
        .map(|(&t, d)| distance(t, d))
        .collect()
}

/// Index of the first pending token whose distance strictly exceeds
/// `alpha_rb`, or `None`. Always `None` when rollback is disabled.
///
/// `large_dists[i]` must be the large model's distribution for the position
/// at which `pending_tokens[i]` was emitted.
pub fn find_rollback_position(
    pending_tokens: &[TokenId],
    large_dists: &[ProbDist],
    config: &PolicyConfig,
) -> Option<usize> {
    assert_eq!(
        pending_tokens.len(),
        large_dists.len(),
        "one large-model distribution per pending token"
    );
    if !config.rollback_enabled {
        return None;
    }
    pending_tokens
        .iter()
        .zip(large_dists)
        .position(|(&t, d)| distance(t, d).0 > config.alpha_rb)
}

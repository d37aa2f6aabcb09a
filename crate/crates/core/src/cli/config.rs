use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::baselines::{speculative_decode, SpecConfig};
use crate::costmodel::ModelDescriptor;
use crate::engine::{
    ablation_decode, bild_decode, oracle_blend_decode, vanilla_decode_as, Ablation, DecodeResult,
    Provenance,
};
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, Sampler, TokenId, Vocabulary};
use crate::policies::PolicyConfig;
use crate::toymodels::{NgramLM, TableLM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Table,
    Ngram,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" => Ok(Self::Table),
            "ngram" => Ok(Self::Ngram),
            _ => Err(format!(
                "unknown model kind `{s}` (expected table or ngram)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub path: PathBuf,
    /// Vocabulary file for this model; defaults to the experiment's.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    /// Preset name (`t5-small`, ...) or descriptor JSON path.
    #[serde(default)]
    pub descriptor: Option<String>,
}

pub fn load_model(
    kind: ModelKind,
    path: &Path,
    vocab: Vocabulary,
) -> Result<Box<dyn LanguageModel>> {
    Ok(match kind {
        ModelKind::Table => Box::new(TableLM::load(path, vocab)?),
        ModelKind::Ngram => Box::new(NgramLM::load(path, vocab)?),
    })
}

/// Decoding strategy, written as `bild`, `vanilla_small`, `vanilla_large`,
/// `no_rollback`, `fixed_window(k)`, `speculative(k)` or `oracle_blend(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Strategy {
    #[default]
    Bild,
    VanillaSmall,
    VanillaLarge,
    NoRollback,
    FixedWindow(usize),
    Speculative(usize),
    OracleBlend(f64),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Bild => write!(f, "bild"),
            Strategy::VanillaSmall => write!(f, "vanilla_small"),
            Strategy::VanillaLarge => write!(f, "vanilla_large"),
            Strategy::NoRollback => write!(f, "no_rollback"),
            Strategy::FixedWindow(k) => write!(f, "fixed_window({k})"),
            Strategy::Speculative(k) => write!(f, "speculative({k})"),
            Strategy::OracleBlend(t) => write!(f, "oracle_blend({t})"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let arg = |name: &str| {
            s.strip_prefix(name)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
        };
        let bad = || format!("bad strategy `{s}`");
        Ok(match s {
            "bild" => Strategy::Bild,
            "vanilla_small" => Strategy::VanillaSmall,
            "vanilla_large" => Strategy::VanillaLarge,
            "no_rollback" => Strategy::NoRollback,
            _ => {
                if let Some(k) = arg("fixed_window") {
                    Strategy::FixedWindow(k.trim().parse().map_err(|_| bad())?)
                } else if let Some(k) = arg("speculative") {
                    Strategy::Speculative(k.trim().parse().map_err(|_| bad())?)
                } else if let Some(t) = arg("oracle_blend") {
                    Strategy::OracleBlend(t.trim().parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl Strategy {
    pub fn run(
        &self,
        small: &dyn LanguageModel,
        large: &dyn LanguageModel,
        policy: &PolicyConfig,
        sampler: &Sampler,
        prompt: &[TokenId],
        max_len: usize,
    ) -> Result<DecodeResult> {
        match *self {
            Strategy::Bild => bild_decode(small, large, policy, sampler, prompt, max_len),
            Strategy::VanillaSmall => {
                crate::engine::check_pair(small, large)?;
                vanilla_decode_as(small, Provenance::Small, prompt, sampler, max_len)
            }
            Strategy::VanillaLarge => {
                crate::engine::check_pair(small, large)?;
                vanilla_decode_as(large, Provenance::Large, prompt, sampler, max_len)
            }
            Strategy::NoRollback => ablation_decode(
                Ablation::NoRollback,
                small,
                large,
                policy,
                sampler,
                prompt,
                max_len,
            ),
            Strategy::FixedWindow(k) => ablation_decode(
                Ablation::FixedWindow(k),
                small,
                large,
                policy,
                sampler,
                prompt,
                max_len,
            ),
            Strategy::Speculative(k) => {
                speculative_decode(small, large, &SpecConfig::new(k, *sampler), prompt, max_len)
            }
            Strategy::OracleBlend(t) => {
                oracle_blend_decode(small, large, t, sampler, prompt, max_len).map(|o| o.result)
            }
        }
    }
}

/// Accepts JSON numbers or strings such as `"inf"`.
fn thresholds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Value {
        Num(f64),
        Text(String),
    }
    Vec::<Value>::deserialize(d)?
        .into_iter()
        .map(|v| match v {
            Value::Num(x) => Ok(x),
            Value::Text(s) => s
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("bad threshold `{s}`"))),
        })
        .collect()
}

fn default_fb_grid() -> Vec<f64> {
    vec![0.5, 0.6, 0.7, 0.8, 0.9]
}

fn default_rb_grid() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 5.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default = "default_fb_grid", deserialize_with = "thresholds")]
    pub alpha_fb: Vec<f64>,
    #[serde(default = "default_rb_grid", deserialize_with = "thresholds")]
    pub alpha_rb: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            alpha_fb: default_fb_grid(),
            alpha_rb: default_rb_grid(),
        }
    }
}

impl SweepGrid {
    /// Cartesian product in row-major order (`alpha_fb` outer).
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.alpha_fb
            .iter()
            .flat_map(|&fb| self.alpha_rb.iter().map(move |&rb| (fb, rb)))
            .collect()
    }
}

fn default_max_len() -> usize {
    16
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment, read from a JSON file. Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vocab: PathBuf,
    pub small_model: ModelSpec,
    pub large_model: ModelSpec,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sampler: Sampler,
    pub prompts: PathBuf,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub strategy: Strategy,
    /// Strategies for `compare`.
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub sweep: SweepGrid,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.vocab);
        join(&mut self.prompts);
        join(&mut self.out);
        for m in [&mut self.small_model, &mut self.large_model] {
            join(&mut m.path);
            if let Some(v) = m.vocab.as_mut() {
                join(v);
            }
            if let Some(d) = m.descriptor.as_mut() {
                if ModelDescriptor::preset(d).is_none() && Path::new(d).is_relative() {
                    *d = base.join(&*d).to_string_lossy().into_owned();
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.sampler.validate()?;
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Flag overrides shared by the experiment commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub alpha_fb: Option<f64>,
    #[arg(long)]
    pub alpha_rb: Option<f64>,
    #[arg(long)]
    pub window_cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(x) = self.alpha_fb {
            cfg.policy.alpha_fb = x;
        }
        if let Some(x) = self.alpha_rb {
            cfg.policy.alpha_rb = x;
        }
        if let Some(x) = self.window_cap {
            cfg.policy.window_cap = x;
        }
        if let Some(x) = self.seed {
            cfg.sampler.seed = x;
        }
        if let Some(x) = self.strategy {
            cfg.strategy = x;
        }
        if let Some(x) = self.max_len {
            cfg.max_len = x;
        }
        if let Some(x) = &self.out {
            cfg.out = x.clone();
        }
    }
}

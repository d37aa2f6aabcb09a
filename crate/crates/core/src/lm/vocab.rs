use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbol that marks end-of-sequence in a vocabulary file.
pub const EOS_SYMBOL: &str = "<eos>";

/// Dense index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(id: u32) -> Self {
        TokenId(id)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A finite token vocabulary with a designated end-of-sequence id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    size: usize,
    eos: TokenId,
    symbols: Option<Vec<String>>,
}

impl Vocabulary {
    pub fn new(size: usize, eos: u32) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidInput(format!(
                "vocabulary needs at least 2 tokens, got {size}"
            )));
        }
        if eos as usize >= size {
            return Err(Error::InvalidInput(format!(
                "eos id {eos} outside vocabulary of size {size}"
            )));
        }
        Ok(Self {
            size,
            eos: TokenId(eos),
            symbols: None,
        })
    }

    /// Builds a vocabulary from display symbols; `eos_symbol` must be among them.
    pub fn from_symbols<S: Into<String>>(symbols: Vec<S>, eos_symbol: &str) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        let eos = symbols
            .iter()
            .position(|s| s == eos_symbol)
            .ok_or_else(|| {
                Error::InvalidInput(format!("vocabulary has no `{eos_symbol}` symbol"))
            })?;
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::InvalidInput(format!(
                    "vocabulary symbol {i} ({s:?}) is empty or contains whitespace"
                )));
            }
            if symbols[..i].contains(s) {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary symbol {s:?}"
                )));
            }
        }
        let mut vocab = Self::new(symbols.len(), eos as u32)?;
        vocab.symbols = Some(symbols);
        Ok(vocab)
    }

    /// Reads a vocabulary file: one symbol per line, line number = id, and
    /// one line must be `<eos>`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut symbols = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let sym = line.trim();
            if sym.is_empty() {
                return Err(Error::parse(path, i + 1, "blank line in vocabulary file"));
            }
            symbols.push(sym.to_string());
        }
        Self::from_symbols(symbols, EOS_SYMBOL).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn symbols(&self) -> Option<&[String]> {
        self.symbols.as_deref()
    }

    /// Same size and eos id. Display symbols are ignored.
    pub fn is_compatible(&self, other: &Vocabulary) -> bool {
        self.size == other.size && self.eos == other.eos
    }

    pub fn describe(&self) -> String {
        format!("vocab size {} (eos {})", self.size, self.eos)
    }

    pub fn check(&self, token: TokenId) -> Result<()> {
        if token.index() < self.size {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                token: token.0,
                size: self.size,
            })
        }
    }

    pub fn check_all(&self, tokens: &[TokenId]) -> Result<()> {
        tokens.iter().try_for_each(|&t| self.check(t))
    }

    pub fn symbol(&self, token: TokenId) -> String {
        match &self.symbols {
            Some(s) if token.index() < s.len() => s[token.index()].clone(),
            _ => token.0.to_string(),
        }
    }

    /// Resolves a symbol, falling back to a numeric id.
    pub fn parse_token(&self, text: &str) -> Option<TokenId> {
        if let Some(symbols) = &self.symbols {
            if let Some(i) = symbols.iter().position(|s| s == text) {
                return Some(TokenId(i as u32));
            }
        }
        text.parse::<u32>()
            .ok()
            .map(TokenId)
            .filter(|t| t.index() < self.size)
    }

    /// Parses a whitespace-separated token line; a lone `-` is the empty sequence.
    pub fn parse_sequence(&self, line: &str) -> std::result::Result<Vec<TokenId>, String> {
        let line = line.trim();
        if line == "-" {
            return Ok(Vec::new());
        }
        line.split_whitespace()
            .map(|w| {
                self.parse_token(w)
                    .ok_or_else(|| format!("unknown token `{w}`"))
            })
            .collect()
    }

    pub fn render(&self, tokens: &[TokenId]) -> String {
        if tokens.is_empty() {
            return "-".to_string();
        }
        tokens
            .iter()
            .map(|&t| self.symbol(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Reads a corpus (or prompts) file: one sequence per line, blank lines skipped.
pub fn read_sequences(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            vocab
                .parse_sequence(line)
                .map_err(|msg| Error::parse(path, i + 1, msg))?,
        );
    }
    Ok(out)
}

pub fn format_sequences(sequences: &[Vec<TokenId>], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for seq in sequences {
        out.push_str(&vocab.render(seq));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_vocabularies() {
        assert!(Vocabulary::new(1, 0).is_err());
        assert!(Vocabulary::new(3, 3).is_err());
        assert!(Vocabulary::from_symbols(vec!["a", "b"], EOS_SYMBOL).is_err());
        assert!(Vocabulary::from_symbols(vec!["a", "a", EOS_SYMBOL], EOS_SYMBOL).is_err());
    }

    #[test]
    fn parses_symbols_and_ids() {
        let v = Vocabulary::from_symbols(vec!["a", "b", EOS_SYMBOL], EOS_SYMBOL).unwrap();
        assert_eq!(v.eos(), TokenId(2));
        assert_eq!(
            v.parse_sequence("a b <eos>").unwrap(),
            vec![TokenId(0), TokenId(1), TokenId(2)]
        );
        assert_eq!(
            v.parse_sequence("1 0").unwrap(),
            vec![TokenId(1), TokenId(0)]
        );
        assert_eq!(v.parse_sequence("-").unwrap(), vec![]);
        assert!(v.parse_sequence("a z").is_err());
        assert!(v.parse_sequence("7").is_err());
        assert_eq!(v.render(&[TokenId(1), TokenId(2)]), "b <eos>");
    }

    #[test]
    fn check_flags_out_of_range() {
        let v = Vocabulary::new(3, 2).unwrap();
        assert!(v.check(TokenId(2)).is_ok());
        assert!(matches!(
            v.check(TokenId(3)),
            Err(Error::TokenOutOfRange { token: 3, size: 3 })
        ));
    }
}

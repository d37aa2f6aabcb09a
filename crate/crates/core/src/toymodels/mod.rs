//! Deterministic toy language models, corpus fitting and small-model
//! alignment.

mod align;
mod ngram;
pub mod synthetic;
mod table;

pub use align::{align_small, generate_corpus, Alignment, CalibrationSet};
pub use ngram::{fit_ngram, ContextSymbol, NgramLM};
pub use table::TableLM;

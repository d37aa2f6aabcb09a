//! Writes a small synthetic experiment (vocabulary, two n-gram models,
//! prompts and a config) into the given directory.
//!
//!     cargo run --example write_demo -- data/demo

use std::fs;
use std::path::PathBuf;

use bild::lm::{format_sequences, Vocabulary};
use bild::toymodels::synthetic::SyntheticTask;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "data/demo".into()),
    );
    fs::create_dir_all(&dir)?;
    let task = SyntheticTask::generate(7);
    let symbols: Vec<String> = (0..7)
        .map(|i| format!("t{i}"))
        .chain(["<eos>".into()])
        .collect();
    let vocab = Vocabulary::from_symbols(symbols.clone(), "<eos>")?;
    fs::write(dir.join("vocab.txt"), symbols.join("\n") + "\n")?;
    fs::write(dir.join("small.json"), task.small.to_json())?;
    fs::write(dir.join("large.json"), task.large.to_json())?;
    fs::write(
        dir.join("prompts.txt"),
        format_sequences(&task.prompts[..6], &vocab),
    )?;
    fs::write(
        dir.join("experiment.json"),
        r#"{
  "vocab": "vocab.txt",
  "small_model": {"kind": "ngram", "path": "small.json", "descriptor": "t5-small"},
  "large_model": {"kind": "ngram", "path": "large.json", "descriptor": "t5-large"},
  "policy": {"alpha_fb": 0.3, "alpha_rb": 2.0, "window_cap": 10},
  "sampler": {"kind": "greedy"},
  "prompts": "prompts.txt",
  "max_len": 16,
  "out": "out",
  "strategy": "bild",
  "strategies": ["bild", "vanilla_large", "vanilla_small", "speculative(4)", "no_rollback", "fixed_window(4)"],
  "sweep": {"alpha_fb": [0.2, 0.3, 0.5, 0.7], "alpha_rb": [1, 2, 3, "inf"]}
}
"#,
    )?;
    println!("wrote demo experiment to {}", dir.display());
    Ok(())
}

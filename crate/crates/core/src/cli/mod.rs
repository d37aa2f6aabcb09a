//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when the two models' vocabularies differ,
//! 1 for every other error (including bad arguments).

mod config;
mod experiment;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{
    load_model, ExperimentConfig, ModelKind, ModelSpec, Overrides, Strategy, SweepGrid,
};
pub use experiment::{Experiment, PromptRun};
pub use output::{write_atomic, Staged};

use crate::costmodel::{
    synthesize_trace, tally_trace, ModelDescriptor, Roofline, SyntheticRates, TallyOptions,
};
use crate::engine::trace_from_jsonl;
use crate::error::{Error, Result};
use crate::lm::{format_sequences, read_sequences, Vocabulary};
use crate::metrics::{pareto_front, write_rows, SummaryRow};
use crate::policies::DEFAULT_WINDOW_CAP;
use crate::toymodels::{align_small, fit_ngram};

#[derive(Debug, Parser)]
#[command(
    name = "bild",
    version,
    about = "Big/little collaborative decoding experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode every prompt with one strategy; write traces and summaries.
    Decode(ExperimentArgs),
    /// Run the alpha_fb x alpha_rb grid; write sweep.csv and pareto.csv.
    Sweep(ExperimentArgs),
    /// Run several strategies on the same prompts; write compare.csv.
    Compare(CompareArgs),
    /// Cost-model tally of a trace file or of a synthesized trace.
    Cost(CostArgs),
    /// Fit an n-gram model to a corpus.
    Fit(FitArgs),
    /// Refit a small n-gram on a large model's greedy outputs.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment JSON file.
    #[arg(long, short)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated strategies; replaces the config's list.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Trace JSONL file produced by `decode`.
    #[arg(long, conflicts_with = "synthetic_tokens")]
    pub trace: Option<PathBuf>,
    /// Synthesize a trace of this many tokens instead of reading one.
    #[arg(long)]
    pub synthetic_tokens: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub fallback_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rollback_rate: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW_CAP)]
    pub window_cap: usize,
    /// Small model descriptor: preset name or JSON file.
    #[arg(long, default_value = "t5-small")]
    pub small: String,
    #[arg(long, default_value = "t5-large")]
    pub large: String,
    #[arg(long, default_value_t = 0)]
    pub prompt_len: usize,
    #[arg(long)]
    pub peak_flops: Option<f64>,
    #[arg(long)]
    pub peak_bandwidth: Option<f64>,
    /// Write the tally JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// One token sequence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub large: PathBuf,
    #[arg(long, default_value = "ngram")]
    pub large_kind: ModelKind,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the calibration sequences (prompt followed by output).
    #[arg(long)]
    pub calibration_out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::VocabMismatch { .. } => 2,
        _ => 1,
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decode(a) => cmd_decode(&load_config(&a)?),
        Command::Sweep(a) => cmd_sweep(&load_config(&a)?),
        Command::Compare(a) => {
            let mut cfg = load_config(&a.experiment)?;
            if !a.strategies.is_empty() {
                cfg.strategies = a.strategies;
            }
            cmd_compare(&cfg)
        }
        Command::Cost(a) => cmd_cost(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Align(a) => cmd_align(&a),
    }
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg);
    Ok(cfg)
}

fn prompt_id(i: usize) -> String {
    format!("prompt_{i:03}")
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    Ok(buf)
}

pub fn cmd_decode(cfg: &ExperimentConfig) -> Result<()> {
    let exp = Experiment::load(cfg.clone())?;
    let references = exp.references()?;
    let runs = exp.run(cfg.strategy, &cfg.policy)?;
    let mut staged = Staged::default();
    let mut rows = Vec::with_capacity(runs.len());
    let mut report = String::new();
    for (i, run) in runs.iter().enumerate() {
        let summary = exp.prompt_summary(run, &references[i])?;
        let id = prompt_id(i);
        staged.add(
            cfg.out.join("traces").join(format!("{id}.jsonl")),
            run.result.trace_jsonl(),
        );
        staged.add(
            cfg.out.join("summaries").join(format!("{id}.json")),
            run.result.summary_json() + "\n",
        );
        let c = run.result.counters;
        report.push_str(&format!(
            "{id}: {} tokens, {} fallbacks, {} rollbacks, agreement {:.3}, modeled speedup {:.2}x | {}\n",
            run.result.sequence.len(),
            c.fallback_count,
            c.rollback_count,
            summary.agreement.unwrap_or(0.0),
            summary.modeled_speedup.unwrap_or(1.0),
            exp.vocab.render(&run.result.sequence),
        ));
        rows.push(SummaryRow::new(
            id,
            cfg.strategy.to_string(),
            &cfg.policy,
            &summary,
        ));
    }
    staged.add(cfg.out.join("summary.csv"), csv_bytes(&rows)?);
    staged.add(cfg.out.join("report.txt"), report.clone());
    staged.commit()?;
    print!("{report}");
    Ok(())
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let grid = cfg.sweep.points();
    if grid.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let exp = Experiment::load(cfg.clone())?;
    let references = exp.references()?;
    let mut rows = Vec::with_capacity(grid.len());
    for (g, &(fb, rb)) in grid.iter().enumerate() {
        let mut policy = cfg.policy;
        policy.alpha_fb = fb;
        policy.alpha_rb = rb;
        policy.validate()?;
        let runs = exp.run(cfg.strategy, &policy)?;
        let summary = exp.group_summary(&runs, &references)?;
        rows.push(SummaryRow::new(
            format!("grid_{g:03}"),
            cfg.strategy.to_string(),
            &policy,
            &summary,
        ));
    }
    let mut staged = Staged::default();
    staged.add(cfg.out.join("sweep.csv"), csv_bytes(&rows)?);
    staged.add(cfg.out.join("pareto.csv"), csv_bytes(&pareto_front(&rows))?);
    staged.commit()?;
    println!(
        "{} grid points, {} prompts each -> {}",
        rows.len(),
        exp.prompts.len(),
        cfg.out.display()
    );
    Ok(())
}

/// A `compare.csv` row: the run summary followed by counters and cost.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
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
    pub small_calls: usize,
    pub large_calls: usize,
    pub fallback_count: usize,
    pub rollback_count: usize,
    pub tokens_discarded: usize,
    pub flops: f64,
    pub mops: f64,
    pub vanilla_mops: f64,
    pub mops_ratio: f64,
}

pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.strategies.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two strategies".into(),
        ));
    }
    let exp = Experiment::load(cfg.clone())?;
    let references = exp.references()?;
    let mut rows = Vec::with_capacity(cfg.strategies.len());
    for (s, strategy) in cfg.strategies.iter().enumerate() {
        let runs = exp.run(*strategy, &cfg.policy)?;
        let summary = exp.group_summary(&runs, &references)?;
        let mut counters = crate::engine::Counters::default();
        let (mut flops, mut mops, mut vanilla_mops) = (0.0, 0.0, 0.0);
        for r in &runs {
            counters += r.result.counters;
            flops += r.tally.bild.flops;
            mops += r.tally.bild.mops;
            vanilla_mops += r.tally.vanilla_large_equivalent.mops;
        }
        rows.push(CompareRow {
            run_id: format!("strategy_{s:02}"),
            alpha_fb: cfg.policy.alpha_fb,
            alpha_rb: cfg.policy.alpha_rb,
            window_cap: cfg.policy.window_cap,
            strategy: strategy.to_string(),
            agreement: summary.agreement,
            perplexity: summary.perplexity,
            fallback_pct: summary.fallback_pct,
            rollback_pct: summary.rollback_pct,
            modeled_speedup: summary.modeled_speedup,
            small_calls: counters.small_calls,
            large_calls: counters.large_calls,
            fallback_count: counters.fallback_count,
            rollback_count: counters.rollback_count,
            tokens_discarded: counters.tokens_discarded,
            flops,
            mops,
            vanilla_mops,
            mops_ratio: if mops > 0.0 { vanilla_mops / mops } else { 1.0 },
        });
    }
    write_atomic(&cfg.out.join("compare.csv"), &csv_bytes(&rows)?)?;
    println!(
        "{} strategies -> {}",
        rows.len(),
        cfg.out.join("compare.csv").display()
    );
    Ok(())
}

pub fn cmd_cost(a: &CostArgs) -> Result<()> {
    let trace = match (&a.trace, a.synthetic_tokens) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            trace_from_jsonl(&text)?
        }
        (None, Some(tokens)) => {
            for (name, r) in [("fallback", a.fallback_rate), ("rollback", a.rollback_rate)] {
                if !(0.0..1.0).contains(&r) {
                    return Err(Error::Config(format!(
                        "{name} rate must lie in [0, 1), got {r}"
                    )));
                }
            }
            if a.window_cap == 0 {
                return Err(Error::Config("window cap must be at least 1".into()));
            }
            synthesize_trace(&SyntheticRates {
                tokens,
                fallback_rate: a.fallback_rate,
                rollback_rate: a.rollback_rate,
                window_cap: a.window_cap,
            })
        }
        (None, None) => {
            return Err(Error::Config(
                "cost needs --trace or --synthetic-tokens".into(),
            ));
        }
    };
    let mut roofline = Roofline::default();
    if let Some(x) = a.peak_flops {
        roofline.peak_flops = x;
    }
    if let Some(x) = a.peak_bandwidth {
        roofline.peak_bandwidth = x;
    }
    let opts = TallyOptions {
        prompt_len: a.prompt_len,
        roofline,
    };
    let small = ModelDescriptor::load(&a.small)?;
    let large = ModelDescriptor::load(&a.large)?;
    let tally = tally_trace(&trace, &small, &large, &opts)?;
    let json = serde_json::to_string_pretty(&tally).expect("tally serializes") + "\n";
    match &a.out {
        Some(path) => write_atomic(path, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let corpus = read_sequences(&a.corpus, &vocab)?;
    let lm = fit_ngram(&corpus, &vocab, a.order, a.smoothing)?;
    write_atomic(&a.out, lm.to_json().as_bytes())?;
    println!(
        "fit order-{} n-gram on {} sequences -> {}",
        a.order,
        corpus.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_align(a: &AlignArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let large = load_model(a.large_kind, &a.large, vocab.clone())?;
    let prompts = read_sequences(&a.prompts, &vocab)?;
    let aligned = align_small(large.as_ref(), &prompts, a.order, a.smoothing, a.max_len)?;
    let mut staged = Staged::default();
    staged.add(&a.out, aligned.model.to_json());
    if let Some(path) = &a.calibration_out {
        staged.add(
            path,
            format_sequences(&aligned.calibration.full_sequences(), &vocab),
        );
    }
    staged.commit()?;
    println!(
        "aligned order-{} n-gram on {} calibration pairs -> {}",
        a.order,
        aligned.calibration.pairs.len(),
        a.out.display()
    );
    Ok(())
}

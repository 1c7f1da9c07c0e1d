//! The `segmil` command line: `synth`, `train`, `eval`, `highlight` and
//! `stats`.
//!
//! Settings come from a TOML file (see `RunConfig`) with command-line
//! overrides. Every command that writes files puts them under `--out`
//! together with the resolved config and a `manifest.json`.

pub mod config;
pub mod highlight;
pub mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{
    corpus_stats, generate_synthetic, load_corpus, save_corpus, Corpus, LoadOptions, SegmentLabelSpace, Split,
};
use crate::error::{Error, Result};
use crate::evaluation::{binary_report_at, three_class_report, tune_review_threshold, BootstrapConfig, ThreeClassReport};
use crate::io::{write_atomic, write_json, write_jsonl};
use crate::milnet::AggregationKind;
pub use config::{AvgAttention, DataConfig, EvalConfig, ModelConfig, ModelKind, Protocol, RunConfig};
use highlight::Format;
use pipeline::{fit, load_checkpoint, save_checkpoint, scored_items, Fitted};

#[derive(Debug, Parser)]
#[command(name = "segmil", version, about = "Segment classification from review labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with a chosen witness rate.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Witness rate in (0, 1].
        #[arg(long)]
        wr: Option<f64>,
        /// Training reviews.
        #[arg(long)]
        reviews: Option<usize>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model: Option<String>,
        /// MIL aggregation: uniform, softmax or sigmoid.
        #[arg(long)]
        agg: Option<AggregationKind>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled file.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding a checkpoint written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Bootstrap iterations for confidence intervals.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Render segment weights of a MIL checkpoint.
    Highlight {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "ansi")]
        format: Format,
        /// Output directory; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Witness statistics of a file with gold segment labels.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value = "same-as-review")]
        segment_labels: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct OutputFile {
    file: String,
    bytes: u64,
    fnv1a: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    inputs: Vec<String>,
    outputs: Vec<OutputFile>,
    config: &'a RunConfig,
}

fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Writes the resolved config and a manifest of `files` (relative to `dir`).
fn finish(dir: &Path, command: &str, config: &RunConfig, inputs: &[&Path], mut files: Vec<String>) -> Result<()> {
    write_atomic(&dir.join("config.toml"), config.to_toml()?.as_bytes())?;
    files.push("config.toml".into());
    let outputs = files
        .into_iter()
        .map(|file| {
            let path = dir.join(&file);
            let bytes = std::fs::read(&path).map_err(Error::file(&path))?;
            Ok(OutputFile {
                bytes: bytes.len() as u64,
                fnv1a: fnv1a(&bytes),
                file,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs,
        config,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_split(path: &Path, data: &DataConfig, split: Split) -> Result<Corpus> {
    load_corpus(
        path,
        LoadOptions {
            num_classes: data.num_classes,
            split,
            segment_labels: data.segment_labels,
        },
    )
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} file: set it in [data] or on the command line")))
}

pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let mut spec = config.synth.clone();
    spec.seed = config.seed;
    let data = generate_synthetic(&spec)?;
    let mut files = Vec::new();
    for (name, corpus) in [("train", &data.train), ("validation", &data.validation), ("test", &data.test)] {
        if corpus.is_empty() {
            continue;
        }
        let file = format!("{name}.jsonl");
        save_corpus(&out.join(&file), corpus)?;
        files.push(file);
    }
    if !data.test.is_empty() {
        write_json(&out.join("stats.json"), &corpus_stats(&data.test)?)?;
        files.push("stats.json".into());
    }
    finish(out, "synth", config, &[], files)
}

/// Summary of a training run, written as `summary.json`.
#[derive(Debug, Serialize)]
struct TrainSummary {
    model: &'static str,
    vocab_size: usize,
    best_epoch: Option<usize>,
    best_val_loss: Option<f64>,
    epochs: Option<usize>,
    logreg_iterations: Option<usize>,
    logreg_objective: Option<f64>,
}

pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<Fitted> {
    let train_path = require(&config.data.train, "training")?;
    let val_path = require(&config.data.validation, "validation")?;
    let train_set = load_split(train_path, &config.data, Split::Train)?;
    let validation = load_split(val_path, &config.data, Split::Validation)?;
    let fitted = fit(config.model.kind, config, &train_set, &validation)?;
    let mut files = save_checkpoint(out, &fitted)?;
    if let Some(t) = &fitted.training {
        write_jsonl(&out.join("train_log.jsonl"), &t.epochs)?;
        files.push("train_log.jsonl".into());
    }
    let summary = TrainSummary {
        model: fitted.kind.name(),
        vocab_size: fitted.vocab.len(),
        best_epoch: fitted.training.as_ref().map(|t| t.best_epoch),
        best_val_loss: fitted.training.as_ref().map(|t| t.best_val_loss),
        epochs: fitted.training.as_ref().map(|t| t.epochs.len()),
        logreg_iterations: fitted.logreg.map(|f| f.iterations),
        logreg_objective: fitted.logreg.map(|f| f.objective),
    };
    write_json(&out.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    finish(out, "train", config, &[train_path, val_path], files)?;
    Ok(fitted)
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum EvalReport {
    ThreeClass(ThreeClassReport),
    Binary(crate::evaluation::BinaryReport),
}

/// Evaluates `fitted` on `corpus` under the configured protocol.
/// `validation` is read only when the binary threshold is tuned.
pub fn evaluate(fitted: &Fitted, corpus: &Corpus, validation: Option<&Corpus>, config: &RunConfig) -> Result<EvalReport> {
    let mut scores = fitted.score_corpus(corpus)?;
    if fitted.kind == ModelKind::MilAvg && config.eval.avg_attention == AvgAttention::One {
        scores.iter_mut().flat_map(|r| &mut r.segments).for_each(|s| s.attention = 1.0);
    }
    let (reviews, segments) = scored_items(corpus, &scores);
    match config.eval.protocol {
        Protocol::ThreeClass => {
            if segments.is_empty() {
                return Err(Error::invalid("three-class evaluation needs gold segment labels"));
            }
            let classes = segments[0].probs.len();
            Ok(EvalReport::ThreeClass(three_class_report(
                &segments,
                classes,
                config.eval.folds,
                config.seed,
            )?))
        }
        Protocol::Binary => {
            let threshold = if config.eval.tune_threshold {
                let validation = validation
                    .ok_or_else(|| Error::Config("tune_threshold needs a validation file".into()))?;
                let (val_reviews, _) = scored_items(validation, &fitted.score_corpus(validation)?);
                if val_reviews.is_empty() {
                    return Err(Error::Config(format!("`{}` has no review-level output to tune", fitted.kind.name())));
                }
                Some(tune_review_threshold(&val_reviews, config.eval.positive)?)
            } else {
                None
            };
            let bootstrap = config.eval.bootstrap.map(|iterations| BootstrapConfig {
                iterations,
                resample_size: config.eval.resample_size,
                seed: config.seed,
            });
            Ok(EvalReport::Binary(binary_report_at(
                &reviews,
                &segments,
                config.eval.positive,
                threshold,
                bootstrap,
            )?))
        }
    }
}

pub fn cmd_eval(config: &RunConfig, run: &Path, out: &Path) -> Result<EvalReport> {
    let fitted = load_checkpoint(run)?;
    let path = require(&config.data.test, "test")?;
    let data = DataConfig {
        num_classes: fitted.num_classes,
        segment_labels: fitted.segment_labels,
        ..config.data.clone()
    };
    let corpus = load_split(path, &data, Split::Test)?;
    let mut inputs = vec![run, path];
    let validation = if config.eval.tune_threshold && config.eval.protocol == Protocol::Binary {
        let val_path = require(&config.data.validation, "validation")?;
        inputs.push(val_path);
        Some(load_split(val_path, &data, Split::Validation)?)
    } else {
        None
    };
    let report = evaluate(&fitted, &corpus, validation.as_ref(), config)?;
    write_json(&out.join("metrics.json"), &report)?;
    finish(out, "eval", config, &inputs, vec!["metrics.json".into()])?;
    Ok(report)
}

pub fn cmd_highlight(config: &RunConfig, run: &Path, data: &Path, format: Format, out: Option<&Path>) -> Result<String> {
    let fitted = load_checkpoint(run)?;
    let corpus = load_corpus(
        data,
        LoadOptions {
            num_classes: fitted.num_classes,
            split: Split::Test,
            segment_labels: fitted.segment_labels,
        },
    )?;
    let reviews = highlight::highlight(&fitted, &corpus, config.highlight.threshold)?;
    let (text, file) = match format {
        Format::Ansi => (highlight::render_ansi(&reviews), "highlight.txt"),
        Format::Html => (highlight::render_html(&reviews), "highlight.html"),
    };
    if let Some(dir) = out {
        write_atomic(&dir.join(file), text.as_bytes())?;
        finish(dir, "highlight", config, &[run, data], vec![file.into()])?;
    }
    Ok(text)
}

fn parse_label_space(s: &str) -> Result<SegmentLabelSpace> {
    match s {
        "same-as-review" => Ok(SegmentLabelSpace::SameAsReview),
        "polarity" => Ok(SegmentLabelSpace::Polarity),
        _ => Err(Error::Config(format!("unknown segment label space `{s}` (same-as-review, polarity)"))),
    }
}

/// Runs one parsed command; text meant for stdout is returned.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth {
            config,
            out,
            seed,
            wr,
            reviews,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(w) = wr {
                c.synth.witness_rate = w;
            }
            if let Some(n) = reviews {
                c.synth.train_reviews = n;
            }
            c.synth.seed = c.seed;
            cmd_synth(&c, &out)?;
            Ok(format!("wrote synthetic corpus to {}\n", out.display()))
        }
        Command::Train {
            config,
            out,
            seed,
            model,
            agg,
            train,
            validation,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(m) = model {
                c.model.kind = m.parse().map_err(Error::Config)?;
            }
            if let Some(a) = agg {
                if c.model.kind.aggregation().is_none() {
                    return Err(Error::Config(format!("--agg applies to MIL models, not `{}`", c.model.kind.name())));
                }
                c.model.kind = ModelKind::from_aggregation(a);
            }
            if train.is_some() {
                c.data.train = train;
            }
            if validation.is_some() {
                c.data.validation = validation;
            }
            let fitted = cmd_train(&c, &out)?;
            Ok(format!("trained {} into {}\n", fitted.kind.name(), out.display()))
        }
        Command::Eval {
            config,
            run: run_dir,
            data,
            out,
            seed,
            protocol,
            bootstrap,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if data.is_some() {
                c.data.test = data;
            }
            if let Some(p) = protocol {
                c.eval.protocol = p;
            }
            if bootstrap.is_some() {
                c.eval.bootstrap = bootstrap;
            }
            let report = cmd_eval(&c, &run_dir, &out)?;
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        Command::Highlight {
            config,
            run: run_dir,
            data,
            threshold,
            format,
            out,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(t) = threshold {
                c.highlight.threshold = t;
            }
            let text = cmd_highlight(&c, &run_dir, &data, format, out.as_deref())?;
            Ok(if out.is_some() { String::new() } else { text })
        }
        Command::Stats {
            data,
            classes,
            segment_labels,
            out,
        } => {
            let opts = LoadOptions {
                num_classes: classes,
                split: Split::Test,
                segment_labels: parse_label_space(&segment_labels)?,
            };
            let stats = corpus_stats(&load_corpus(&data, opts)?)?;
            let text = serde_json::to_string_pretty(&stats)? + "\n";
            if let Some(dir) = out {
                write_atomic(&dir.join("stats.json"), text.as_bytes())?;
                finish(&dir, "stats", &RunConfig::default(), &[&data], vec!["stats.json".into()])?;
                return Ok(String::new());
            }
            Ok(text)
        }
    }
}

/// Parses `std::env::args`, runs the command and maps errors to exit code 1.
pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            std::process::ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}

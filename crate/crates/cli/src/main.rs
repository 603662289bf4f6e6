use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rstfeat::evalkit::{corpus_rouge, format_report};
use rstfeat::features::FeatureKind;
use rstfeat::pipeline::{
    build_encoder, decode_corpus, emit_to_path, evaluate_petitions, extract_features, grad_check_config, ingest, make_synthetic, run, save_encoder,
    to_records, write_records, AnnotatedDocument, ExtractOptions, RunConfig, SummDecode, Task,
};

/// Discourse-feature pipeline: corpora, feature extraction, summarizer and
/// petition-regressor training, evaluation.
#[derive(Parser)]
#[command(name = "rstfeat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum TaskArg {
    Summ,
    Petition,
}

#[derive(Copy, Clone, ValueEnum)]
enum KindArg {
    Shallow,
    Latent,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL corpus and write the accepted documents.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Abort on the first invalid record.
        #[arg(long)]
        strict: bool,
    },
    /// Write per-EDU shallow and/or latent features.
    ExtractFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "shallow")]
        kind: KindArg,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[arg(long)]
        n_docs: Option<usize>,
    },
    /// Train and evaluate a summarizer.
    TrainSumm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Decode a corpus with a trained summarizer.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `train-summ`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Corpus ROUGE of a decodes file.
    EvalRouge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Train and evaluate a petition regressor.
    TrainReg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate a trained regressor on a labelled corpus.
    EvalReg {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `train-reg`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Finite-difference gradient check of the configured model.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Coordinates sampled per parameter tensor.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Maximum acceptable relative error.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let path = self.config.as_ref().context("--config is required for this command")?;
        RunConfig::load(path, self.seed).with_context(|| format!("loading {}", path.display()))
    }

    /// The configured run, or defaults for `task` when no file is given.
    fn config_or_default(&self, task: Task) -> Result<RunConfig> {
        match &self.config {
            Some(_) => self.config(),
            None => Ok(RunConfig::new(task, self.seed.unwrap_or(0))),
        }
    }

    fn create_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }
}

fn load_corpus(input: Option<&Path>, cfg: &RunConfig) -> Result<Vec<AnnotatedDocument>> {
    let path = match (input, &cfg.corpus) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(c)) => PathBuf::from(c),
        (None, None) => bail!("no corpus: pass --input or set `corpus` in the config"),
    };
    let report = ingest(&path, false).with_context(|| format!("reading {}", path.display()))?;
    if !report.rejected.is_empty() {
        log::warn!("{}: skipped {} invalid records", path.display(), report.rejected.len());
    }
    Ok(report.documents)
}

fn print_metrics(metrics: &BTreeMap<String, f64>) {
    print!("{}", format_report(metrics));
}

fn train(common: &Common, input: Option<&Path>, task: Task) -> Result<()> {
    let cfg = common.config()?;
    ensure!(cfg.task == task, "config task is `{}`, expected `{}`", cfg.task.as_str(), task.as_str());
    let corpus = load_corpus(input, &cfg)?;
    let metrics = run(&cfg, &corpus, &common.out)?;
    print_metrics(&metrics);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Ingest { common, input, strict } => {
            common.create_out()?;
            let report = ingest(&input, strict)?;
            emit_to_path(&report.documents, &common.out.join("corpus.jsonl"))?;
            let mut text = format!("documents={}\nrejected={}\n", report.documents.len(), report.rejected.len());
            for r in &report.rejected {
                text.push_str(&format!("line {}: {}\n", r.line, r.reason));
            }
            std::fs::write(common.out.join("ingest_report.txt"), &text)?;
            print!("{text}");
        }
        Command::ExtractFeatures { common, input, kind } => {
            let cfg = common.config_or_default(Task::Summ)?;
            let corpus = load_corpus(input.as_deref(), &cfg)?;
            common.create_out()?;
            let latent = matches!(kind, KindArg::Latent | KindArg::Both);
            let encoder = if latent {
                let enc = build_encoder(&corpus, cfg.encoder, cfg.vocab_size, cfg.seed)?;
                save_encoder(&enc, &common.out)?;
                Some(enc)
            } else {
                None
            };
            let opts = ExtractOptions {
                limit: match cfg.task {
                    Task::Summ => cfg.max_enc_len,
                    Task::Petition => cfg.max_len,
                },
                parse_missing: cfg.parse_missing,
                scorer_seed: cfg.seed,
            };
            let shallow = matches!(kind, KindArg::Shallow | KindArg::Both);
            let feats = extract_features(&corpus, shallow, encoder.as_ref(), &opts)?;
            write_records(&to_records(&corpus, &feats), &common.out.join("features.jsonl"))?;
            println!(
                "documents={} kinds={}",
                corpus.len(),
                [(shallow, FeatureKind::Shallow), (latent, FeatureKind::Latent)]
                    .iter()
                    .filter(|(on, _)| *on)
                    .map(|(_, k)| k.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
        Command::Synth { common, task, n_docs } => {
            let default_task = match task {
                Some(TaskArg::Petition) => Task::Petition,
                _ => Task::Summ,
            };
            let cfg = common.config_or_default(default_task)?;
            let task = match task {
                Some(TaskArg::Summ) => Task::Summ,
                Some(TaskArg::Petition) => Task::Petition,
                None => cfg.task,
            };
            let docs = make_synthetic(task, n_docs.unwrap_or(cfg.n_docs), cfg.seed)?;
            common.create_out()?;
            emit_to_path(&docs, &common.out.join("corpus.jsonl"))?;
            println!("documents={} task={}", docs.len(), task.as_str());
        }
        Command::TrainSumm { common, input } => train(&common, input.as_deref(), Task::Summ)?,
        Command::TrainReg { common, input } => train(&common, input.as_deref(), Task::Petition)?,
        Command::Decode { common, run, input } => {
            let corpus = ingest(&input, false)?.documents;
            let metrics = decode_corpus(&run, &corpus, &common.out)?;
            print_metrics(&metrics);
        }
        Command::EvalReg { common, run, input } => {
            let corpus = ingest(&input, false)?.documents;
            let metrics = evaluate_petitions(&run, &corpus, &common.out)?;
            print_metrics(&metrics);
        }
        Command::EvalRouge { common, input } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut pairs = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let d: SummDecode = serde_json::from_str(line).with_context(|| format!("{} line {}", input.display(), i + 1))?;
                let reference = d.reference.with_context(|| format!("{} line {}: no reference", input.display(), i + 1))?;
                pairs.push((d.hypothesis, reference));
            }
            let metrics = corpus_rouge(&pairs)?.to_metrics();
            common.create_out()?;
            std::fs::write(common.out.join("metrics.txt"), format_report(&metrics))?;
            print_metrics(&metrics);
        }
        Command::GradCheck { common, samples, tolerance } => {
            let cfg = common.config()?;
            let report = grad_check_config(&cfg, samples)?;
            let mut text = format!(
                "max_relative_error={}\ncoordinates_checked={}\n",
                report.max_relative_error, report.coordinates_checked
            );
            if let Some((name, idx, analytic, numeric)) = &report.worst {
                text.push_str(&format!("worst={name}[{idx}] analytic={analytic} numeric={numeric}\n"));
            }
            common.create_out()?;
            std::fs::write(common.out.join("gradcheck.txt"), &text)?;
            print!("{text}");
            ensure!(
                report.max_relative_error < tolerance,
                "max relative error {} exceeds {tolerance}",
                report.max_relative_error
            );
        }
    }
    Ok(())
}

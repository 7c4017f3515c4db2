//! `amrsg`: run the AMR-SG evidence selection and reasoning pipeline, or any
//! single stage of it, from the command line.
//!
//! Exit codes: 0 on success, 1 for bad input (files, config, arguments),
//! 2 when an internal invariant is violated.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amrsg_core::pipeline::{
    load_questions, write_reports, ConfigPatch, PairAnalysis, PathReport, Pipeline, PipelineConfig, PipelineError,
};
use amrsg_core::reasoner::{
    backward_and_gradcheck, separable_toy_dataset, train_toy, ReasonerError, ReasonerParams, ReasonerShape, TrainConfig,
};
use amrsg_core::retrieval::{build_index, load_corpus, Bm25Params, Question};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Like `print!`, but a closed stdout (e.g. piping into `head`) becomes an
/// error instead of a panic.
macro_rules! out {
    ($($arg:tt)*) => {
        std::io::Write::write_fmt(&mut std::io::stdout(), format_args!($($arg)*))?
    };
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        out!($($arg)*);
        out!("\n");
    }};
}

#[derive(Parser, Debug)]
#[command(
    name = "amrsg",
    version,
    about = "AMR-based semantic graphs for multi-hop QA evidence selection"
)]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,

    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-field overrides; flags win over the file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML `key = value` config file; relative paths inside it are
    /// resolved against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Common-knowledge corpus (`.tsv` with `id<TAB>text`, else one fact per line).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Optional core corpus searched first.
    #[arg(long, global = true)]
    core_corpus: Option<PathBuf>,
    /// AMR bank holding `hyp:<qid>:<choice>` and fact AMRs.
    #[arg(long, global = true)]
    amr_bank: Option<PathBuf>,
    /// Question file, one JSON object per line.
    #[arg(long, global = true)]
    questions: Option<PathBuf>,
    /// Reasoner parameter file written by `train`.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[arg(long, global = true)]
    pool_size: Option<usize>,
    #[arg(long, global = true)]
    active_cap: Option<usize>,
    #[arg(long, global = true)]
    max_path_nodes: Option<usize>,
    #[arg(long, global = true)]
    k_layers: Option<usize>,
    #[arg(long, global = true)]
    heads: Option<usize>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn overrides(&self) -> ConfigPatch {
        ConfigPatch {
            corpus: self.corpus.clone(),
            core_corpus: self.core_corpus.clone(),
            amr_bank: self.amr_bank.clone(),
            questions: self.questions.clone(),
            params: self.params.clone(),
            pool_size: self.pool_size,
            active_cap: self.active_cap,
            max_path_nodes: self.max_path_nodes,
            k_layers: self.k_layers,
            heads: self.heads,
            dim: self.dim,
            seed: self.seed,
            ..ConfigPatch::default()
        }
    }

    fn resolve(&self) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(path) => ConfigPatch::from_file(path)?,
            None => ConfigPatch::default(),
        };
        Ok(PipelineConfig::from_patches([&file, &self.overrides()])?)
    }

    /// The configured reasoner shape when any shape flag or file is given,
    /// otherwise `fallback`.
    fn shape_or(&self, fallback: (usize, usize, usize)) -> Result<ReasonerShape> {
        if self.config.is_none() && self.k_layers.is_none() && self.heads.is_none() && self.dim.is_none() {
            return Ok(ReasonerShape::new(fallback.0, fallback.1, fallback.2)?);
        }
        Ok(self.resolve()?.shape()?)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the BM25 indexes and print corpus statistics.
    Index,
    /// Print the hypothesis for every question-choice pair.
    Hypothesize,
    /// Print the retrieved fact pool for every pair.
    Retrieve(Select),
    /// Print the merged semantic graph for every pair.
    BuildSg(Select),
    /// Emit a JSON evidence-path report per pair.
    Paths {
        #[command(flatten)]
        select: Select,
        /// Write `<qid>.<choice>.paths.json` files here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print active facts and the fact connection graph for every pair.
    SelectFacts(Select),
    /// Score every question; prints one summary line per question.
    Score {
        /// Also write per-pair reports and `summary.jsonl` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate labelled questions; prints a TSV breakdown.
    Eval,
    /// Check analytic gradients against central differences on synthetic
    /// instances (shape 2/2/8 unless shape flags or a config are given).
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 4)]
        choices: usize,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Human-readable view of one pair's graph, paths and active facts.
    Inspect {
        #[arg(long)]
        question: String,
        #[arg(long)]
        choice: usize,
    },
    /// Train on the synthetic separable set and write a parameter file
    /// (shape 2/4/32 unless shape flags or a config are given).
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long = "toy-questions", default_value_t = 10)]
        toy_questions: usize,
    },
}

#[derive(Args, Debug)]
struct Select {
    /// Only this question id.
    #[arg(long)]
    question: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let invariant = err.chain().any(|e| {
        e.downcast_ref::<PipelineError>()
            .is_some_and(PipelineError::is_invariant_violation)
            || e.downcast_ref::<InvariantViolation>().is_some()
    });
    if invariant {
        2
    } else {
        1
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

/// A check the tool runs on itself failed.
#[derive(Debug)]
struct InvariantViolation(String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantViolation {}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Index => index(&cli.config.resolve()?),
        Command::Hypothesize => {
            for q in questions(&cli.config.resolve()?, None)? {
                for h in q.hypotheses()? {
                    outln!(
                        "{}",
                        json!({"question_id": h.question_id, "choice_index": h.choice_index, "hypothesis": h.text})
                    );
                }
            }
            Ok(())
        }
        Command::Retrieve(sel) => per_pair(&cli.config, sel, |a| {
            json!({"query": a.query, "pool": a.pool.iter().map(|r| json!({
                "fact_id": r.fact_id, "score": r.score, "source": r.source,
            })).collect::<Vec<_>>()})
        }),
        Command::BuildSg(sel) => per_pair(&cli.config, sel, |a| json!({"sg": a.sg})),
        Command::SelectFacts(sel) => per_pair(
            &cli.config,
            sel,
            |a| json!({"active_facts": a.active, "connection_graph": a.connection}),
        ),
        Command::Paths { select, out } => paths(&cli.config, select, out.as_deref()),
        Command::Score { out } => {
            let config = cli.config.resolve()?;
            let pipeline = Pipeline::load(config.clone())?;
            let results = pipeline.run(&questions(&config, None)?)?;
            for r in &results {
                outln!("{}", serde_json::to_string(&r.summary)?);
            }
            if let Some(dir) = out {
                write_reports(dir, &results)?;
            }
            Ok(())
        }
        Command::Eval => {
            let config = cli.config.resolve()?;
            let report = Pipeline::load(config.clone())?.evaluate(&questions(&config, None)?)?;
            out!("{}", report.to_tsv());
            eprintln!("accuracy: {:.4}", report.accuracy);
            Ok(())
        }
        Command::Gradcheck {
            instances,
            epsilon,
            choices,
            tolerance,
        } => gradcheck(&cli.config, *instances, *epsilon, *choices, *tolerance),
        Command::Inspect { question, choice } => {
            let config = cli.config.resolve()?;
            let pipeline = Pipeline::load(config.clone())?;
            out!("{}", pipeline.inspect(&questions(&config, None)?, question, *choice)?);
            Ok(())
        }
        Command::Train {
            out,
            epochs,
            lr,
            toy_questions,
        } => train(&cli.config, out, *epochs, *lr, *toy_questions),
    }
}

fn questions(config: &PipelineConfig, only: Option<&str>) -> Result<Vec<Question>> {
    let path = config
        .questions
        .as_ref()
        .context("no question file: set `questions` or pass --questions")?;
    let mut qs = load_questions(path)?;
    if let Some(id) = only {
        qs.retain(|q| q.id == id);
        if qs.is_empty() {
            return Err(PipelineError::UnknownQuestion(id.to_string()).into());
        }
    }
    Ok(qs)
}

fn index(config: &PipelineConfig) -> Result<()> {
    let mut out = serde_json::Map::new();
    let corpora = [
        ("common", config.corpus.as_ref()),
        ("core", config.core_corpus.as_ref()),
    ];
    if corpora[0].1.is_none() {
        bail!("no corpus: set `corpus` or pass --corpus");
    }
    for (name, path) in corpora {
        let Some(path) = path else { continue };
        let docs = load_corpus(path).with_context(|| format!("reading {}", path.display()))??;
        let index = build_index(docs, Bm25Params::default())?;
        out.insert(
            name.to_string(),
            json!({
                "path": path.display().to_string(),
                "documents": index.len(),
                "avg_doc_len": index.avg_doc_len(),
                "vocabulary": index.vocabulary_size(),
            }),
        );
    }
    outln!("{}", serde_json::to_string_pretty(&Value::Object(out))?);
    Ok(())
}

/// Runs the analysis for every selected pair and prints one JSON line per
/// pair, tagged with its question id and choice index.
fn per_pair(args: &ConfigArgs, select: &Select, body: impl Fn(&PairAnalysis) -> Value) -> Result<()> {
    let config = args.resolve()?;
    let pipeline = Pipeline::load(config.clone())?;
    for q in questions(&config, select.question.as_deref())? {
        for (j, a) in pipeline.analyze_question(&q)?.iter().enumerate() {
            let mut line = json!({"question_id": q.id, "choice_index": j});
            if let (Value::Object(head), Value::Object(rest)) = (&mut line, body(a)) {
                head.extend(rest);
            }
            outln!("{}", serde_json::to_string(&line)?);
        }
    }
    Ok(())
}

fn paths_report(question_id: &str, j: usize, a: &PairAnalysis) -> Value {
    json!({
        "question_id": question_id,
        "choice_index": j,
        "choice": a.choice,
        "hypothesis": a.hypothesis.text,
        "nodes": a.sg.nodes,
        "edges": a.sg.edges,
        "question_nodes": a.sg.question_nodes,
        "choice_nodes": a.sg.choice_nodes,
        "merged_fact_ids": a.sg.merged_fact_ids,
        "paths": a.paths.iter().map(PathReport::from).collect::<Vec<_>>(),
        "active_facts": a.active,
        "connection_graph": a.connection,
    })
}

fn paths(args: &ConfigArgs, select: &Select, out: Option<&Path>) -> Result<()> {
    let config = args.resolve()?;
    let pipeline = Pipeline::load(config.clone())?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    for q in questions(&config, select.question.as_deref())? {
        for (j, a) in pipeline.analyze_question(&q)?.iter().enumerate() {
            let mut text = serde_json::to_string_pretty(&paths_report(&q.id, j, a))?;
            text.push('\n');
            match out {
                Some(dir) => {
                    let stem: String =
                        q.id.chars()
                            .map(|c| {
                                if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                                    c
                                } else {
                                    '_'
                                }
                            })
                            .collect();
                    let path = dir.join(format!("{stem}.{j}.paths.json"));
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                }
                None => out!("{text}"),
            }
        }
    }
    Ok(())
}

fn gradcheck(args: &ConfigArgs, instances: usize, epsilon: f64, choices: usize, tolerance: f64) -> Result<()> {
    let shape = args.shape_or((2, 2, 8))?;
    let seed = args.seed.unwrap_or(0);
    // One fact per choice: two-node graphs.
    let data = separable_toy_dataset(instances, choices, 1, shape.dim, seed);
    let mut worst = 0.0f64;
    for (i, q) in data.iter().enumerate() {
        let mut param_seed = seed + i as u64;
        let err = loop {
            let params = ReasonerParams::init(shape, param_seed)?;
            match backward_and_gradcheck(q, &params, epsilon) {
                Err(ReasonerError::NearReluKink { .. }) => param_seed += 1000,
                other => break other?,
            }
        };
        outln!("instance {i}\tmax_rel_error {err:e}");
        worst = worst.max(err);
    }
    outln!("max_rel_error {worst:e}");
    if worst >= tolerance {
        return Err(InvariantViolation(format!("gradient error {worst:e} exceeds {tolerance:e}")).into());
    }
    Ok(())
}

fn train(args: &ConfigArgs, out: &Path, epochs: usize, lr: f64, toy_questions: usize) -> Result<()> {
    let shape = args.shape_or((2, 4, 32))?;
    let seed = args.seed.unwrap_or(0);
    let data = separable_toy_dataset(toy_questions, 4, 3, shape.dim, seed);
    let config = TrainConfig {
        k_layers: shape.k_layers,
        heads: shape.heads,
        dim: shape.dim,
        lr,
        epochs,
        seed,
    };
    let outcome = train_toy(&data, &config)?;
    for (epoch, (acc, loss)) in outcome.accuracy_curve.iter().zip(&outcome.loss_curve).enumerate() {
        if epoch % 50 == 0 || epoch == epochs {
            outln!("epoch {epoch}\tloss {loss:.6}\taccuracy {acc:.3}");
        }
    }
    std::fs::write(out, outcome.params.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

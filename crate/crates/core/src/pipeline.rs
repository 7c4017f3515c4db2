//! End-to-end runs: hypotheses → fact pools → AMR-SGs → evidence paths →
//! active facts → connection graphs → choice scores.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::penman::{parse_amr_bank, AmrBank, AmrGraph, BankError, ConceptKey, KeyPolicy, DEFAULT_OVERGENERAL};
use crate::reasoner::{
    adjacency_matrix, predict, score_choices, ChoiceGraph, ChoiceScores, HashEmbedding, QuestionInstance,
    ReasonerError, ReasonerParams, ReasonerShape,
};
use crate::retrieval::{
    assemble_pool, build_index, load_corpus, parse_questions, Bm25Params, CorpusIndex, FactRecord, FactSource,
    Hypothesis, Question, RetrievalError,
};
use crate::semgraph::{
    build_amr_sg, build_fact_connection_graph, fact_keysets, find_evidence_paths, rank_active_facts,
    split_question_choice_nodes, ActiveFact, AmrSg, EvidencePath, FactConnectionGraph, SemGraphError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("I/O error on {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("malformed AMR bank {file}")]
    Bank { file: String, source: BankError },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("no AMR for `{0}` in the bank")]
    MissingAmr(String),
    #[error(transparent)]
    SemGraph(#[from] SemGraphError),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("choice index {index} out of range for {choices} choices")]
    ChoiceOutOfRange { index: usize, choices: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("question `{0}` has no answer_idx")]
    MissingLabel(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// True for failures of internal invariants, as opposed to bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            PipelineError::Invariant(_)
                | PipelineError::SemGraph(SemGraphError::UnknownFact(_))
                | PipelineError::Reasoner(
                    ReasonerError::NonFiniteLoss
                        | ReasonerError::DivergedLoss { .. }
                        | ReasonerError::AsymmetricInput
                        | ReasonerError::NonBinaryInput
                        | ReasonerError::ZeroDegree(_)
                )
        )
    }
}

/// What the retrieval query is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    /// The hypothesis sentence.
    #[default]
    Hypothesis,
    /// The question text followed by the choice.
    Question,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pool_size: usize,
    pub n_core: usize,
    pub n_common: usize,
    pub active_cap: usize,
    pub max_path_nodes: usize,
    pub k_layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub seed: u64,
    pub query: QueryMode,
    pub overgeneral: Vec<String>,
    pub strip_senses: bool,
    /// Common-knowledge corpus (required for runs).
    pub corpus: Option<PathBuf>,
    /// Optional core (science) corpus.
    pub core_corpus: Option<PathBuf>,
    pub amr_bank: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    /// Reasoner parameter file; a seeded init is used when absent.
    pub params: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let shape = ReasonerShape::default();
        Self {
            pool_size: 100,
            n_core: 10,
            n_common: 90,
            active_cap: 15,
            max_path_nodes: 8,
            k_layers: shape.k_layers,
            heads: shape.heads,
            dim: shape.dim,
            seed: 0,
            query: QueryMode::default(),
            overgeneral: DEFAULT_OVERGENERAL.iter().map(|s| s.to_string()).collect(),
            strip_senses: false,
            corpus: None,
            core_corpus: None,
            amr_bank: None,
            questions: None,
            params: None,
        }
    }
}

/// A partial configuration: one `key = value` file or a set of
/// command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub pool_size: Option<usize>,
    pub n_core: Option<usize>,
    pub n_common: Option<usize>,
    pub active_cap: Option<usize>,
    pub max_path_nodes: Option<usize>,
    pub k_layers: Option<usize>,
    pub heads: Option<usize>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub query: Option<QueryMode>,
    pub overgeneral: Option<Vec<String>>,
    pub strip_senses: Option<bool>,
    pub corpus: Option<PathBuf>,
    pub core_corpus: Option<PathBuf>,
    pub amr_bank: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub params: Option<PathBuf>,
}

impl ConfigPatch {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths in it are resolved against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = read_file(path)?;
        let mut patch = Self::parse(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut patch.corpus,
            &mut patch.core_corpus,
            &mut patch.amr_bank,
            &mut patch.questions,
            &mut patch.params,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(patch)
    }
}

impl PipelineConfig {
    /// Applies `patches` in order on top of the defaults, then validates.
    ///
    /// When the pool size changes and neither split is given anywhere, the
    /// core share is kept (capped at the pool size) and the common share
    /// takes the rest.
    pub fn from_patches<'a>(patches: impl IntoIterator<Item = &'a ConfigPatch>) -> Result<Self, PipelineError> {
        let mut c = Self::default();
        let mut split_given = false;
        for p in patches {
            macro_rules! set {
                ($($f:ident),*) => {$(if let Some(v) = &p.$f { c.$f = v.clone(); })*};
            }
            set!(
                pool_size,
                n_core,
                n_common,
                active_cap,
                max_path_nodes,
                k_layers,
                heads,
                dim,
                seed,
                query,
                overgeneral,
                strip_senses
            );
            macro_rules! set_path {
                ($($f:ident),*) => {$(if let Some(v) = &p.$f { c.$f = Some(v.clone()); })*};
            }
            set_path!(corpus, core_corpus, amr_bank, questions, params);
            split_given |= p.n_core.is_some() || p.n_common.is_some();
        }
        if !split_given {
            c.n_core = c.n_core.min(c.pool_size);
            c.n_common = c.pool_size - c.n_core;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.n_core + self.n_common != self.pool_size {
            return bad(format!(
                "n_core ({}) + n_common ({}) must equal pool_size ({})",
                self.n_core, self.n_common, self.pool_size
            ));
        }
        if self.active_cap == 0 {
            return bad("active_cap must be at least 1".into());
        }
        if self.max_path_nodes < 2 {
            return bad("max_path_nodes must be at least 2".into());
        }
        self.shape().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn shape(&self) -> Result<ReasonerShape, ReasonerError> {
        ReasonerShape::new(self.k_layers, self.heads, self.dim)
    }

    pub fn key_policy(&self) -> KeyPolicy {
        KeyPolicy::new(&self.overgeneral).with_strip_senses(self.strip_senses)
    }

    fn required(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf, PipelineError> {
        path.clone()
            .ok_or_else(|| PipelineError::Config(format!("`{key}` is not set")))
    }
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_corpus(path: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    load_corpus(path)
        .map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .map_err(PipelineError::from)
}

pub fn load_bank(path: &Path) -> Result<AmrBank, PipelineError> {
    parse_amr_bank(&read_file(path)?).map_err(|source| PipelineError::Bank {
        file: path.display().to_string(),
        source,
    })
}

pub fn load_questions(path: &Path) -> Result<Vec<Question>, PipelineError> {
    let name = path.display().to_string();
    Ok(parse_questions(&name, &read_file(path)?)?)
}

/// Bank key of the hypothesis AMR for a question-choice pair.
pub fn hypothesis_key(question_id: &str, choice_index: usize) -> String {
    format!("hyp:{question_id}:{choice_index}")
}

/// Everything derived for one question-choice pair before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAnalysis {
    pub hypothesis: Hypothesis,
    pub choice: String,
    pub query: String,
    pub pool: Vec<FactRecord>,
    pub sg: AmrSg,
    pub paths: Vec<EvidencePath>,
    pub active: Vec<ActiveFact>,
    pub connection: FactConnectionGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub fact_id: String,
    pub score: f64,
    pub source: FactSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub chain: String,
    pub nodes: Vec<String>,
    pub origins: Vec<String>,
}

impl From<&EvidencePath> for PathReport {
    fn from(p: &EvidencePath) -> Self {
        Self {
            chain: p.chain(),
            nodes: p.nodes.iter().map(|k| k.as_str().to_string()).collect(),
            origins: p.origins.iter().map(|o| o.as_str().to_string()).collect(),
        }
    }
}

/// Serialized report for one question-choice pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub question_id: String,
    pub choice_index: usize,
    pub choice: String,
    pub hypothesis: String,
    pub query: String,
    pub pool: Vec<PoolEntry>,
    pub question_nodes: Vec<String>,
    pub choice_nodes: Vec<String>,
    pub sg_node_count: usize,
    pub sg_edge_count: usize,
    pub merged_fact_ids: Vec<String>,
    pub paths: Vec<PathReport>,
    pub active_facts: Vec<ActiveFact>,
    pub connection_graph: FactConnectionGraph,
    pub raw_score: f64,
    pub prob: f64,
}

/// One line of the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub question_id: String,
    pub raw: Vec<f64>,
    pub probs: Vec<f64>,
    pub predicted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_idx: Option<usize>,
    pub n_active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionResult {
    pub summary: QuestionSummary,
    pub scores: ChoiceScores,
    pub pairs: Vec<PairReport>,
}

fn keys_to_strings(keys: &BTreeSet<ConceptKey>) -> Vec<String> {
    keys.iter().map(|k| k.as_str().to_string()).collect()
}

/// Loaded corpora, AMR bank and reasoner ready to process questions.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    policy: KeyPolicy,
    common: CorpusIndex,
    core: Option<CorpusIndex>,
    bank: AmrBank,
    params: ReasonerParams,
    provider: HashEmbedding,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        common_corpus: Vec<(String, String)>,
        core_corpus: Option<Vec<(String, String)>>,
        bank: AmrBank,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let shape = config.shape()?;
        let common = build_index(common_corpus, Bm25Params::default())?.with_source(FactSource::Common);
        let core = core_corpus
            .map(|c| build_index(c, Bm25Params::default()).map(|i| i.with_source(FactSource::Core)))
            .transpose()?;
        Ok(Self {
            policy: config.key_policy(),
            params: ReasonerParams::init(shape, config.seed)?,
            provider: HashEmbedding::new(config.dim, config.seed),
            config,
            common,
            core,
            bank,
        })
    }

    /// Reads the corpora, bank and (if configured) parameter file.
    pub fn load(config: PipelineConfig) -> Result<Self, PipelineError> {
        let common = read_corpus(&config.required(&config.corpus, "corpus")?)?;
        let core = config.core_corpus.as_deref().map(read_corpus).transpose()?;
        let bank = load_bank(&config.required(&config.amr_bank, "amr_bank")?)?;
        let params = match &config.params {
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
                    path: path.clone(),
                    source,
                })?;
                Some(ReasonerParams::from_bytes(&bytes)?)
            }
            None => None,
        };
        let pipeline = Self::new(config, common, core, bank)?;
        match params {
            Some(p) => pipeline.with_params(p),
            None => Ok(pipeline),
        }
    }

    pub fn with_params(mut self, params: ReasonerParams) -> Result<Self, PipelineError> {
        let expected = self.config.shape()?;
        if params.shape() != expected {
            return Err(PipelineError::Config(format!(
                "parameter shape {:?} differs from configured {:?}",
                params.shape(),
                expected
            )));
        }
        self.params = params;
        Ok(self)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn params(&self) -> &ReasonerParams {
        &self.params
    }

    pub fn common_index(&self) -> &CorpusIndex {
        &self.common
    }

    pub fn core_index(&self) -> Option<&CorpusIndex> {
        self.core.as_ref()
    }

    pub fn bank(&self) -> &AmrBank {
        &self.bank
    }

    fn amr(&self, key: &str) -> Result<&AmrGraph, PipelineError> {
        self.bank
            .get(key)
            .ok_or_else(|| PipelineError::MissingAmr(key.to_string()))
    }

    pub fn query_for(&self, question: &Question, hypothesis: &Hypothesis) -> String {
        match self.config.query {
            QueryMode::Hypothesis => hypothesis.text.clone(),
            QueryMode::Question => format!("{} {}", question.question, question.choices[hypothesis.choice_index]),
        }
    }

    /// `n_core` core hits followed by `n_common` common hits.
    pub fn pool(&self, query: &str) -> Vec<FactRecord> {
        let core_hits = self
            .core
            .as_ref()
            .map(|i| i.retrieve(query, self.config.n_core))
            .unwrap_or_default();
        let common_hits = self.common.retrieve(query, self.config.n_common);
        assemble_pool(&core_hits, &common_hits, self.config.n_core, self.config.n_common)
    }

    /// Runs everything up to (not including) scoring for each choice.
    pub fn analyze_question(&self, question: &Question) -> Result<Vec<PairAnalysis>, PipelineError> {
        let hypotheses = question.hypotheses()?;
        let hyp_graphs = hypotheses
            .iter()
            .map(|h| self.amr(&hypothesis_key(&h.question_id, h.choice_index)))
            .collect::<Result<Vec<_>, _>>()?;
        let hyp_keys: Vec<BTreeSet<ConceptKey>> = hyp_graphs.iter().map(|g| self.policy.key_set(g)).collect();
        let (question_nodes, choice_nodes) = split_question_choice_nodes(&hyp_keys)?;

        hypotheses
            .into_iter()
            .enumerate()
            .map(|(j, hypothesis)| {
                let query = self.query_for(question, &hypothesis);
                let pool = self.pool(&query);
                let mut pool_bank = AmrBank::new();
                for r in &pool {
                    pool_bank.insert(r.fact_id.clone(), self.amr(&r.fact_id)?.clone());
                }
                let sg = build_amr_sg(
                    hyp_graphs[j],
                    &pool_bank,
                    &self.policy,
                    &question_nodes,
                    &choice_nodes[j],
                );
                sg.validate().map_err(PipelineError::Invariant)?;
                let paths = find_evidence_paths(&sg, self.config.max_path_nodes);
                for p in &paths {
                    p.validate(&sg).map_err(PipelineError::Invariant)?;
                }
                let scores: HashMap<String, f64> = pool.iter().map(|r| (r.fact_id.clone(), r.score)).collect();
                let active = rank_active_facts(&paths, &scores, self.config.active_cap);
                if active.len() > self.config.active_cap {
                    return Err(PipelineError::Invariant("active facts exceed the cap".into()));
                }
                let active_ids: Vec<String> = active.iter().map(|a| a.fact_id.clone()).collect();
                let connection = build_fact_connection_graph(
                    &sg,
                    &hyp_keys[j],
                    &active_ids,
                    &fact_keysets(&pool_bank, &self.policy),
                )?;
                if !connection.is_symmetric() {
                    return Err(PipelineError::Invariant("connection graph is not symmetric".into()));
                }
                Ok(PairAnalysis {
                    choice: question.choices[j].clone(),
                    hypothesis,
                    query,
                    pool,
                    sg,
                    paths,
                    active,
                    connection,
                })
            })
            .collect()
    }

    /// Reasoner input for one analyzed pair. Without evidence paths the
    /// graph holds the hypothesis alone.
    pub fn choice_graph(&self, analysis: &PairAnalysis) -> Result<ChoiceGraph, PipelineError> {
        let texts: HashMap<&str, &str> = analysis
            .pool
            .iter()
            .map(|r| (r.fact_id.as_str(), r.text.as_str()))
            .collect();
        let fact_texts = analysis
            .active
            .iter()
            .map(|a| {
                texts
                    .get(a.fact_id.as_str())
                    .copied()
                    .ok_or_else(|| PipelineError::Invariant(format!("active fact `{}` not in pool", a.fact_id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let adjacency = adjacency_matrix(&analysis.connection.adjacency);
        Ok(ChoiceGraph::from_texts(
            &self.provider,
            &analysis.hypothesis.text,
            &fact_texts,
            &adjacency,
        )?)
    }

    pub fn instance(&self, question: &Question) -> Result<(QuestionInstance, Vec<PairAnalysis>), PipelineError> {
        let analyses = self.analyze_question(question)?;
        let choices = analyses
            .iter()
            .map(|a| self.choice_graph(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((
            QuestionInstance {
                choices,
                answer: question.answer_idx,
            },
            analyses,
        ))
    }

    pub fn run_question(&self, question: &Question) -> Result<QuestionResult, PipelineError> {
        let (instance, analyses) = self.instance(question)?;
        let scores = score_choices(&instance.choices, &self.params)?;
        let pairs = analyses
            .iter()
            .enumerate()
            .map(|(j, a)| PairReport {
                question_id: question.id.clone(),
                choice_index: j,
                choice: a.choice.clone(),
                hypothesis: a.hypothesis.text.clone(),
                query: a.query.clone(),
                pool: a
                    .pool
                    .iter()
                    .map(|r| PoolEntry {
                        fact_id: r.fact_id.clone(),
                        score: r.score,
                        source: r.source,
                    })
                    .collect(),
                question_nodes: keys_to_strings(&a.sg.question_nodes),
                choice_nodes: keys_to_strings(&a.sg.choice_nodes),
                sg_node_count: a.sg.nodes.len(),
                sg_edge_count: a.sg.edges.len(),
                merged_fact_ids: a.sg.merged_fact_ids.iter().cloned().collect(),
                paths: a.paths.iter().map(PathReport::from).collect(),
                active_facts: a.active.clone(),
                connection_graph: a.connection.clone(),
                raw_score: scores.raw[j],
                prob: scores.probs[j],
            })
            .collect();
        Ok(QuestionResult {
            summary: QuestionSummary {
                question_id: question.id.clone(),
                raw: scores.raw.clone(),
                probs: scores.probs.clone(),
                predicted: scores.predicted(),
                answer_idx: question.answer_idx,
                n_active: analyses.iter().map(|a| a.active.len()).collect(),
            },
            scores,
            pairs,
        })
    }

    pub fn run(&self, questions: &[Question]) -> Result<Vec<QuestionResult>, PipelineError> {
        questions.iter().map(|q| self.run_question(q)).collect()
    }

    pub fn evaluate(&self, questions: &[Question]) -> Result<EvalReport, PipelineError> {
        if questions.is_empty() {
            return Err(PipelineError::EmptyDataset);
        }
        if let Some(q) = questions.iter().find(|q| q.answer_idx.is_none()) {
            return Err(PipelineError::MissingLabel(q.id.clone()));
        }
        let rows = questions
            .iter()
            .map(|q| {
                let r = self.run_question(q)?;
                let gold = q.answer_idx.expect("checked above");
                Ok(EvalRow {
                    question_id: q.id.clone(),
                    predicted: r.summary.predicted,
                    gold,
                    correct: r.summary.predicted == gold,
                    n_active: r.summary.n_active,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(EvalReport::from_rows(rows))
    }

    pub fn inspect(
        &self,
        questions: &[Question],
        question_id: &str,
        choice_index: usize,
    ) -> Result<String, PipelineError> {
        let question = questions
            .iter()
            .find(|q| q.id == question_id)
            .ok_or_else(|| PipelineError::UnknownQuestion(question_id.to_string()))?;
        if choice_index >= question.choices.len() {
            return Err(PipelineError::ChoiceOutOfRange {
                index: choice_index,
                choices: question.choices.len(),
            });
        }
        let analyses = self.analyze_question(question)?;
        Ok(render_inspection(question, &analyses[choice_index]))
    }
}

fn render_inspection(question: &Question, a: &PairAnalysis) -> String {
    let join = |keys: &BTreeSet<ConceptKey>| {
        if keys.is_empty() {
            "(none)".to_string()
        } else {
            keys_to_strings(keys).join(", ")
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "question {}: {}", question.id, question.question);
    let _ = writeln!(out, "choice {}: {}", a.hypothesis.choice_index, a.choice);
    let _ = writeln!(out, "hypothesis: {}", a.hypothesis.text);
    let _ = writeln!(out, "question nodes: {}", join(&a.sg.question_nodes));
    let _ = writeln!(out, "choice nodes: {}", join(&a.sg.choice_nodes));
    if a.sg.merged_fact_ids.is_empty() {
        let _ = writeln!(
            out,
            "merged facts: none (empty graph: no pool fact shares a concept with the hypothesis)"
        );
    } else {
        let ids: Vec<&str> = a.sg.merged_fact_ids.iter().map(String::as_str).collect();
        let _ = writeln!(out, "merged facts ({}): {}", ids.len(), ids.join(", "));
    }
    let _ = writeln!(out, "graph: {} nodes, {} edges", a.sg.nodes.len(), a.sg.edges.len());
    let _ = writeln!(out, "evidence paths ({}):", a.paths.len());
    if a.paths.is_empty() {
        let _ = writeln!(out, "  none");
    }
    for p in &a.paths {
        let _ = writeln!(out, "  {}", p.chain());
        let hops: Vec<String> = p
            .nodes
            .windows(2)
            .zip(&p.origins)
            .map(|(w, o)| format!("{} -[{}]- {}", w[0], o, w[1]))
            .collect();
        let _ = writeln!(out, "    {}", hops.join("; "));
    }
    let _ = writeln!(out, "active facts ({}):", a.active.len());
    if a.active.is_empty() {
        let _ = writeln!(out, "  none (scored on the hypothesis alone)");
    }
    for (rank, f) in a.active.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {}. {} paths={} score={:.6}",
            rank + 1,
            f.fact_id,
            f.path_count,
            f.score
        );
    }
    let _ = writeln!(out, "connection graph:");
    let width = a.connection.labels.iter().map(String::len).max().unwrap_or(0);
    for (label, row) in a.connection.labels.iter().zip(&a.connection.adjacency) {
        let cells: Vec<String> = row.iter().map(u8::to_string).collect();
        let _ = writeln!(out, "  {label:<width$}  {}", cells.join(" "));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRow {
    pub question_id: String,
    pub predicted: usize,
    pub gold: usize,
    pub correct: bool,
    /// Active facts per choice.
    pub n_active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    fn from_rows(rows: Vec<EvalRow>) -> Self {
        let correct = rows.iter().filter(|r| r.correct).count();
        Self {
            accuracy: correct as f64 / rows.len() as f64,
            rows,
        }
    }

    /// `qid predicted gold correct n_active`, tab-separated, with a header;
    /// `correct` is 0/1 and `n_active` lists per-choice counts separated by
    /// commas.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("qid\tpredicted\tgold\tcorrect\tn_active\n");
        for r in &self.rows {
            let n: Vec<String> = r.n_active.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.question_id,
                r.predicted,
                r.gold,
                u8::from(r.correct),
                n.join(",")
            );
        }
        out
    }
}

/// Evaluates already-built reasoner instances; questions are named by
/// their position.
pub fn eval_instances(dataset: &[QuestionInstance], params: &ReasonerParams) -> Result<EvalReport, PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let rows = dataset
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let gold = q.answer.ok_or_else(|| PipelineError::MissingLabel(i.to_string()))?;
            let predicted = predict(&score_choices(&q.choices, params)?.probs);
            Ok(EvalRow {
                question_id: i.to_string(),
                predicted,
                gold,
                correct: predicted == gold,
                n_active: q.choices.iter().map(|c| c.node_count() - 1).collect(),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Loads everything named in `config` and runs every question in
/// `question_file`.
pub fn run_pipeline(config: &PipelineConfig, question_file: &Path) -> Result<Vec<QuestionResult>, PipelineError> {
    let questions = load_questions(question_file)?;
    Pipeline::load(config.clone())?.run(&questions)
}

pub fn eval_dataset(config: &PipelineConfig, question_file: &Path) -> Result<EvalReport, PipelineError> {
    let questions = load_questions(question_file)?;
    if questions.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    Pipeline::load(config.clone())?.evaluate(&questions)
}

pub fn inspect_graph(config: &PipelineConfig, question_id: &str, choice_index: usize) -> Result<String, PipelineError> {
    let questions = load_questions(&config.required(&config.questions, "questions")?)?;
    Pipeline::load(config.clone())?.inspect(&questions, question_id, choice_index)
}

/// One pretty-printed JSON document per pair, newline-terminated.
pub fn pair_report_json(report: &PairReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn summary_json(summary: &QuestionSummary) -> String {
    serde_json::to_string(summary).expect("summaries serialize")
}

fn file_stem(question_id: &str) -> String {
    question_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `<qid>.<choice>.json` per pair and `summary.jsonl` into `dir`;
/// returns the written paths.
pub fn write_reports(dir: &Path, results: &[QuestionResult]) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let mut summary = String::new();
    for r in results {
        for p in &r.pairs {
            let path = dir.join(format!("{}.{}.json", file_stem(&p.question_id), p.choice_index));
            std::fs::write(&path, pair_report_json(p)).map_err(io(&path))?;
            written.push(path);
        }
        summary.push_str(&summary_json(&r.summary));
        summary.push('\n');
    }
    let path = dir.join("summary.jsonl");
    std::fs::write(&path, summary).map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

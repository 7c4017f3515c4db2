//! AMR-based semantic graphs for multi-hop question answering.
//!
//! * [`penman`] — PENMAN parsing/serialization and concept keys.
//! * [`retrieval`] — hypotheses, BM25 retrieval and fact pools.
//! * [`semgraph`] — graph construction, evidence paths and active facts.
//! * [`reasoner`] — GCN reasoner, gated scoring and training.
//! * [`pipeline`] — end-to-end runs, evaluation and inspection.

pub mod penman;
pub mod pipeline;
pub mod reasoner;
pub mod retrieval;
pub mod semgraph;

pub use penman::{
    concept_keys, parse_amr_bank, parse_penman, serialize_penman, AmrBank, AmrGraph, BankError, ConceptKey, KeyPolicy,
    PenmanError,
};
pub use pipeline::{
    eval_dataset, inspect_graph, run_pipeline, ConfigPatch, EvalReport, PairReport, Pipeline, PipelineConfig,
    PipelineError,
};
pub use reasoner::{
    backward_and_gradcheck, gate_and_score, gcn_forward, normalize_adjacency, pool_node_features, score_choices,
    softmax, train_toy, ChoiceGraph, ChoiceScores, EmbeddingProvider, HashEmbedding, NodeFeatures, QuestionInstance,
    ReasonerError, ReasonerParams, ReasonerShape, TrainConfig,
};
pub use retrieval::{
    assemble_pool, build_index, generate_hypothesis, retrieve, Bm25Params, CorpusIndex, FactRecord, FactSource,
    Hypothesis, Question, RetrievalError,
};
pub use semgraph::{
    build_amr_sg, build_fact_connection_graph, find_evidence_paths, select_active_facts, split_question_choice_nodes,
    ActiveFact, AmrSg, EvidencePath, FactConnectionGraph, Origin, SemGraphError, SgEdge,
};

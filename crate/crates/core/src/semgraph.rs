//! AMR-based semantic graph (AMR-SG) construction and path analytics.
//!
//! Hypothesis and fact AMRs are merged on shared [`ConceptKey`]s with edge
//! labels and directions dropped. Hypothesis nodes are split into question
//! nodes (shared by every choice's hypothesis) and choice nodes; simple paths
//! from a question node to a choice node over fact edges pick out the
//! active facts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::penman::{AmrBank, AmrGraph, ConceptKey, KeyPolicy};

pub const HYPOTHESIS_LABEL: &str = "HYPOTHESIS";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemGraphError {
    #[error("no hypotheses, or a hypothesis with no nodes")]
    EmptyHypothesis,
    #[error("active fact `{0}` has no key set")]
    UnknownFact(String),
}

/// Graph an AMR-SG edge came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Hypothesis,
    Fact(String),
}

impl Origin {
    pub fn as_str(&self) -> &str {
        match self {
            Origin::Hypothesis => HYPOTHESIS_LABEL,
            Origin::Fact(id) => id,
        }
    }

    pub fn fact_id(&self) -> Option<&str> {
        match self {
            Origin::Hypothesis => None,
            Origin::Fact(id) => Some(id),
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == HYPOTHESIS_LABEL {
            Origin::Hypothesis
        } else {
            Origin::Fact(s)
        })
    }
}

/// Undirected, origin-tagged edge with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SgEdge {
    pub a: ConceptKey,
    pub b: ConceptKey,
    pub origin: Origin,
}

impl SgEdge {
    /// `None` for self-edges.
    pub fn new(x: ConceptKey, y: ConceptKey, origin: Origin) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Self { a: x, b: y, origin }),
            std::cmp::Ordering::Greater => Some(Self { a: y, b: x, origin }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrSg {
    pub nodes: BTreeSet<ConceptKey>,
    pub edges: BTreeSet<SgEdge>,
    pub question_nodes: BTreeSet<ConceptKey>,
    pub choice_nodes: BTreeSet<ConceptKey>,
    pub merged_fact_ids: BTreeSet<String>,
}

impl AmrSg {
    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(k) = self.question_nodes.intersection(&self.choice_nodes).next() {
            return Err(format!("`{k}` is both a question and a choice node"));
        }
        for e in &self.edges {
            if e.a >= e.b {
                return Err(format!("edge {}-{} is not ordered", e.a, e.b));
            }
            if !self.nodes.contains(&e.a) || !self.nodes.contains(&e.b) {
                return Err(format!("edge {}-{} has an endpoint outside the node set", e.a, e.b));
            }
            match &e.origin {
                Origin::Hypothesis => {
                    if self.crosses_partition(&e.a, &e.b) {
                        return Err(format!(
                            "hypothesis edge {}-{} crosses the question/choice cut",
                            e.a, e.b
                        ));
                    }
                }
                Origin::Fact(id) => {
                    if !self.merged_fact_ids.contains(id) {
                        return Err(format!("edge origin `{id}` was never merged"));
                    }
                }
            }
        }
        Ok(())
    }

    fn crosses_partition(&self, x: &ConceptKey, y: &ConceptKey) -> bool {
        (self.question_nodes.contains(x) && self.choice_nodes.contains(y))
            || (self.choice_nodes.contains(x) && self.question_nodes.contains(y))
    }
}

/// Splits J hypothesis key sets into shared question nodes and per-choice
/// remainders.
pub fn split_question_choice_nodes(
    hypothesis_keysets: &[BTreeSet<ConceptKey>],
) -> Result<(BTreeSet<ConceptKey>, Vec<BTreeSet<ConceptKey>>), SemGraphError> {
    let (first, rest) = hypothesis_keysets.split_first().ok_or(SemGraphError::EmptyHypothesis)?;
    if hypothesis_keysets.iter().any(BTreeSet::is_empty) {
        return Err(SemGraphError::EmptyHypothesis);
    }
    let question = rest
        .iter()
        .fold(first.clone(), |acc, s| acc.intersection(s).cloned().collect());
    let choices = hypothesis_keysets
        .iter()
        .map(|s| s.difference(&question).cloned().collect())
        .collect();
    Ok((question, choices))
}

/// Key-level undirected edges of one AMR, self-edges dropped.
fn keyed_edges(graph: &AmrGraph, policy: &KeyPolicy, origin: &Origin) -> (BTreeSet<ConceptKey>, Vec<SgEdge>) {
    let keys = policy.keys(graph);
    let edges = graph
        .edges()
        .iter()
        .filter_map(|e| SgEdge::new(keys[&e.source].clone(), keys[&e.target].clone(), origin.clone()))
        .collect();
    (keys.into_values().collect(), edges)
}

/// Merges the hypothesis with every pool fact reachable through shared
/// concept keys.
///
/// Hypothesis edges joining a question node to a choice node are cut. Facts
/// are added until no remaining fact shares a key with the graph, so the
/// result does not depend on pool order.
pub fn build_amr_sg(
    hypothesis: &AmrGraph,
    pool: &AmrBank,
    policy: &KeyPolicy,
    question_nodes: &BTreeSet<ConceptKey>,
    choice_nodes: &BTreeSet<ConceptKey>,
) -> AmrSg {
    let (hyp_nodes, hyp_edges) = keyed_edges(hypothesis, policy, &Origin::Hypothesis);
    let mut sg = AmrSg {
        nodes: hyp_nodes,
        edges: BTreeSet::new(),
        question_nodes: question_nodes.clone(),
        choice_nodes: choice_nodes.difference(question_nodes).cloned().collect(),
        merged_fact_ids: BTreeSet::new(),
    };
    for e in hyp_edges {
        if !sg.crosses_partition(&e.a, &e.b) {
            sg.edges.insert(e);
        }
    }

    let mut pending: Vec<(&str, BTreeSet<ConceptKey>, Vec<SgEdge>)> = pool
        .iter()
        .map(|(id, g)| {
            let (nodes, edges) = keyed_edges(g, policy, &Origin::Fact(id.to_string()));
            (id, nodes, edges)
        })
        .collect();

    loop {
        let before = pending.len();
        let mut i = 0;
        while i < pending.len() {
            if pending[i].1.iter().any(|k| sg.nodes.contains(k)) {
                let (id, nodes, edges) = pending.swap_remove(i);
                sg.nodes.extend(nodes);
                sg.edges.extend(edges);
                sg.merged_fact_ids.insert(id.to_string());
            } else {
                i += 1;
            }
        }
        if pending.len() == before || pending.is_empty() {
            break;
        }
    }
    sg
}

/// A simple path from a question node to a choice node over fact edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidencePath {
    pub nodes: Vec<ConceptKey>,
    pub origins: Vec<Origin>,
}

impl EvidencePath {
    /// `a→b→c`
    pub fn chain(&self) -> String {
        self.nodes.iter().map(ConceptKey::as_str).collect::<Vec<_>>().join("→")
    }

    pub fn fact_ids(&self) -> BTreeSet<&str> {
        self.origins.iter().filter_map(Origin::fact_id).collect()
    }

    pub fn validate(&self, sg: &AmrSg) -> Result<(), String> {
        let (Some(first), Some(last)) = (self.nodes.first(), self.nodes.last()) else {
            return Err("empty path".into());
        };
        if self.origins.len() + 1 != self.nodes.len() {
            return Err("origin count does not match node count".into());
        }
        if !sg.question_nodes.contains(first) {
            return Err(format!("path starts at non-question node `{first}`"));
        }
        if !sg.choice_nodes.contains(last) {
            return Err(format!("path ends at non-choice node `{last}`"));
        }
        let distinct: BTreeSet<_> = self.nodes.iter().collect();
        if distinct.len() != self.nodes.len() {
            return Err("path repeats a node".into());
        }
        for (pair, origin) in self.nodes.windows(2).zip(&self.origins) {
            if *origin == Origin::Hypothesis {
                return Err("path uses a hypothesis edge".into());
            }
            let edge = SgEdge::new(pair[0].clone(), pair[1].clone(), origin.clone());
            if !edge.is_some_and(|e| sg.edges.contains(&e)) {
                return Err(format!("no {origin} edge between `{}` and `{}`", pair[0], pair[1]));
            }
        }
        Ok(())
    }
}

/// Every simple path of at most `max_path_nodes` nodes from a question node
/// to a choice node, using fact edges only.
///
/// Parallel edges from different facts yield distinct paths. Paths passing
/// through a choice node on the way to another choice node are kept.
/// Traversal is depth-first in lexicographic key order.
pub fn find_evidence_paths(sg: &AmrSg, max_path_nodes: usize) -> Vec<EvidencePath> {
    let mut adjacency: HashMap<&ConceptKey, BTreeMap<&ConceptKey, Vec<&Origin>>> = HashMap::new();
    for e in &sg.edges {
        if e.origin == Origin::Hypothesis {
            continue;
        }
        adjacency
            .entry(&e.a)
            .or_default()
            .entry(&e.b)
            .or_default()
            .push(&e.origin);
        adjacency
            .entry(&e.b)
            .or_default()
            .entry(&e.a)
            .or_default()
            .push(&e.origin);
    }

    struct Search<'a> {
        adjacency: HashMap<&'a ConceptKey, BTreeMap<&'a ConceptKey, Vec<&'a Origin>>>,
        choice_nodes: &'a BTreeSet<ConceptKey>,
        max_nodes: usize,
        nodes: Vec<&'a ConceptKey>,
        origins: Vec<&'a Origin>,
        on_path: BTreeSet<&'a ConceptKey>,
        found: Vec<EvidencePath>,
    }

    impl<'a> Search<'a> {
        fn visit(&mut self, node: &'a ConceptKey) {
            if self.nodes.len() >= self.max_nodes {
                return;
            }
            let Some(neighbors) = self.adjacency.get(node) else {
                return;
            };
            let steps: Vec<(&'a ConceptKey, &'a Origin)> = neighbors
                .iter()
                .filter(|(next, _)| !self.on_path.contains(*next))
                .flat_map(|(next, origins)| origins.iter().map(move |o| (*next, *o)))
                .collect();
            for (next, origin) in steps {
                self.nodes.push(next);
                self.origins.push(origin);
                self.on_path.insert(next);
                if self.choice_nodes.contains(next) {
                    self.found.push(EvidencePath {
                        nodes: self.nodes.iter().map(|k| (*k).clone()).collect(),
                        origins: self.origins.iter().map(|o| (*o).clone()).collect(),
                    });
                }
                self.visit(next);
                self.on_path.remove(next);
                self.origins.pop();
                self.nodes.pop();
            }
        }
    }

    let mut search = Search {
        adjacency,
        choice_nodes: &sg.choice_nodes,
        max_nodes: max_path_nodes,
        nodes: Vec::new(),
        origins: Vec::new(),
        on_path: BTreeSet::new(),
        found: Vec::new(),
    };
    if max_path_nodes < 2 {
        return Vec::new();
    }
    for start in &sg.question_nodes {
        search.nodes.push(start);
        search.on_path.insert(start);
        search.visit(start);
        search.on_path.remove(start);
        search.nodes.pop();
    }
    search.found
}

/// An active fact with the evidence behind its rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveFact {
    pub fact_id: String,
    pub path_count: usize,
    pub score: f64,
}

/// Ranks facts on paths by path count, then retrieval score, then id, and
/// keeps the first `cap`.
pub fn rank_active_facts(
    paths: &[EvidencePath],
    retrieval_scores: &HashMap<String, f64>,
    cap: usize,
) -> Vec<ActiveFact> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for path in paths {
        for id in path.fact_ids() {
            *counts.entry(id).or_default() += 1;
        }
    }
    let mut ranked: Vec<ActiveFact> = counts
        .into_iter()
        .map(|(id, path_count)| ActiveFact {
            fact_id: id.to_string(),
            path_count,
            score: retrieval_scores.get(id).copied().unwrap_or(0.0),
        })
        .collect();
    ranked.sort_by(|x, y| {
        y.path_count
            .cmp(&x.path_count)
            .then_with(|| y.score.total_cmp(&x.score))
            .then_with(|| x.fact_id.cmp(&y.fact_id))
    });
    ranked.truncate(cap);
    ranked
}

pub fn select_active_facts(paths: &[EvidencePath], retrieval_scores: &HashMap<String, f64>, cap: usize) -> Vec<String> {
    rank_active_facts(paths, retrieval_scores, cap)
        .into_iter()
        .map(|f| f.fact_id)
        .collect()
}

/// Adjacency over {hypothesis, active facts}; two members are linked when
/// they share a concept key. The diagonal is always 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactConnectionGraph {
    pub labels: Vec<String>,
    pub adjacency: Vec<Vec<u8>>,
}

impl FactConnectionGraph {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..n).all(|j| self.adjacency[i][j] == self.adjacency[j][i]))
    }
}

pub fn build_fact_connection_graph(
    sg: &AmrSg,
    hypothesis_keys: &BTreeSet<ConceptKey>,
    active: &[String],
    fact_keysets: &HashMap<String, BTreeSet<ConceptKey>>,
) -> Result<FactConnectionGraph, SemGraphError> {
    let mut keysets: Vec<&BTreeSet<ConceptKey>> = vec![hypothesis_keys];
    for id in active {
        if !sg.merged_fact_ids.contains(id) {
            return Err(SemGraphError::UnknownFact(id.clone()));
        }
        keysets.push(
            fact_keysets
                .get(id)
                .ok_or_else(|| SemGraphError::UnknownFact(id.clone()))?,
        );
    }
    let n = keysets.len();
    let mut adjacency = vec![vec![0u8; n]; n];
    for i in 0..n {
        adjacency[i][i] = 1;
        for j in i + 1..n {
            if !keysets[i].is_disjoint(keysets[j]) {
                adjacency[i][j] = 1;
                adjacency[j][i] = 1;
            }
        }
    }
    let labels = std::iter::once(HYPOTHESIS_LABEL.to_string())
        .chain(active.iter().cloned())
        .collect();
    Ok(FactConnectionGraph { labels, adjacency })
}

/// Key sets of every fact in `bank`.
pub fn fact_keysets(bank: &AmrBank, policy: &KeyPolicy) -> HashMap<String, BTreeSet<ConceptKey>> {
    bank.iter().map(|(id, g)| (id.to_string(), policy.key_set(g))).collect()
}

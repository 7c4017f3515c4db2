//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls the code under test except to
//! construct inputs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use amrsg_core::penman::{parse_penman, AmrGraph, Attribute, ConceptKey, Edge};
use amrsg_core::reasoner::{
    backward_and_gradcheck, ChoiceGraph, NodeFeatures, QuestionInstance, ReasonerError, ReasonerParams, ReasonerShape,
};
use amrsg_core::semgraph::{AmrSg, Origin, SgEdge};
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn case_dir(name: &str) -> PathBuf {
    fixtures_dir().join("cases").join(name)
}

pub const CASE_NAMES: [&str; 7] = [
    "seismograph",
    "algae",
    "photosynthesis",
    "recycle",
    "weasel",
    "solar",
    "no_path",
];

/// Expected outcome of a worked case: the gold choice, an evidence chain
/// that must appear in its report, and facts that must be active.
pub struct CaseExpectation {
    pub name: &'static str,
    pub gold: usize,
    pub chain: &'static str,
    pub active: &'static [&'static str],
}

pub const CASE_EXPECTATIONS: [CaseExpectation; 6] = [
    CaseExpectation {
        name: "seismograph",
        gold: 2,
        chain: "seismograph→tool→measure-01→size-01→earthquake→ground",
        active: &["seis-core-1", "seis-common-1"],
    },
    CaseExpectation {
        name: "algae",
        gold: 0,
        chain: "algae→find-01→body→water→store-01→reservoir",
        active: &["algae-1", "algae-2"],
    },
    CaseExpectation {
        name: "photosynthesis",
        gold: 0,
        chain: "photosynthesis→plant→cabbage",
        active: &["photo-1", "photo-2"],
    },
    CaseExpectation {
        name: "recycle",
        gold: 1,
        chain: "recycle-01→paper→notebook",
        active: &["recycle-1", "recycle-2"],
    },
    CaseExpectation {
        name: "weasel",
        gold: 0,
        chain: "energy→move-01→weasel",
        active: &["weasel-1", "weasel-2"],
    },
    CaseExpectation {
        name: "solar",
        gold: 2,
        chain: "natural-03→energy→generate-01→sunlight→panel",
        active: &["solar-1", "solar-2"],
    },
];

pub fn case_config(name: &str) -> amrsg_core::pipeline::PipelineConfig {
    let patch = amrsg_core::pipeline::ConfigPatch::from_file(&case_dir(name).join("config.toml")).unwrap();
    amrsg_core::pipeline::PipelineConfig::from_patches([&patch]).unwrap()
}

// ---------------------------------------------------------------------------
// PENMAN

const CONCEPTS: [&str; 7] = ["want-01", "boy", "girl", "go-02", "city", "name", "believe-01"];
const ROLES: [&str; 7] = [
    ":ARG0",
    ":ARG1",
    ":ARG2",
    ":mod",
    ":location",
    ":ARG0-of",
    ":consist-of",
];
const ATTR_ROLES: [&str; 4] = [":op1", ":quant", ":polarity", ":value"];
const VALUES: [&str; 8] = ["Earth", "5", "-", "hello world", "2.5", "imperative", "+", "x1"];

/// Random connected rooted graph with `1..=max_nodes` variables: a random
/// spanning tree (edges in either direction) plus a few extra edges and
/// attributes.
pub fn random_amr<R: Rng>(rng: &mut R, max_nodes: usize) -> AmrGraph {
    let n = rng.gen_range(1..=max_nodes);
    let vars: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut variables = IndexMap::new();
    for v in &vars {
        variables.insert(v.clone(), CONCEPTS.choose(rng).unwrap().to_string());
    }
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let role = ROLES.choose(rng).unwrap().to_string();
        let (source, target) = if rng.gen_bool(0.7) {
            (vars[parent].clone(), vars[i].clone())
        } else {
            (vars[i].clone(), vars[parent].clone())
        };
        edges.push(Edge { source, role, target });
    }
    for _ in 0..rng.gen_range(0..=2) {
        if n < 2 {
            break;
        }
        edges.push(Edge {
            source: vars.choose(rng).unwrap().clone(),
            role: ROLES.choose(rng).unwrap().to_string(),
            target: vars.choose(rng).unwrap().clone(),
        });
    }
    let mut attributes = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        attributes.push(Attribute {
            source: vars.choose(rng).unwrap().clone(),
            role: ATTR_ROLES.choose(rng).unwrap().to_string(),
            value: VALUES.choose(rng).unwrap().to_string(),
        });
    }
    AmrGraph::new(vars[0].clone(), variables, edges, attributes).expect("generator builds valid graphs")
}

/// Brute-force graph isomorphism: searches for a concept- and
/// root-preserving bijection of variables under which the edge and
/// attribute multisets coincide.
pub fn isomorphic(g: &AmrGraph, h: &AmrGraph) -> bool {
    if g.variables().len() != h.variables().len()
        || g.edges().len() != h.edges().len()
        || g.attributes().len() != h.attributes().len()
    {
        return false;
    }
    let gv: Vec<&String> = g.variables().keys().collect();
    let hv: Vec<&String> = h.variables().keys().collect();

    fn multiset<T: Ord>(items: impl Iterator<Item = T>) -> BTreeMap<T, usize> {
        let mut m = BTreeMap::new();
        for i in items {
            *m.entry(i).or_insert(0) += 1;
        }
        m
    }
    let h_edges = multiset(
        h.edges()
            .iter()
            .map(|e| (e.source.clone(), e.role.clone(), e.target.clone())),
    );
    let h_attrs = multiset(
        h.attributes()
            .iter()
            .map(|a| (a.source.clone(), a.role.clone(), a.value.clone())),
    );

    #[allow(clippy::too_many_arguments)]
    fn search(
        i: usize,
        gv: &[&String],
        hv: &[&String],
        g: &AmrGraph,
        h: &AmrGraph,
        map: &mut BTreeMap<String, String>,
        used: &mut BTreeSet<String>,
        h_edges: &BTreeMap<(String, String, String), usize>,
        h_attrs: &BTreeMap<(String, String, String), usize>,
    ) -> bool {
        if i == gv.len() {
            let m = |v: &String| map[v].clone();
            let edges = multiset(g.edges().iter().map(|e| (m(&e.source), e.role.clone(), m(&e.target))));
            let attrs = multiset(
                g.attributes()
                    .iter()
                    .map(|a| (m(&a.source), a.role.clone(), a.value.clone())),
            );
            return &edges == h_edges && &attrs == h_attrs;
        }
        let var = gv[i];
        for cand in hv {
            if used.contains(*cand) || g.concept(var) != h.concept(cand) {
                continue;
            }
            if (var.as_str() == g.root()) != (cand.as_str() == h.root()) {
                continue;
            }
            map.insert(var.clone(), (*cand).clone());
            used.insert((*cand).clone());
            if search(i + 1, gv, hv, g, h, map, used, h_edges, h_attrs) {
                return true;
            }
            used.remove(*cand);
            map.remove(var);
        }
        false
    }
    search(
        0,
        &gv,
        &hv,
        g,
        h,
        &mut BTreeMap::new(),
        &mut BTreeSet::new(),
        &h_edges,
        &h_attrs,
    )
}

// ---------------------------------------------------------------------------
// AMR-SG

pub fn key(s: &str) -> ConceptKey {
    ConceptKey::new(s).unwrap()
}

/// Random AMR-SG over `n0..n{k}` with a random question/choice partition and
/// edges drawn from three facts plus the hypothesis (hypothesis edges never
/// cross the partition).
pub fn random_sg<R: Rng>(rng: &mut R, max_nodes: usize, edge_prob: f64) -> AmrSg {
    let n = rng.gen_range(2..=max_nodes);
    let nodes: Vec<ConceptKey> = (0..n).map(|i| key(&format!("n{i:02}"))).collect();
    let mut sg = AmrSg::default();
    sg.nodes.extend(nodes.iter().cloned());
    for k in &nodes {
        match rng.gen_range(0..4) {
            0 => {
                sg.question_nodes.insert(k.clone());
            }
            1 => {
                sg.choice_nodes.insert(k.clone());
            }
            _ => {}
        }
    }
    let facts = ["f1", "f2", "f3"];
    for i in 0..n {
        for j in i + 1..n {
            for f in facts {
                if rng.gen_bool(edge_prob / facts.len() as f64) {
                    let e = SgEdge::new(nodes[i].clone(), nodes[j].clone(), Origin::Fact(f.into())).unwrap();
                    sg.edges.insert(e);
                    sg.merged_fact_ids.insert(f.into());
                }
            }
            let crosses = (sg.question_nodes.contains(&nodes[i]) && sg.choice_nodes.contains(&nodes[j]))
                || (sg.choice_nodes.contains(&nodes[i]) && sg.question_nodes.contains(&nodes[j]));
            if !crosses && rng.gen_bool(0.1) {
                sg.edges
                    .insert(SgEdge::new(nodes[i].clone(), nodes[j].clone(), Origin::Hypothesis).unwrap());
            }
        }
    }
    sg
}

/// `(nodes, origins)` as plain strings.
pub type PathKey = (Vec<String>, Vec<String>);

/// Every simple question→choice path over fact edges, by breadth-first
/// growth of node sequences followed by expansion of parallel edges.
pub fn brute_force_paths(sg: &AmrSg, max_nodes: usize) -> BTreeSet<PathKey> {
    let mut origins_between: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for e in &sg.edges {
        if let Origin::Fact(id) = &e.origin {
            let (a, b) = (e.a.as_str().to_string(), e.b.as_str().to_string());
            origins_between
                .entry((a.clone(), b.clone()))
                .or_default()
                .push(id.clone());
            origins_between.entry((b, a)).or_default().push(id.clone());
        }
    }
    let all: Vec<String> = sg.nodes.iter().map(|k| k.as_str().to_string()).collect();
    let is_choice = |s: &str| sg.choice_nodes.iter().any(|k| k.as_str() == s);

    let mut frontier: Vec<Vec<String>> = sg.question_nodes.iter().map(|k| vec![k.as_str().to_string()]).collect();
    let mut sequences = Vec::new();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for seq in frontier {
            if seq.len() >= 2 && is_choice(seq.last().unwrap()) {
                sequences.push(seq.clone());
            }
            if seq.len() == max_nodes {
                continue;
            }
            for cand in &all {
                if !seq.contains(cand) && origins_between.contains_key(&(seq.last().unwrap().clone(), cand.clone())) {
                    let mut s = seq.clone();
                    s.push(cand.clone());
                    next.push(s);
                }
            }
        }
        frontier = next;
    }

    let mut out = BTreeSet::new();
    for seq in sequences {
        let mut labelings: Vec<Vec<String>> = vec![vec![]];
        for w in seq.windows(2) {
            let options = &origins_between[&(w[0].clone(), w[1].clone())];
            labelings = labelings
                .into_iter()
                .flat_map(|l| {
                    options.iter().map(move |o| {
                        let mut l = l.clone();
                        l.push(o.clone());
                        l
                    })
                })
                .collect();
        }
        for l in labelings {
            out.insert((seq.clone(), l));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Reasoner

/// Random symmetric 0/1 matrix with unit diagonal.
pub fn random_adjacency<R: Rng>(rng: &mut R, n: usize, p: f64) -> DMatrix<f64> {
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    a
}

/// Entry-by-entry `A_ij / sqrt(deg_i * deg_j)` with degrees summed by hand.
pub fn dense_normalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut deg = vec![0.0; n];
    for (i, d) in deg.iter_mut().enumerate() {
        for j in 0..n {
            *d += a[(i, j)];
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = a[(i, j)] / (deg[i] * deg[j]).sqrt();
        }
    }
    out
}

/// Plain-loop GCN: `X^(k) = [ReLU(Λ X^(k-1) W_1) : … : ReLU(Λ X^(k-1) W_h)]`.
pub fn straight_line_gcn(x0: &DMatrix<f64>, lam: &DMatrix<f64>, params: &ReasonerParams) -> DMatrix<f64> {
    let n = x0.nrows();
    let d = x0.ncols();
    let mut x: Vec<Vec<f64>> = (0..n).map(|r| (0..d).map(|c| x0[(r, c)]).collect()).collect();
    for layer in &params.layers {
        // Λ X
        let mut lx = vec![vec![0.0; d]; n];
        for r in 0..n {
            for c in 0..d {
                let mut s = 0.0;
                for k in 0..n {
                    s += lam[(r, k)] * x[k][c];
                }
                lx[r][c] = s;
            }
        }
        let mut next = vec![vec![0.0; d]; n];
        let mut col = 0;
        for w in layer {
            for hc in 0..w.ncols() {
                for r in 0..n {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += lx[r][k] * w[(k, hc)];
                    }
                    next[r][col] = if s > 0.0 { s } else { 0.0 };
                }
                col += 1;
            }
        }
        x = next;
    }
    DMatrix::from_fn(n, d, |r, c| x[r][c])
}

/// Plain-loop gate and summed output head.
pub fn straight_line_score(x_cls: &DVector<f64>, x_h: &DVector<f64>, params: &ReasonerParams) -> (f64, f64) {
    let d = x_cls.len();
    let mut z = params.b_lambda;
    for i in 0..d {
        z += params.w_lambda[i] * x_cls[i] + params.w_lambda[d + i] * x_h[i];
    }
    let lambda = 1.0 / (1.0 + (-z).exp());
    let mut score = 0.0;
    for r in 0..d {
        let mut s = params.b_o[r];
        for c in 0..d {
            s += params.w_o[(r, c)] * (lambda * x_h[c] + (1.0 - lambda) * x_cls[c]);
        }
        score += s;
    }
    (score, lambda)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

// ---------------------------------------------------------------------------
// Pipeline reports

/// Checks a serialized pair report against the path and selection contracts
/// without consulting the graph that produced it.
pub fn check_report_invariants(
    r: &amrsg_core::pipeline::PairReport,
    active_cap: usize,
    max_path_nodes: usize,
) -> Result<(), String> {
    let merged: BTreeSet<&str> = r.merged_fact_ids.iter().map(String::as_str).collect();
    for p in &r.paths {
        let distinct: BTreeSet<&String> = p.nodes.iter().collect();
        if p.nodes.len() < 2 || p.nodes.len() > max_path_nodes || distinct.len() != p.nodes.len() {
            return Err(format!("bad path length or repeated node: {}", p.chain));
        }
        if !r.question_nodes.contains(&p.nodes[0]) || !r.choice_nodes.contains(p.nodes.last().unwrap()) {
            return Err(format!(
                "path does not run from a question to a choice node: {}",
                p.chain
            ));
        }
        if p.origins.len() != p.nodes.len() - 1 || p.origins.iter().any(|o| !merged.contains(o.as_str())) {
            return Err(format!("path uses a non-fact edge: {}", p.chain));
        }
        if p.chain != p.nodes.join("→") {
            return Err(format!("chain text disagrees with nodes: {}", p.chain));
        }
    }
    if r.active_facts.len() > active_cap {
        return Err(format!("{} active facts exceed the cap", r.active_facts.len()));
    }
    let pool: BTreeSet<&str> = r.pool.iter().map(|e| e.fact_id.as_str()).collect();
    for a in &r.active_facts {
        let count = r.paths.iter().filter(|p| p.origins.contains(&a.fact_id)).count();
        if !pool.contains(a.fact_id.as_str()) || count != a.path_count || count == 0 {
            return Err(format!("active fact {} is not backed by its paths", a.fact_id));
        }
    }
    let adj = &r.connection_graph.adjacency;
    if adj.len() != r.active_facts.len() + 1 {
        return Err("connection graph size disagrees with the active set".into());
    }
    for (i, row) in adj.iter().enumerate() {
        if row.len() != adj.len() || row[i] != 1 || (0..adj.len()).any(|j| row[j] != adj[j][i]) {
            return Err("connection graph is not a symmetric self-looped square".into());
        }
    }
    if !(0.0..=1.0).contains(&r.prob) || !r.raw_score.is_finite() {
        return Err("score out of range".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared generators for pools and reasoner instances

const VOCAB: [&str; 14] = [
    "water", "plant", "sun", "grow-01", "need-01", "energy", "light", "soil", "root", "leaf", "animal", "eat-01",
    "seed", "rain",
];

/// Small random AMR over a shared vocabulary, so facts overlap.
pub fn random_fact<R: Rng>(rng: &mut R) -> AmrGraph {
    let n = rng.gen_range(1..=4);
    let concepts: Vec<&str> = VOCAB.choose_multiple(rng, n).copied().collect();
    let mut text = format!("(v0 / {}", concepts[0]);
    for (i, c) in concepts.iter().enumerate().skip(1) {
        text.push_str(&format!(" :ARG{} (v{i} / {c})", i % 3));
    }
    text.push(')');
    parse_penman(&text).unwrap()
}

pub fn random_pool<R: Rng>(rng: &mut R) -> (AmrGraph, Vec<(String, AmrGraph)>) {
    let hyp = random_fact(rng);
    let facts = (0..rng.gen_range(0..12))
        .map(|i| (format!("f{i:02}"), random_fact(rng)))
        .collect();
    (hyp, facts)
}

pub fn random_question<R: Rng>(rng: &mut R, nodes: usize, dim: usize, choices: usize) -> QuestionInstance {
    let graphs = (0..choices)
        .map(|_| {
            let features = NodeFeatures::new(random_matrix(rng, nodes, dim)).unwrap();
            let cls = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            ChoiceGraph::new(features, &random_adjacency(rng, nodes, 0.5), cls).unwrap()
        })
        .collect();
    QuestionInstance {
        choices: graphs,
        answer: Some(rng.gen_range(0..choices)),
    }
}

/// Gradient check that moves the parameter sample away from ReLU kinks.
pub fn gradcheck_resampling(question: &QuestionInstance, shape: ReasonerShape, seed: u64, eps: f64) -> f64 {
    let mut seed = seed;
    for _ in 0..20 {
        let params = ReasonerParams::init(shape, seed).unwrap();
        match backward_and_gradcheck(question, &params, eps) {
            Err(ReasonerError::NearReluKink { .. }) => seed += 1000,
            other => return other.unwrap(),
        }
    }
    panic!("no kink-free sample found");
}

//! PENMAN notation for AMR graphs.
//!
//! The parser accepts a single rooted expression such as
//! `(p / planet :name (n / name :op1 "Earth"))`. Nested nodes and variable
//! re-references become edges; quoted strings and bare constants become
//! attributes. Inverse roles (`:ARG0-of`) are normalized to the forward edge
//! so that a graph has one canonical edge list regardless of how it was
//! laid out in text.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Roles that end in `-of` but are not inversions of another role.
const NON_INVERTIBLE_ROLES: &[&str] = &[":consist-of", ":prep-out-of", ":prep-on-behalf-of"];

/// Nesting deeper than this is rejected instead of recursing further.
const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PenmanError {
    #[error("malformed PENMAN at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("variable `{0}` is not reachable from the root")]
    UnreachableVariable(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BankError {
    #[error("block {block}: malformed PENMAN at line {line}, column {column}: {message}")]
    Malformed {
        block: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("block {block}: missing `# ::id` line")]
    MissingIdLine { block: usize },
    #[error("block {block}: duplicate fact id `{id}`")]
    DuplicateFactId { block: usize, id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub role: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub source: String,
    pub role: String,
    pub value: String,
}

/// One sentence's rooted AMR.
///
/// Variables keep declaration order; edges and attributes keep insertion
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    root: String,
    variables: IndexMap<String, String>,
    edges: Vec<Edge>,
    attributes: Vec<Attribute>,
}

impl AmrGraph {
    /// Builds a graph, checking the structural invariants.
    pub fn new(
        root: impl Into<String>,
        variables: IndexMap<String, String>,
        edges: Vec<Edge>,
        attributes: Vec<Attribute>,
    ) -> Result<Self, PenmanError> {
        let root = root.into();
        if !variables.contains_key(&root) {
            return Err(PenmanError::InvalidGraph(format!("root `{root}` is not declared")));
        }
        for (var, concept) in &variables {
            if var.is_empty() || !var.chars().all(is_symbol_char) {
                return Err(PenmanError::InvalidGraph(format!("invalid variable id `{var}`")));
            }
            if concept.is_empty() {
                return Err(PenmanError::InvalidGraph(format!(
                    "variable `{var}` has an empty concept"
                )));
            }
        }
        let edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| make_edge(e.source, e.role, e.target))
            .collect();
        for e in &edges {
            check_role(&e.role)?;
            for end in [&e.source, &e.target] {
                if !variables.contains_key(end) {
                    return Err(PenmanError::InvalidGraph(format!(
                        "edge endpoint `{end}` is not declared"
                    )));
                }
            }
        }
        for a in &attributes {
            check_role(&a.role)?;
            if !variables.contains_key(&a.source) {
                return Err(PenmanError::InvalidGraph(format!(
                    "attribute source `{}` is not declared",
                    a.source
                )));
            }
        }
        Ok(Self {
            root,
            variables,
            edges,
            attributes,
        })
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn variables(&self) -> &IndexMap<String, String> {
        &self.variables
    }

    pub fn concept(&self, var: &str) -> Option<&str> {
        self.variables.get(var).map(String::as_str)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    /// Attributes of `var` in declaration order.
    pub fn attributes_of<'a>(&'a self, var: &'a str) -> impl Iterator<Item = &'a Attribute> + 'a {
        self.attributes.iter().filter(move |a| a.source == var)
    }
}

fn check_role(role: &str) -> Result<(), PenmanError> {
    match role.strip_prefix(':') {
        Some(name) if !name.is_empty() && name.chars().all(is_symbol_char) => Ok(()),
        _ => Err(PenmanError::InvalidGraph(format!("invalid role `{role}`"))),
    }
}

impl fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match serialize_penman(self) {
            Ok(text) => f.write_str(&text),
            Err(_) => Err(fmt::Error),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    LParen,
    RParen,
    Slash,
    Role(String),
    Quoted(String),
    Symbol(String),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    line: usize,
    column: usize,
}

fn is_symbol_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | '/' | ':' | '"')
}

fn malformed(line: usize, column: usize, message: impl Into<String>) -> PenmanError {
    PenmanError::Malformed {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, PenmanError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    let advance = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };

    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, column);
        if c.is_whitespace() {
            chars.next();
            advance(c, &mut line, &mut column);
            continue;
        }
        let kind = match c {
            '(' => {
                chars.next();
                advance(c, &mut line, &mut column);
                TokenKind::LParen
            }
            ')' => {
                chars.next();
                advance(c, &mut line, &mut column);
                TokenKind::RParen
            }
            '/' => {
                chars.next();
                advance(c, &mut line, &mut column);
                TokenKind::Slash
            }
            '"' => {
                chars.next();
                advance(c, &mut line, &mut column);
                let mut value = String::new();
                let mut closed = false;
                while let Some(c) = chars.next() {
                    advance(c, &mut line, &mut column);
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some(escaped) => {
                                advance(escaped, &mut line, &mut column);
                                value.push(escaped);
                            }
                            None => break,
                        },
                        other => value.push(other),
                    }
                }
                if !closed {
                    return Err(malformed(start_line, start_col, "unterminated string"));
                }
                TokenKind::Quoted(value)
            }
            ':' => {
                chars.next();
                advance(c, &mut line, &mut column);
                let mut role = String::from(":");
                while let Some(&c) = chars.peek() {
                    if !is_symbol_char(c) {
                        break;
                    }
                    role.push(c);
                    chars.next();
                    advance(c, &mut line, &mut column);
                }
                if role.len() == 1 {
                    return Err(malformed(start_line, start_col, "empty role name"));
                }
                TokenKind::Role(role)
            }
            _ => {
                let mut sym = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_symbol_char(c) {
                        break;
                    }
                    sym.push(c);
                    chars.next();
                    advance(c, &mut line, &mut column);
                }
                TokenKind::Symbol(sym)
            }
        };
        tokens.push(Token {
            kind,
            line: start_line,
            column: start_col,
        });
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser

/// A bare symbol shaped like an AMR variable (`x`, `p2`).
fn looks_like_variable(sym: &str) -> bool {
    let mut chars = sym.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_digit()),
        _ => false,
    }
}

fn is_inverse_role(role: &str) -> bool {
    role.ends_with("-of") && !NON_INVERTIBLE_ROLES.contains(&role)
}

/// The role as written at the other endpoint.
pub fn invert_role(role: &str) -> String {
    if is_inverse_role(role) {
        role[..role.len() - 3].to_string()
    } else {
        format!("{role}-of")
    }
}

enum PendingValue {
    Var(String),
    Bare(String, usize, usize),
    Quoted(String),
}

struct PendingRelation {
    source: String,
    role: String,
    value: PendingValue,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    variables: IndexMap<String, String>,
    relations: Vec<PendingRelation>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn eof_error(&self, message: &str) -> PenmanError {
        malformed(self.end.0, self.end.1, message)
    }

    fn node(&mut self, depth: usize) -> Result<String, PenmanError> {
        let open = self.next().ok_or_else(|| self.eof_error("expected `(`"))?;
        if open.kind != TokenKind::LParen {
            return Err(malformed(open.line, open.column, "expected `(`"));
        }
        if depth > MAX_DEPTH {
            return Err(malformed(open.line, open.column, "nesting too deep"));
        }
        let var_tok = self
            .next()
            .ok_or_else(|| self.eof_error("unbalanced parentheses: expected variable"))?;
        let var = match var_tok.kind {
            TokenKind::Symbol(s) => s,
            _ => return Err(malformed(var_tok.line, var_tok.column, "expected variable")),
        };
        let slash = self
            .next()
            .ok_or_else(|| self.eof_error("unbalanced parentheses: expected `/`"))?;
        if slash.kind != TokenKind::Slash {
            return Err(malformed(
                slash.line,
                slash.column,
                format!("expected `/` after `{var}`"),
            ));
        }
        let concept_tok = self.next().ok_or_else(|| self.eof_error("missing concept after `/`"))?;
        let concept = match concept_tok.kind {
            TokenKind::Symbol(s) | TokenKind::Quoted(s) if !s.is_empty() => s,
            _ => {
                return Err(malformed(
                    concept_tok.line,
                    concept_tok.column,
                    "missing concept after `/`",
                ))
            }
        };
        if self.variables.contains_key(&var) {
            return Err(malformed(
                var_tok.line,
                var_tok.column,
                format!("variable `{var}` declared twice"),
            ));
        }
        self.variables.insert(var.clone(), concept);

        loop {
            let tok = self
                .next()
                .ok_or_else(|| self.eof_error("unbalanced parentheses: missing `)`"))?;
            match tok.kind {
                TokenKind::RParen => return Ok(var),
                TokenKind::Role(role) => {
                    let value = match self.peek().map(|t| t.kind.clone()) {
                        None => return Err(self.eof_error(&format!("missing value for `{role}`"))),
                        Some(TokenKind::LParen) => PendingValue::Var(self.node(depth + 1)?),
                        Some(TokenKind::Quoted(s)) => {
                            self.pos += 1;
                            PendingValue::Quoted(s)
                        }
                        Some(TokenKind::Symbol(s)) => {
                            let t = self.next().expect("peeked");
                            PendingValue::Bare(s, t.line, t.column)
                        }
                        Some(_) => {
                            let t = self.next().expect("peeked");
                            return Err(malformed(t.line, t.column, format!("missing value for `{role}`")));
                        }
                    };
                    self.relations.push(PendingRelation {
                        source: var.clone(),
                        role,
                        value,
                    });
                }
                _ => return Err(malformed(tok.line, tok.column, "expected role or `)`")),
            }
        }
    }
}

/// Parses one PENMAN expression into an [`AmrGraph`].
pub fn parse_penman(text: &str) -> Result<AmrGraph, PenmanError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(malformed(1, 1, "empty input"));
    }
    let end = text
        .lines()
        .enumerate()
        .last()
        .map_or((1, 1), |(i, l)| (i + 1, l.chars().count() + 1));
    let mut parser = Parser {
        tokens,
        pos: 0,
        end,
        variables: IndexMap::new(),
        relations: Vec::new(),
    };
    let root = parser.node(0)?;
    if let Some(extra) = parser.peek() {
        let message = if extra.kind == TokenKind::RParen {
            "unbalanced parentheses: unexpected `)`"
        } else {
            "trailing content after the top node"
        };
        return Err(malformed(extra.line, extra.column, message));
    }

    let mut edges = Vec::new();
    let mut attributes = Vec::new();
    for rel in parser.relations {
        match rel.value {
            PendingValue::Var(target) => edges.push(make_edge(rel.source, rel.role, target)),
            PendingValue::Bare(sym, line, column) => {
                if parser.variables.contains_key(&sym) {
                    edges.push(make_edge(rel.source, rel.role, sym));
                } else if looks_like_variable(&sym) {
                    return Err(malformed(line, column, format!("undeclared variable `{sym}`")));
                } else {
                    attributes.push(Attribute {
                        source: rel.source,
                        role: rel.role,
                        value: sym,
                    });
                }
            }
            PendingValue::Quoted(value) => attributes.push(Attribute {
                source: rel.source,
                role: rel.role,
                value,
            }),
        }
    }
    Ok(AmrGraph {
        root,
        variables: parser.variables,
        edges,
        attributes,
    })
}

fn make_edge(source: String, role: String, target: String) -> Edge {
    if is_inverse_role(&role) {
        Edge {
            source: target,
            role: invert_role(&role),
            target: source,
        }
    } else {
        Edge { source, role, target }
    }
}

// ---------------------------------------------------------------------------
// Serializer

fn needs_quotes(graph: &AmrGraph, value: &str) -> bool {
    if graph.variables.contains_key(value) {
        return true;
    }
    if value == "-" || value == "+" {
        return false;
    }
    value.parse::<f64>().map_or(true, |v| !v.is_finite()) || !value.chars().all(is_symbol_char)
}

fn write_constant(out: &mut String, graph: &AmrGraph, value: &str) {
    if needs_quotes(graph, value) {
        out.push('"');
        for c in value.chars() {
            if c == '"' || c == '\\' {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
    } else {
        out.push_str(value);
    }
}

/// Writes `graph` as single-line PENMAN text.
///
/// Edges are laid out in insertion order at their source node. An edge is
/// written inverted (`:role-of`) only when its source has not yet been
/// declared at the point the target is laid out; a variable seen a second
/// time is written as a bare re-reference.
pub fn serialize_penman(graph: &AmrGraph) -> Result<String, PenmanError> {
    let mut incident: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in graph.edges.iter().enumerate() {
        incident.entry(e.source.as_str()).or_default().push(i);
        if e.target != e.source {
            incident.entry(e.target.as_str()).or_default().push(i);
        }
    }

    struct Writer<'g> {
        graph: &'g AmrGraph,
        incident: HashMap<&'g str, Vec<usize>>,
        visited: HashSet<&'g str>,
        emitted: Vec<bool>,
        out: String,
    }

    impl<'g> Writer<'g> {
        fn node(&mut self, var: &'g str) {
            let concept = &self.graph.variables[var];
            let _ = write!(self.out, "({var} / ");
            if concept.chars().all(is_symbol_char) {
                self.out.push_str(concept);
            } else {
                write_constant(&mut self.out, self.graph, concept);
            }
            let edges = self.incident.get(var).cloned().unwrap_or_default();
            for i in edges {
                if self.emitted[i] {
                    continue;
                }
                let e = &self.graph.edges[i];
                let (role, other) = if e.source == var {
                    (e.role.clone(), e.target.as_str())
                } else if !self.visited.contains(e.source.as_str()) {
                    (invert_role(&e.role), e.source.as_str())
                } else {
                    // left for the source, which is already open on the stack
                    continue;
                };
                self.emitted[i] = true;
                let _ = write!(self.out, " {role} ");
                if self.visited.insert(other) {
                    self.node(other);
                } else {
                    self.out.push_str(other);
                }
            }
            for a in self.graph.attributes_of(var) {
                let _ = write!(self.out, " {} ", a.role);
                write_constant(&mut self.out, self.graph, &a.value);
            }
            self.out.push(')');
        }
    }

    let mut writer = Writer {
        graph,
        incident,
        visited: HashSet::from([graph.root.as_str()]),
        emitted: vec![false; graph.edges.len()],
        out: String::new(),
    };
    writer.node(&graph.root);

    if let Some(var) = graph.variables.keys().find(|v| !writer.visited.contains(v.as_str())) {
        return Err(PenmanError::UnreachableVariable(var.clone()));
    }
    Ok(writer.out)
}

// ---------------------------------------------------------------------------
// Concept keys

/// Merge identity of an AMR-SG node: NFC-normalized, ASCII-lowercased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptKey(String);

impl ConceptKey {
    /// Normalizes `raw` into a key. Returns `None` for an empty result.
    pub fn new(raw: &str) -> Option<Self> {
        let key: String = raw.trim().nfc().collect::<String>().to_ascii_lowercase();
        (!key.is_empty()).then_some(Self(key))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ConceptKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub const DEFAULT_OVERGENERAL: &[&str] = &["name", "thing", "person", "string-entity"];

/// How variables map to merge keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPolicy {
    overgeneral: BTreeSet<String>,
    /// Drop a trailing sense tag (`measure-01` -> `measure`).
    pub strip_senses: bool,
}

impl Default for KeyPolicy {
    fn default() -> Self {
        Self::new(DEFAULT_OVERGENERAL.iter().copied())
    }
}

impl KeyPolicy {
    pub fn new<I, S>(overgeneral: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            overgeneral: overgeneral
                .into_iter()
                .filter_map(|s| ConceptKey::new(s.as_ref()).map(|k| k.0))
                .collect(),
            strip_senses: false,
        }
    }

    pub fn with_strip_senses(mut self, strip: bool) -> Self {
        self.strip_senses = strip;
        self
    }

    pub fn overgeneral(&self) -> &BTreeSet<String> {
        &self.overgeneral
    }

    pub fn is_overgeneral(&self, concept: &str) -> bool {
        ConceptKey::new(concept).is_some_and(|k| self.overgeneral.contains(&k.0))
    }

    /// The key of one variable of `graph`.
    pub fn key_of(&self, graph: &AmrGraph, var: &str) -> Option<ConceptKey> {
        let concept = graph.concept(var)?;
        if self.is_overgeneral(concept) {
            if let Some(key) = graph.attributes_of(var).find_map(|a| ConceptKey::new(&a.value)) {
                return Some(key);
            }
        }
        let label = if self.strip_senses {
            strip_sense(concept)
        } else {
            concept
        };
        ConceptKey::new(label).or_else(|| ConceptKey::new(concept))
    }

    /// Keys for every variable, in declaration order.
    pub fn keys(&self, graph: &AmrGraph) -> IndexMap<String, ConceptKey> {
        graph
            .variables()
            .keys()
            .map(|var| {
                let key = self
                    .key_of(graph, var)
                    .expect("concept labels are non-empty by construction");
                (var.clone(), key)
            })
            .collect()
    }

    /// The distinct keys of `graph`.
    pub fn key_set(&self, graph: &AmrGraph) -> BTreeSet<ConceptKey> {
        self.keys(graph).into_values().collect()
    }
}

fn strip_sense(concept: &str) -> &str {
    match concept.rsplit_once('-') {
        Some((stem, sense)) if !stem.is_empty() && !sense.is_empty() && sense.chars().all(|c| c.is_ascii_digit()) => {
            stem
        }
        _ => concept,
    }
}

/// Maps each variable to its merge key under the given over-general set.
pub fn concept_keys<I, S>(graph: &AmrGraph, overgeneral: I) -> IndexMap<String, ConceptKey>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    KeyPolicy::new(overgeneral).keys(graph)
}

// ---------------------------------------------------------------------------
// AMR bank

/// Ordered, id-unique collection of AMRs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AmrBank {
    entries: IndexMap<String, AmrGraph>,
}

impl AmrBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry; returns `false` (and leaves the bank unchanged) if
    /// the id already exists.
    pub fn insert(&mut self, id: impl Into<String>, graph: AmrGraph) -> bool {
        let id = id.into();
        if self.entries.contains_key(&id) {
            return false;
        }
        self.entries.insert(id, graph);
        true
    }

    pub fn get(&self, id: &str) -> Option<&AmrGraph> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AmrGraph)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Renders the bank in the same block format [`parse_amr_bank`] reads.
    pub fn to_text(&self) -> Result<String, PenmanError> {
        let mut out = String::new();
        for (id, graph) in &self.entries {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "# ::id {id}");
            out.push_str(&serialize_penman(graph)?);
            out.push('\n');
        }
        Ok(out)
    }
}

impl<'a> IntoIterator for &'a AmrBank {
    type Item = (&'a String, &'a AmrGraph);
    type IntoIter = indexmap::map::Iter<'a, String, AmrGraph>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

fn id_from_comment(line: &str) -> Option<&str> {
    let rest = line.trim_start_matches('#').trim_start();
    let pos = rest.find("::id")?;
    let after = &rest[pos + 4..];
    if !after.starts_with(char::is_whitespace) {
        return None;
    }
    after.split_whitespace().next()
}

/// Parses blank-line-separated `# ::id` + PENMAN blocks.
pub fn parse_amr_bank(text: &str) -> Result<AmrBank, BankError> {
    let mut bank = AmrBank::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let mut block_index = 0usize;

    let mut flush = |block: &mut Vec<(usize, &str)>, bank: &mut AmrBank| -> Result<(), BankError> {
        if block.is_empty() {
            return Ok(());
        }
        let index = block_index;
        block_index += 1;
        let id = block
            .iter()
            .filter(|(_, l)| l.trim_start().starts_with('#'))
            .find_map(|(_, l)| id_from_comment(l))
            .ok_or(BankError::MissingIdLine { block: index })?
            .to_string();
        let body: Vec<(usize, &str)> = block
            .iter()
            .copied()
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .collect();
        let first_line = body.first().map_or(block[0].0, |(n, _)| *n);
        let penman = body.iter().map(|(_, l)| *l).collect::<Vec<_>>().join("\n");
        let graph = parse_penman(&penman).map_err(|e| match e {
            PenmanError::Malformed { line, column, message } => BankError::Malformed {
                block: index,
                line: first_line + line - 1,
                column,
                message,
            },
            other => BankError::Malformed {
                block: index,
                line: first_line,
                column: 1,
                message: other.to_string(),
            },
        })?;
        if !bank.insert(id.clone(), graph) {
            return Err(BankError::DuplicateFactId { block: index, id });
        }
        block.clear();
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, &mut bank)?;
        } else {
            block.push((i + 1, line));
        }
    }
    flush(&mut block, &mut bank)?;
    Ok(bank)
}

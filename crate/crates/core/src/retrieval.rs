//! Hypothesis generation and BM25 fact retrieval over a local corpus.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("empty question or choice")]
    EmptyInput,
    #[error("duplicate fact id `{0}`")]
    DuplicateFactId(String),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParameters { k1: f64, b: f64 },
    #[error("{file}:{line}: {message}")]
    Format { file: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactSource {
    Core,
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRecord {
    pub fact_id: String,
    pub text: String,
    pub score: f64,
    pub source: FactSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub question_id: String,
    pub choice_index: usize,
    pub text: String,
}

/// One line of a question file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub question: String,
    pub choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_idx: Option<usize>,
}

impl Question {
    pub fn hypotheses(&self) -> Result<Vec<Hypothesis>, RetrievalError> {
        self.choices
            .iter()
            .enumerate()
            .map(|(choice_index, choice)| {
                Ok(Hypothesis {
                    question_id: self.id.clone(),
                    choice_index,
                    text: generate_hypothesis(&self.question, choice)?,
                })
            })
            .collect()
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_blank_marker(token: &str) -> bool {
    token.len() >= 3 && token.chars().all(|c| c == '_')
}

/// Turns a question and one choice into a declarative hypothesis.
///
/// A blank marker (`___`) is filled with the choice; otherwise the choice is
/// appended, dropping a trailing `?`.
pub fn generate_hypothesis(question: &str, choice: &str) -> Result<String, RetrievalError> {
    let question = question.trim();
    let choice = choice.trim();
    if question.is_empty() || choice.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }

    // blank markers may be glued to punctuation, e.g. "in ___."
    if let Some(start) = find_blank(question) {
        let end = start + question[start..].chars().take_while(|&c| c == '_').count();
        let filled = format!("{}{}{}", &question[..start], choice, &question[end..]);
        return Ok(normalize_spaces(&filled));
    }

    let stem = question.strip_suffix('?').unwrap_or(question);
    Ok(normalize_spaces(&format!("{stem} {choice}")))
}

fn find_blank(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'_' {
            let run = bytes[i..].iter().take_while(|&&b| b == b'_').count();
            if is_blank_marker(&text[i..i + run]) {
                return Some(i);
            }
            i += run;
        } else {
            i += 1;
        }
    }
    None
}

fn normalize_spaces(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Document {
    fact_id: String,
    text: String,
    length: usize,
}

/// Immutable BM25 index over a fact corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusIndex {
    documents: Vec<Document>,
    /// token -> (document index, term frequency), document indices ascending
    postings: HashMap<String, Vec<(usize, u32)>>,
    avg_doc_len: f64,
    params: Bm25Params,
    source: FactSource,
}

/// Indexes `(fact_id, text)` pairs.
pub fn build_index<I, S, T>(corpus: I, params: Bm25Params) -> Result<CorpusIndex, RetrievalError>
where
    I: IntoIterator<Item = (S, T)>,
    S: Into<String>,
    T: Into<String>,
{
    if params.k1.is_nan() || params.k1 <= 0.0 || !(0.0..=1.0).contains(&params.b) {
        return Err(RetrievalError::InvalidParameters {
            k1: params.k1,
            b: params.b,
        });
    }
    let mut seen = HashSet::new();
    let mut documents = Vec::new();
    let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
    let mut total_len = 0usize;

    for (doc_idx, (id, text)) in corpus.into_iter().enumerate() {
        let (fact_id, text) = (id.into(), text.into());
        if !seen.insert(fact_id.clone()) {
            return Err(RetrievalError::DuplicateFactId(fact_id));
        }
        let tokens = tokenize(&text);
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (token, count) in tf {
            postings.entry(token).or_default().push((doc_idx, count));
        }
        total_len += tokens.len();
        documents.push(Document {
            fact_id,
            text,
            length: tokens.len(),
        });
    }

    let avg_doc_len = if documents.is_empty() {
        0.0
    } else {
        total_len as f64 / documents.len() as f64
    };
    Ok(CorpusIndex {
        documents,
        postings,
        avg_doc_len,
        params,
        source: FactSource::Common,
    })
}

impl CorpusIndex {
    /// Tags every record this index returns with `source`.
    pub fn with_source(mut self, source: FactSource) -> Self {
        self.source = source;
        self
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, Vec::len)
    }

    pub fn text(&self, fact_id: &str) -> Option<&str> {
        self.documents
            .iter()
            .find(|d| d.fact_id == fact_id)
            .map(|d| d.text.as_str())
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.documents.len() as f64;
        let df = self.document_frequency(token) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_doc_len;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Okapi BM25 scores of every document with a positive score. Distinct
    /// query tokens each contribute once.
    pub fn scores(&self, query: &str) -> HashMap<usize, f64> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let Some(posting) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, tf) in posting {
                *scores.entry(doc).or_default() += self.term_weight(idf, tf, self.documents[doc].length);
            }
        }
        scores.retain(|_, s| *s > 0.0);
        scores
    }

    /// Top-`m` documents by BM25 score, ties broken by ascending fact id.
    pub fn retrieve(&self, query: &str, m: usize) -> Vec<FactRecord> {
        let mut hits: Vec<(usize, f64)> = self.scores(query).into_iter().collect();
        hits.sort_by(|(da, sa), (db, sb)| {
            sb.total_cmp(sa)
                .then_with(|| self.documents[*da].fact_id.cmp(&self.documents[*db].fact_id))
        });
        hits.truncate(m);
        hits.into_iter()
            .map(|(doc, score)| FactRecord {
                fact_id: self.documents[doc].fact_id.clone(),
                text: self.documents[doc].text.clone(),
                score,
                source: self.source,
            })
            .collect()
    }
}

/// Free-function form of [`CorpusIndex::retrieve`].
pub fn retrieve(index: &CorpusIndex, query: &str, m: usize) -> Vec<FactRecord> {
    index.retrieve(query, m)
}

/// Concatenates up to `n_core` core hits and up to `n_common` common hits,
/// keeping only the higher-scored copy of any repeated fact id.
pub fn assemble_pool(
    core_hits: &[FactRecord],
    common_hits: &[FactRecord],
    n_core: usize,
    n_common: usize,
) -> Vec<FactRecord> {
    let tagged = core_hits
        .iter()
        .take(n_core)
        .map(|r| (r, FactSource::Core))
        .chain(common_hits.iter().take(n_common).map(|r| (r, FactSource::Common)));

    let mut pool: Vec<FactRecord> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    let mut dropped = vec![];
    for (record, source) in tagged {
        let record = FactRecord {
            source,
            ..record.clone()
        };
        match position.get(&record.fact_id) {
            Some(&at) if pool[at].score >= record.score => {}
            Some(&at) => {
                dropped.push(at);
                position.insert(record.fact_id.clone(), pool.len());
                pool.push(record);
            }
            None => {
                position.insert(record.fact_id.clone(), pool.len());
                pool.push(record);
            }
        }
    }
    pool.into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, r)| r)
        .collect()
}

// ---------------------------------------------------------------------------
// Input files

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// One fact per non-blank line; ids are `<file_name>:<line-number>`.
pub fn parse_corpus_lines(file_name: &str, text: &str) -> Vec<(String, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (format!("{file_name}:{}", i + 1), l.trim().to_string()))
        .collect()
}

/// `id<TAB>text` per non-blank line.
pub fn parse_corpus_tsv(file_name: &str, text: &str) -> Result<Vec<(String, String)>, RetrievalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split_once('\t') {
            Some((id, body)) if !id.trim().is_empty() && !body.trim().is_empty() => {
                Ok((id.trim().to_string(), body.trim().to_string()))
            }
            _ => Err(RetrievalError::Format {
                file: file_name.to_string(),
                line: i + 1,
                message: "expected `id<TAB>text`".into(),
            }),
        })
        .collect()
}

/// Reads a corpus file; `.tsv` files carry explicit ids.
pub fn load_corpus(path: &Path) -> std::io::Result<Result<Vec<(String, String)>, RetrievalError>> {
    let text = std::fs::read_to_string(path)?;
    let name = file_label(path);
    let is_tsv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
    Ok(if is_tsv {
        parse_corpus_tsv(&name, &text)
    } else {
        Ok(parse_corpus_lines(&name, &text))
    })
}

/// Parses a JSON Lines question file.
pub fn parse_questions(file_name: &str, text: &str) -> Result<Vec<Question>, RetrievalError> {
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| RetrievalError::Format {
            file: file_name.to_string(),
            line: i + 1,
            message,
        };
        let q: Question = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if q.choices.is_empty() {
            return Err(err("question has no choices".into()));
        }
        if let Some(a) = q.answer_idx {
            if a >= q.choices.len() {
                return Err(err(format!("answer_idx {a} out of range")));
            }
        }
        if !ids.insert(q.id.clone()) {
            return Err(err(format!("duplicate question id `{}`", q.id)));
        }
        out.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypothesis_blank_substitution() {
        assert_eq!(
            generate_hypothesis("Algae can be found in ___", "reservoir").unwrap(),
            "Algae can be found in reservoir"
        );
        assert_eq!(
            generate_hypothesis("The ____ is hot.", "sun").unwrap(),
            "The sun is hot."
        );
        assert_eq!(generate_hypothesis("in ___.", "water").unwrap(), "in water.");
    }

    #[test]
    fn hypothesis_question_mark() {
        assert_eq!(
            generate_hypothesis("Which is recyclable?", "A school notebook").unwrap(),
            "Which is recyclable A school notebook"
        );
        assert_eq!(
            generate_hypothesis(
                "A seismograph can  accurately describe",
                " how stable the ground will be"
            )
            .unwrap(),
            "A seismograph can accurately describe how stable the ground will be"
        );
    }

    #[test]
    fn hypothesis_rejects_empty() {
        assert_eq!(generate_hypothesis("", "x"), Err(RetrievalError::EmptyInput));
        assert_eq!(generate_hypothesis("q?", "  "), Err(RetrievalError::EmptyInput));
    }

    #[test]
    fn short_underscore_runs_are_not_blanks() {
        assert_eq!(
            generate_hypothesis("snake_case is?", "fine").unwrap(),
            "snake_case is fine"
        );
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            tokenize("Earth's  orbit-path, 2x!"),
            ["earth", "s", "orbit", "path", "2x"]
        );
        assert!(tokenize("?!").is_empty());
    }

    #[test]
    fn index_statistics() {
        let idx = build_index(
            [("a", "one two"), ("b", "two three four"), ("c", "five")],
            Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(idx.len(), 3);
        assert!((idx.avg_doc_len() - 2.0).abs() < 1e-12);
        assert_eq!(idx.document_frequency("two"), 2);
        assert_eq!(idx.document_frequency("six"), 0);
    }

    #[test]
    fn empty_corpus() {
        let idx = build_index(Vec::<(String, String)>::new(), Bm25Params::default()).unwrap();
        assert!(idx.is_empty());
        assert!(idx.retrieve("anything", 10).is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = build_index([("a", "x"), ("a", "y")], Bm25Params::default()).unwrap_err();
        assert_eq!(err, RetrievalError::DuplicateFactId("a".into()));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(build_index([("a", "x")], Bm25Params { k1: 0.0, b: 0.5 }).is_err());
        assert!(build_index([("a", "x")], Bm25Params { k1: 1.0, b: 1.5 }).is_err());
        assert!(build_index([("a", "x")], Bm25Params { k1: f64::NAN, b: 0.5 }).is_err());
    }

    #[test]
    fn no_overlap_returns_nothing() {
        let idx = build_index([("a", "cats purr")], Bm25Params::default()).unwrap();
        assert!(idx.retrieve("dogs bark", 5).is_empty());
    }

    #[test]
    fn ties_break_on_fact_id() {
        let idx = build_index([("z", "rock"), ("m", "rock"), ("a", "paper")], Bm25Params::default()).unwrap();
        let ids: Vec<_> = idx.retrieve("rock", 5).into_iter().map(|r| r.fact_id).collect();
        assert_eq!(ids, ["m", "z"]);
    }

    #[test]
    fn m_caps_results() {
        let idx = build_index([("a", "x y"), ("b", "x"), ("c", "x z")], Bm25Params::default()).unwrap();
        assert_eq!(idx.retrieve("x", 2).len(), 2);
        assert_eq!(idx.retrieve("x", 100).len(), 3);
        assert!(idx.retrieve("x", 0).is_empty());
    }

    fn rec(id: &str, score: f64) -> FactRecord {
        FactRecord {
            fact_id: id.into(),
            text: format!("text of {id}"),
            score,
            source: FactSource::Common,
        }
    }

    #[test]
    fn pool_core_first() {
        let core: Vec<_> = (0..12)
            .map(|i| rec(&format!("core{i}"), 10.0 - i as f64 * 0.1))
            .collect();
        let common: Vec<_> = (0..95).map(|i| rec(&format!("common{i}"), 5.0)).collect();
        let pool = assemble_pool(&core, &common, 10, 90);
        assert_eq!(pool.len(), 100);
        assert!(pool[..10].iter().all(|r| r.source == FactSource::Core));
        assert!(pool[10..].iter().all(|r| r.source == FactSource::Common));
    }

    #[test]
    fn pool_without_core() {
        let common = vec![rec("a", 1.0), rec("b", 0.5)];
        let pool = assemble_pool(&[], &common, 10, 90);
        assert_eq!(pool, common);
    }

    #[test]
    fn pool_dedup_keeps_higher_score() {
        let core = vec![rec("x", 1.0), rec("y", 3.0)];
        let common = vec![rec("x", 2.0), rec("y", 0.5), rec("z", 0.1)];
        let pool = assemble_pool(&core, &common, 10, 90);
        let summary: Vec<_> = pool.iter().map(|r| (r.fact_id.as_str(), r.score, r.source)).collect();
        assert_eq!(
            summary,
            [
                ("y", 3.0, FactSource::Core),
                ("x", 2.0, FactSource::Common),
                ("z", 0.1, FactSource::Common)
            ]
        );
    }

    #[test]
    fn corpus_files() {
        let facts = parse_corpus_lines("book.txt", "first fact\n\n  second fact \n");
        assert_eq!(
            facts,
            [
                ("book.txt:1".to_string(), "first fact".to_string()),
                ("book.txt:3".to_string(), "second fact".to_string())
            ]
        );
        let tsv = parse_corpus_tsv("f.tsv", "f1\tA fact.\nf2\tAnother.\n").unwrap();
        assert_eq!(tsv[1], ("f2".to_string(), "Another.".to_string()));
        assert!(matches!(
            parse_corpus_tsv("f.tsv", "f1\tok\nno tab here\n"),
            Err(RetrievalError::Format { line: 2, .. })
        ));
    }

    #[test]
    fn question_file() {
        let text = r#"{"id": "q1", "question": "Which is recyclable?", "choices": ["a", "b"], "answer_idx": 1}
{"id": "q2", "question": "x ___", "choices": ["y", "z"]}
"#;
        let qs = parse_questions("qs.jsonl", text).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].answer_idx, Some(1));
        assert_eq!(qs[1].answer_idx, None);
        let hyps = qs[1].hypotheses().unwrap();
        assert_eq!(hyps[1].text, "x z");
        assert_eq!(hyps[1].choice_index, 1);

        let bad = r#"{"id": "q1", "question": "q", "choices": ["a"], "answer_idx": 3}"#;
        assert!(matches!(
            parse_questions("qs.jsonl", bad),
            Err(RetrievalError::Format { line: 1, .. })
        ));
        assert!(parse_questions("qs.jsonl", "{not json}").is_err());
    }
}

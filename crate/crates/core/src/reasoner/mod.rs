//! Fact-level reasoning over the connection graph.
//!
//! Node features are max-pooled token states of the hypothesis and each
//! active fact. A multi-head GCN over the symmetric-normalized adjacency
//! updates them for `K` layers; a sigmoid gate mixes the final hypothesis
//! state with the sequence vector and a linear head produces the pair
//! score. Scores of a question's choices go through a softmax.
//!
//! Gradients are derived by hand for every parameter so the model can be
//! trained at desk scale and checked against finite differences.

mod embed;
mod params;
mod train;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use embed::{max_pool, EmbeddingProvider, HashEmbedding};
pub use params::{ReasonerParams, ReasonerShape, PARAMS_MAGIC};
pub use train::{accuracy, predict, separable_toy_dataset, train_toy, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReasonerError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("adjacency matrix is not symmetric")]
    AsymmetricInput,
    #[error("adjacency matrix has an entry other than 0 or 1")]
    NonBinaryInput,
    #[error("node {0} has zero degree")]
    ZeroDegree(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid reasoner shape: {0}")]
    InvalidShape(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("finite-difference step {0} outside [1e-7, 1e-4]")]
    EpsilonOutOfRange(f64),
    #[error("a ReLU pre-activation is within {margin:e} of zero")]
    NearReluKink { margin: f64 },
    #[error("answer index {answer} out of range for {choices} choices")]
    InvalidLabel { answer: usize, choices: usize },
    #[error("question has no answer label")]
    MissingLabel,
    #[error("need at least {min} choices, got {got}")]
    TooFewChoices { min: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("parameter file: {0}")]
    ParamsFormat(String),
}

/// `(n+1) × d` node states; row 0 is the hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures(DMatrix<f64>);

impl NodeFeatures {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, ReasonerError> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(ReasonerError::ShapeMismatch("node features must be non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ReasonerError::ShapeMismatch("node features must be finite".into()));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn hypothesis(&self) -> DVector<f64> {
        self.0.row(0).transpose()
    }
}

/// Max-pools the provider's token states of the hypothesis and each fact.
pub fn pool_node_features<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    hypothesis_text: &str,
    fact_texts: &[&str],
) -> Result<NodeFeatures, ReasonerError> {
    let d = provider.dim();
    let mut m = DMatrix::zeros(1 + fact_texts.len(), d);
    for (r, text) in std::iter::once(&hypothesis_text).chain(fact_texts).enumerate() {
        let tokens = provider.embed(text)?;
        if tokens.ncols() != d {
            return Err(ReasonerError::ShapeMismatch(format!(
                "provider returned width {}, expected {d}",
                tokens.ncols()
            )));
        }
        m.set_row(r, &max_pool(&tokens).transpose());
    }
    NodeFeatures::new(m)
}

/// `D^{-1/2} A D^{-1/2}` with `D_ii = sum_j A_ij`.
pub fn normalize_adjacency(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>, ReasonerError> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(ReasonerError::ShapeMismatch(format!(
            "adjacency is {}x{}",
            n,
            adjacency.ncols()
        )));
    }
    if adjacency.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(ReasonerError::NonBinaryInput);
    }
    if adjacency != &adjacency.transpose() {
        return Err(ReasonerError::AsymmetricInput);
    }
    let degree: Vec<f64> = adjacency
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            let deg = row.sum();
            if deg > 0.0 {
                Ok(deg)
            } else {
                Err(ReasonerError::ZeroDegree(i))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        adjacency[(i, j)] / (degree[i] * degree[j]).sqrt()
    }))
}

/// Converts a 0/1 connection matrix to `f64`.
pub fn adjacency_matrix(rows: &[Vec<u8>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| f64::from(rows[i][j]))
}

/// Everything the reasoner needs about one question-choice pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceGraph {
    features: NodeFeatures,
    norm_adjacency: DMatrix<f64>,
    cls: DVector<f64>,
}

impl ChoiceGraph {
    pub fn new(features: NodeFeatures, adjacency: &DMatrix<f64>, cls: DVector<f64>) -> Result<Self, ReasonerError> {
        let n = features.matrix().nrows();
        if adjacency.nrows() != n {
            return Err(ReasonerError::ShapeMismatch(format!(
                "{} feature rows but {} adjacency rows",
                n,
                adjacency.nrows()
            )));
        }
        if cls.len() != features.matrix().ncols() {
            return Err(ReasonerError::ShapeMismatch(
                "cls width differs from feature width".into(),
            ));
        }
        Ok(Self {
            norm_adjacency: normalize_adjacency(adjacency)?,
            features,
            cls,
        })
    }

    /// Builds features from text through `provider`; `cls` pools the
    /// hypothesis and all fact texts together.
    pub fn from_texts<P: EmbeddingProvider + ?Sized>(
        provider: &P,
        hypothesis_text: &str,
        fact_texts: &[&str],
        adjacency: &DMatrix<f64>,
    ) -> Result<Self, ReasonerError> {
        let features = pool_node_features(provider, hypothesis_text, fact_texts)?;
        let all: Vec<&str> = std::iter::once(hypothesis_text)
            .chain(fact_texts.iter().copied())
            .collect();
        let cls = provider.cls(&all)?;
        Self::new(features, adjacency, cls)
    }

    pub fn features(&self) -> &NodeFeatures {
        &self.features
    }

    pub fn norm_adjacency(&self) -> &DMatrix<f64> {
        &self.norm_adjacency
    }

    pub fn cls(&self) -> &DVector<f64> {
        &self.cls
    }

    pub fn node_count(&self) -> usize {
        self.features.matrix().nrows()
    }
}

/// The choices of one question and, when known, the gold index.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionInstance {
    pub choices: Vec<ChoiceGraph>,
    pub answer: Option<usize>,
}

impl QuestionInstance {
    pub fn label(&self) -> Result<usize, ReasonerError> {
        let answer = self.answer.ok_or(ReasonerError::MissingLabel)?;
        if answer >= self.choices.len() {
            return Err(ReasonerError::InvalidLabel {
                answer,
                choices: self.choices.len(),
            });
        }
        Ok(answer)
    }
}

struct LayerCache {
    /// `Λ X^(k-1)`
    mixed: DMatrix<f64>,
    /// per head `Λ X^(k-1) W_i^(k)`, before ReLU
    pre: Vec<DMatrix<f64>>,
}

fn check_forward_shapes(
    x0: &DMatrix<f64>,
    norm_adj: &DMatrix<f64>,
    params: &ReasonerParams,
) -> Result<(), ReasonerError> {
    let shape = params.shape();
    if x0.ncols() != shape.dim {
        return Err(ReasonerError::ShapeMismatch(format!(
            "features have width {}, params expect {}",
            x0.ncols(),
            shape.dim
        )));
    }
    if norm_adj.nrows() != x0.nrows() || norm_adj.ncols() != x0.nrows() {
        return Err(ReasonerError::ShapeMismatch(format!(
            "adjacency is {}x{} for {} nodes",
            norm_adj.nrows(),
            norm_adj.ncols(),
            x0.nrows()
        )));
    }
    Ok(())
}

fn forward_cached(
    x0: &DMatrix<f64>,
    norm_adj: &DMatrix<f64>,
    params: &ReasonerParams,
) -> (Vec<LayerCache>, DMatrix<f64>) {
    let hd = params.shape().head_dim();
    let mut x = x0.clone();
    let mut caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let mixed = norm_adj * &x;
        let pre: Vec<DMatrix<f64>> = layer.iter().map(|w| &mixed * w).collect();
        let mut next = DMatrix::zeros(x.nrows(), x.ncols());
        for (i, z) in pre.iter().enumerate() {
            next.columns_mut(i * hd, hd).copy_from(&z.map(|v| v.max(0.0)));
        }
        caches.push(LayerCache { mixed, pre });
        x = next;
    }
    (caches, x)
}

/// Runs the `K` GCN layers; each head is `ReLU(Λ X W_i)` and heads are
/// concatenated along the feature axis.
pub fn gcn_forward(
    x0: &NodeFeatures,
    norm_adj: &DMatrix<f64>,
    params: &ReasonerParams,
) -> Result<DMatrix<f64>, ReasonerError> {
    check_forward_shapes(x0.matrix(), norm_adj, params)?;
    Ok(forward_cached(x0.matrix(), norm_adj, params).1)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gate value kept strictly inside (0, 1); the flag reports whether the
/// clamp was applied.
fn gate(z: f64) -> (f64, bool) {
    let lambda = sigmoid(z);
    let clamped = lambda.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    (clamped, clamped != lambda)
}

struct GateTerms {
    lambda: f64,
    clamped: bool,
    mixed: DVector<f64>,
    /// `sum(W_o u)`; the score without the output bias.
    head: f64,
    score: f64,
}

fn gate_terms(x_cls: &DVector<f64>, x_h: &DVector<f64>, params: &ReasonerParams) -> GateTerms {
    let d = x_cls.len();
    let z = params.w_lambda.rows(0, d).dot(x_cls) + params.w_lambda.rows(d, d).dot(x_h) + params.b_lambda;
    let (lambda, clamped) = gate(z);
    let mixed = x_h * lambda + x_cls * (1.0 - lambda);
    let head = (&params.w_o * &mixed).sum();
    let score = head + params.b_o.sum();
    GateTerms {
        lambda,
        clamped,
        mixed,
        head,
        score,
    }
}

/// Gated fusion of the sequence vector and the final hypothesis state,
/// reduced to a scalar by summing the output vector.
pub fn gate_and_score(
    x_cls: &DVector<f64>,
    x_h_final: &DVector<f64>,
    params: &ReasonerParams,
) -> Result<f64, ReasonerError> {
    gate_and_score_detailed(x_cls, x_h_final, params).map(|(score, _)| score)
}

/// As [`gate_and_score`], also returning the gate value.
pub fn gate_and_score_detailed(
    x_cls: &DVector<f64>,
    x_h_final: &DVector<f64>,
    params: &ReasonerParams,
) -> Result<(f64, f64), ReasonerError> {
    let d = params.shape().dim;
    if x_cls.len() != d || x_h_final.len() != d {
        return Err(ReasonerError::ShapeMismatch(format!(
            "gate inputs have lengths {} and {}, expected {d}",
            x_cls.len(),
            x_h_final.len()
        )));
    }
    let t = gate_terms(x_cls, x_h_final, params);
    Ok((t.score, t.lambda))
}

/// Raw pair score for one choice graph.
pub fn score_choice(graph: &ChoiceGraph, params: &ReasonerParams) -> Result<f64, ReasonerError> {
    let x_k = gcn_forward(&graph.features, &graph.norm_adjacency, params)?;
    gate_and_score(&graph.cls, &x_k.row(0).transpose(), params)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChoiceScores {
    pub raw: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ChoiceScores {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let probs = softmax(&raw);
        Self { raw, probs }
    }

    /// Index of the highest probability; the lowest index wins ties.
    pub fn predicted(&self) -> usize {
        predict(&self.probs)
    }
}

/// Numerically stable softmax.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn cross_entropy(probs: &[f64], answer: usize) -> f64 {
    -probs[answer].ln()
}

/// Scores every choice of a question and normalizes with softmax.
pub fn score_choices(choices: &[ChoiceGraph], params: &ReasonerParams) -> Result<ChoiceScores, ReasonerError> {
    if choices.len() < 2 {
        return Err(ReasonerError::TooFewChoices {
            min: 2,
            got: choices.len(),
        });
    }
    let raw = choices
        .iter()
        .map(|c| score_choice(c, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChoiceScores::from_raw(raw))
}

/// Adds `d score / d params`, scaled by `upstream`, into `grads`.
fn backward_choice(graph: &ChoiceGraph, params: &ReasonerParams, upstream: f64, grads: &mut ReasonerParams) {
    let shape = params.shape();
    let (d, hd) = (shape.dim, shape.head_dim());
    let (caches, x_k) = forward_cached(graph.features.matrix(), &graph.norm_adjacency, params);
    let x_h = x_k.row(0).transpose();
    let x_cls = &graph.cls;
    let t = gate_terms(x_cls, &x_h, params);

    // score = 1ᵀ (W_o u + b_o)
    let ones = DVector::from_element(d, upstream);
    grads.w_o += &ones * t.mixed.transpose();
    grads.b_o += &ones;
    let d_mixed = params.w_o.transpose() * &ones;

    let d_lambda = d_mixed.dot(&(&x_h - x_cls));
    let d_z = if t.clamped {
        0.0
    } else {
        d_lambda * t.lambda * (1.0 - t.lambda)
    };
    grads.w_lambda.rows_mut(0, d).axpy(d_z, x_cls, 1.0);
    grads.w_lambda.rows_mut(d, d).axpy(d_z, &x_h, 1.0);
    grads.b_lambda += d_z;

    let d_xh = &d_mixed * t.lambda + params.w_lambda.rows(d, d) * d_z;
    let mut d_x = DMatrix::zeros(x_k.nrows(), d);
    d_x.set_row(0, &d_xh.transpose());

    for (k, cache) in caches.iter().enumerate().rev() {
        let mut d_mixed_k = DMatrix::zeros(cache.mixed.nrows(), d);
        for (i, z) in cache.pre.iter().enumerate() {
            let d_head = d_x.columns(i * hd, hd);
            let d_pre = d_head.zip_map(z, |g, zv| if zv > 0.0 { g } else { 0.0 });
            grads.layers[k][i] += cache.mixed.transpose() * &d_pre;
            d_mixed_k += &d_pre * params.layers[k][i].transpose();
        }
        d_x = graph.norm_adjacency.transpose() * d_mixed_k;
    }
}

/// Cross-entropy over the choices' bias-free scores.
///
/// `sum(b_o)` is added to every choice's score and cancels exactly in the
/// softmax, so leaving it out gives the same loss without the rounding noise
/// that the shared shift would otherwise inject. The output-bias gradient is
/// therefore identically zero.
fn loss_from_heads(heads: &[f64], answer: usize) -> Result<f64, ReasonerError> {
    let max = heads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = heads.iter().map(|h| (h - max).exp()).sum::<f64>().ln() + max;
    let loss = log_total - heads[answer];
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(ReasonerError::NonFiniteLoss)
    }
}

fn choice_heads(question: &QuestionInstance, params: &ReasonerParams) -> Result<(usize, Vec<f64>), ReasonerError> {
    let answer = question.label()?;
    if question.choices.len() < 2 {
        return Err(ReasonerError::TooFewChoices {
            min: 2,
            got: question.choices.len(),
        });
    }
    let heads = question
        .choices
        .iter()
        .map(|c| {
            let x_k = gcn_forward(&c.features, &c.norm_adjacency, params)?;
            Ok(gate_terms(&c.cls, &x_k.row(0).transpose(), params).head)
        })
        .collect::<Result<Vec<_>, ReasonerError>>()?;
    Ok((answer, heads))
}

/// Cross-entropy of one labeled question.
pub fn question_loss(question: &QuestionInstance, params: &ReasonerParams) -> Result<f64, ReasonerError> {
    let (answer, heads) = choice_heads(question, params)?;
    loss_from_heads(&heads, answer)
}

/// Cross-entropy of one labeled question and its gradient.
pub fn loss_and_gradients(
    question: &QuestionInstance,
    params: &ReasonerParams,
) -> Result<(f64, ReasonerParams, ChoiceScores), ReasonerError> {
    let (answer, heads) = choice_heads(question, params)?;
    let loss = loss_from_heads(&heads, answer)?;
    let probs = softmax(&heads);
    let bias = params.b_o.sum();
    let scores = ChoiceScores::from_raw(heads.iter().map(|h| h + bias).collect());
    let mut grads = ReasonerParams::zeros(params.shape())?;
    for (j, graph) in question.choices.iter().enumerate() {
        let upstream = probs[j] - if j == answer { 1.0 } else { 0.0 };
        backward_choice(graph, params, upstream, &mut grads);
    }
    Ok((loss, grads, scores))
}

/// Smallest `|pre-activation|` of any ReLU in any choice's forward pass.
pub fn relu_margin(question: &QuestionInstance, params: &ReasonerParams) -> f64 {
    question
        .choices
        .iter()
        .flat_map(|c| {
            forward_cached(c.features.matrix(), &c.norm_adjacency, params)
                .0
                .into_iter()
                .flat_map(|cache| {
                    cache
                        .pre
                        .into_iter()
                        .flat_map(|z| z.iter().map(|v| v.abs()).collect::<Vec<_>>())
                })
        })
        .fold(f64::INFINITY, f64::min)
}

/// Compares the analytic gradient with central finite differences for every
/// parameter and returns the largest relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Fails with [`ReasonerError::NearReluKink`] when a ReLU input is within
/// `10 * epsilon` of zero, where the finite difference is meaningless.
pub fn backward_and_gradcheck(
    question: &QuestionInstance,
    params: &ReasonerParams,
    epsilon: f64,
) -> Result<f64, ReasonerError> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(ReasonerError::EpsilonOutOfRange(epsilon));
    }
    let margin = relu_margin(question, params);
    if margin < 10.0 * epsilon {
        return Err(ReasonerError::NearReluKink { margin });
    }
    let (_, grads, _) = loss_and_gradients(question, params)?;
    let analytic = grads.to_flat();
    let base = params.to_flat();
    let shape = params.shape();
    let mut worst = 0.0f64;
    let mut probe = base.clone();
    for (i, &a) in analytic.iter().enumerate() {
        probe[i] = base[i] + epsilon;
        let plus = question_loss(question, &ReasonerParams::from_flat(shape, &probe)?)?;
        probe[i] = base[i] - epsilon;
        let minus = question_loss(question, &ReasonerParams::from_flat(shape, &probe)?)?;
        probe[i] = base[i];
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(k: usize, h: usize, d: usize) -> ReasonerShape {
        ReasonerShape::new(k, h, d).unwrap()
    }

    #[test]
    fn pooling_single_and_pair() {
        let p = HashEmbedding::new(6, 2);
        let f = pool_node_features(&p, "earthquake", &["ground shakes"]).unwrap();
        assert_eq!(f.matrix().row(0).transpose(), p.token_vector("earthquake"));
        let expected = p.token_vector("ground").zip_map(&p.token_vector("shakes"), f64::max);
        assert_eq!(f.matrix().row(1).transpose(), expected);
    }

    #[test]
    fn pooling_shape_with_fifteen_facts() {
        let p = HashEmbedding::new(64, 0);
        let facts: Vec<String> = (0..15).map(|i| format!("fact number {i}")).collect();
        let refs: Vec<&str> = facts.iter().map(String::as_str).collect();
        let f = pool_node_features(&p, "the hypothesis", &refs).unwrap();
        assert_eq!(f.matrix().shape(), (16, 64));
        assert!(matches!(
            pool_node_features(&p, "...", &[]),
            Err(ReasonerError::EmptyText)
        ));
    }

    #[test]
    fn normalize_small_cases() {
        assert_eq!(
            normalize_adjacency(&DMatrix::identity(3, 3)).unwrap(),
            DMatrix::identity(3, 3)
        );
        let full = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(normalize_adjacency(&full).unwrap(), DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(normalize_adjacency(&asym), Err(ReasonerError::AsymmetricInput));
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(normalize_adjacency(&zero), Err(ReasonerError::ZeroDegree(1)));
        let weighted = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(normalize_adjacency(&weighted), Err(ReasonerError::NonBinaryInput));
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let params = ReasonerParams::zeros(shape(2, 2, 4)).unwrap();
        let x0 = NodeFeatures::new(DMatrix::from_fn(3, 4, |i, j| (i + j) as f64 - 2.0)).unwrap();
        let lam = normalize_adjacency(&DMatrix::from_element(3, 3, 1.0)).unwrap();
        assert_eq!(gcn_forward(&x0, &lam, &params).unwrap(), DMatrix::zeros(3, 4));
    }

    #[test]
    fn identity_projection_relu() {
        let mut params = ReasonerParams::zeros(shape(1, 1, 2)).unwrap();
        params.layers[0][0] = DMatrix::identity(2, 2);
        let x0 = NodeFeatures::new(DMatrix::from_row_slice(1, 2, &[1.0, -1.0])).unwrap();
        let lam = DMatrix::identity(1, 1);
        assert_eq!(
            gcn_forward(&x0, &lam, &params).unwrap(),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
        );
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let params = ReasonerParams::zeros(shape(1, 1, 2)).unwrap();
        let x0 = NodeFeatures::new(DMatrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            gcn_forward(&x0, &DMatrix::identity(2, 2), &params),
            Err(ReasonerError::ShapeMismatch(_))
        ));
        let x0 = NodeFeatures::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(gcn_forward(&x0, &DMatrix::identity(3, 3), &params).is_err());
        assert!(gate_and_score(&DVector::zeros(3), &DVector::zeros(2), &params).is_err());
    }

    #[test]
    fn zero_gate_is_half() {
        let mut params = ReasonerParams::init(shape(1, 1, 3), 5).unwrap();
        params.w_lambda.fill(0.0);
        params.b_lambda = 0.0;
        let x_cls = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x_h = DVector::from_vec(vec![-1.0, 0.5, 0.0]);
        let (score, lambda) = gate_and_score_detailed(&x_cls, &x_h, &params).unwrap();
        assert_eq!(lambda, 0.5);
        let expected = (&params.w_o * (&x_h * 0.5 + &x_cls * 0.5) + &params.b_o).sum();
        assert!((score - expected).abs() < 1e-12);
    }

    #[test]
    fn equal_inputs_ignore_gate() {
        let params = ReasonerParams::init(shape(1, 1, 3), 9).unwrap();
        let v = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        let score = gate_and_score(&v, &v, &params).unwrap();
        let expected = (&params.w_o * &v + &params.b_o).sum();
        assert!((score - expected).abs() < 1e-12);
    }

    #[test]
    fn gate_stays_open_interval() {
        assert!(gate(800.0).0 < 1.0);
        assert!(gate(-800.0).0 > 0.0);
        assert!(gate(800.0).1);
        assert!(!gate(0.3).1);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[2.0; 4]), vec![0.25; 4]);
        let p = softmax(&[50.0, -3.0, -3.0, -3.0]);
        assert_eq!(predict(&p), 0);
        let shifted = softmax(&[1.0 + 1e3, 2.0 + 1e3, 3.0 + 1e3]);
        for (a, b) in softmax(&[1.0, 2.0, 3.0]).iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((cross_entropy(&softmax(&[0.0; 4]), 2) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn score_choices_needs_two() {
        let params = ReasonerParams::zeros(shape(1, 1, 2)).unwrap();
        let g = ChoiceGraph::new(
            NodeFeatures::new(DMatrix::zeros(1, 2)).unwrap(),
            &DMatrix::identity(1, 1),
            DVector::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            score_choices(std::slice::from_ref(&g), &params),
            Err(ReasonerError::TooFewChoices { .. })
        ));
        let s = score_choices(&[g.clone(), g], &params).unwrap();
        assert_eq!(s.probs, [0.5, 0.5]);
        assert_eq!(s.predicted(), 0);
    }

    #[test]
    fn gradcheck_rejects_bad_epsilon() {
        let q = separable_toy_dataset(1, 4, 2, 8, 0).remove(0);
        let p = ReasonerParams::init(shape(1, 2, 8), 0).unwrap();
        assert!(matches!(
            backward_and_gradcheck(&q, &p, 1e-2),
            Err(ReasonerError::EpsilonOutOfRange(_))
        ));
    }
}

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    loss_and_gradients, score_choices, ChoiceGraph, NodeFeatures, QuestionInstance, ReasonerError, ReasonerParams,
    ReasonerShape,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k_layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn shape(&self) -> Result<ReasonerShape, ReasonerError> {
        ReasonerShape::new(self.k_layers, self.heads, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ReasonerParams,
    /// Training accuracy before any update, then after each epoch
    /// (`epochs + 1` entries).
    pub accuracy_curve: Vec<f64>,
    /// Mean cross-entropy at the same points as `accuracy_curve`.
    pub loss_curve: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn predict(probs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = j;
        }
    }
    best
}

/// Fraction of questions whose predicted choice equals the label.
pub fn accuracy(dataset: &[QuestionInstance], params: &ReasonerParams) -> Result<f64, ReasonerError> {
    if dataset.is_empty() {
        return Err(ReasonerError::EmptyDataset);
    }
    let mut correct = 0usize;
    for q in dataset {
        let answer = q.label()?;
        if predict(&score_choices(&q.choices, params)?.probs) == answer {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Mean loss, mean gradient and accuracy over the whole dataset.
fn full_batch(
    dataset: &[QuestionInstance],
    params: &ReasonerParams,
) -> Result<(f64, ReasonerParams, f64), ReasonerError> {
    let mut total = ReasonerParams::zeros(params.shape())?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for q in dataset {
        let (l, g, scores) = loss_and_gradients(q, params)?;
        loss += l;
        total.add_scaled(1.0, &g);
        if scores.predicted() == q.label()? {
            correct += 1;
        }
    }
    let n = dataset.len() as f64;
    let mut mean = ReasonerParams::zeros(params.shape())?;
    mean.add_scaled(1.0 / n, &total);
    Ok((loss / n, mean, correct as f64 / n))
}

/// Full-batch gradient descent on mean cross-entropy from a seeded init.
pub fn train_toy(dataset: &[QuestionInstance], config: &TrainConfig) -> Result<TrainOutcome, ReasonerError> {
    if dataset.is_empty() {
        return Err(ReasonerError::EmptyDataset);
    }
    for q in dataset {
        q.label()?;
    }
    let mut params = ReasonerParams::init(config.shape()?, config.seed)?;
    let mut accuracy_curve = Vec::with_capacity(config.epochs + 1);
    let mut loss_curve = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let (loss, grads, acc) = match full_batch(dataset, &params) {
            Ok(v) => v,
            Err(ReasonerError::NonFiniteLoss) => return Err(ReasonerError::DivergedLoss { epoch }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !grads.is_finite() {
            return Err(ReasonerError::DivergedLoss { epoch });
        }
        accuracy_curve.push(acc);
        loss_curve.push(loss);
        if epoch < config.epochs {
            params.add_scaled(-config.lr, &grads);
            if !params.is_finite() {
                return Err(ReasonerError::DivergedLoss { epoch: epoch + 1 });
            }
        }
    }
    Ok(TrainOutcome {
        params,
        accuracy_curve,
        loss_curve,
    })
}

/// Random questions whose gold choice is separable by construction.
///
/// A hidden direction `u ∈ {-1, 1}^d` is drawn once per dataset. Every node
/// feature row and the sequence vector of the gold choice equal `0.5 u`
/// plus noise, the other choices `-0.5 u` plus noise, with noise uniform in
/// `[-0.25, 0.25]` per coordinate. Since `|noise · u| <= 0.25 d < 0.5 d`, the
/// linear readout `u · x_cls` ranks the gold choice first in every
/// question. Adjacencies are random symmetric 0/1 matrices with unit
/// diagonal.
pub fn separable_toy_dataset(
    questions: usize,
    choices: usize,
    facts: usize,
    dim: usize,
    seed: u64,
) -> Vec<QuestionInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = DVector::from_fn(dim, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
    (0..questions)
        .map(|_| {
            let answer = rng.gen_range(0..choices);
            let graphs = (0..choices)
                .map(|j| {
                    let shift = if j == answer { 0.5 } else { -0.5 };
                    let n = facts + 1;
                    let x = DMatrix::from_fn(n, dim, |_, c| shift * direction[c] + rng.gen_range(-0.25..=0.25));
                    let cls = DVector::from_fn(dim, |c, _| shift * direction[c] + rng.gen_range(-0.25..=0.25));
                    let mut a = DMatrix::identity(n, n);
                    for r in 0..n {
                        for c in r + 1..n {
                            if rng.gen_bool(0.5) {
                                a[(r, c)] = 1.0;
                                a[(c, r)] = 1.0;
                            }
                        }
                    }
                    ChoiceGraph::new(NodeFeatures::new(x).expect("finite"), &a, cls).expect("consistent toy shapes")
                })
                .collect();
            QuestionInstance {
                choices: graphs,
                answer: Some(answer),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            k_layers: 2,
            heads: 4,
            dim: 32,
            lr: 0.05,
            epochs,
            seed: 7,
        }
    }

    #[test]
    fn predict_prefers_lowest_index_on_ties() {
        assert_eq!(predict(&[0.25; 4]), 0);
        assert_eq!(predict(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let data = separable_toy_dataset(3, 4, 2, 32, 1);
        let out = train_toy(&data, &config(0)).unwrap();
        assert_eq!(out.params, ReasonerParams::init(config(0).shape().unwrap(), 7).unwrap());
        assert_eq!(out.accuracy_curve, vec![accuracy(&data, &out.params).unwrap()]);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_toy_dataset(4, 4, 2, 32, 2);
        let a = train_toy(&data, &config(5)).unwrap();
        let b = train_toy(&data, &config(5)).unwrap();
        assert_eq!(a.accuracy_curve.len(), 6);
        assert_eq!(a.params.to_bytes(), b.params.to_bytes());
        assert_eq!(a.accuracy_curve, b.accuracy_curve);
    }

    #[test]
    fn rejects_bad_datasets() {
        assert_eq!(train_toy(&[], &config(1)), Err(ReasonerError::EmptyDataset));
        let mut data = separable_toy_dataset(1, 4, 1, 32, 0);
        data[0].answer = None;
        assert_eq!(train_toy(&data, &config(1)), Err(ReasonerError::MissingLabel));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let data = separable_toy_dataset(2, 4, 1, 32, 0);
        let cfg = TrainConfig {
            lr: 1e300,
            epochs: 20,
            ..config(0)
        };
        assert!(matches!(
            train_toy(&data, &cfg),
            Err(ReasonerError::DivergedLoss { .. })
        ));
    }
}

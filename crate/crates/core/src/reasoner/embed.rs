//! Token embedding providers standing in for a pretrained encoder.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ReasonerError;
use crate::retrieval::tokenize;

/// Per-token hidden states for a text, plus a sequence-level vector.
///
/// Implementations must be deterministic and return at least one row for
/// any text with a token in it.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;

    /// `l × d` token matrix.
    fn embed(&self, text: &str) -> Result<DMatrix<f64>, ReasonerError>;

    /// Sequence representation of the concatenation of `texts`.
    fn cls(&self, texts: &[&str]) -> Result<DVector<f64>, ReasonerError> {
        let mut pooled: Option<DVector<f64>> = None;
        for text in texts {
            let Ok(tokens) = self.embed(text) else { continue };
            let row = max_pool(&tokens);
            pooled = Some(match pooled {
                None => row,
                Some(acc) => acc.zip_map(&row, f64::max),
            });
        }
        pooled.ok_or(ReasonerError::EmptyText)
    }
}

/// Column-wise max over the token rows.
pub fn max_pool(tokens: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        tokens.ncols(),
        tokens
            .column_iter()
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    )
}

/// Each token maps to a fixed vector, uniform in `[-1, 1]`, drawn from a
/// generator seeded by a hash of the token and the provider seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedding {
    dim: usize,
    seed: u64,
}

impl HashEmbedding {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn token_vector(&self, token: &str) -> DVector<f64> {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(token.as_bytes())
            .finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        DVector::from_fn(self.dim, |_, _| rng.gen_range(-1.0..=1.0))
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<DMatrix<f64>, ReasonerError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(ReasonerError::EmptyText);
        }
        let mut m = DMatrix::zeros(tokens.len(), self.dim);
        for (r, t) in tokens.iter().enumerate() {
            m.set_row(r, &self.token_vector(t).transpose());
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let p = HashEmbedding::new(16, 7);
        let a = p.embed("Earth orbits").unwrap();
        assert_eq!(a, p.embed("earth  ORBITS!").unwrap());
        assert_eq!(a.shape(), (2, 16));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a, HashEmbedding::new(16, 8).embed("Earth orbits").unwrap());
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            HashEmbedding::new(4, 0).embed(" ?! "),
            Err(ReasonerError::EmptyText)
        ));
    }

    #[test]
    fn cls_pools_all_texts() {
        let p = HashEmbedding::new(8, 1);
        let cls = p.cls(&["alpha", "beta gamma"]).unwrap();
        let all = p.embed("alpha beta gamma").unwrap();
        assert_eq!(cls, max_pool(&all));
    }
}

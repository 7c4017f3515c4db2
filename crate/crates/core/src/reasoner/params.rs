use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ReasonerError;

pub const PARAMS_MAGIC: &[u8; 6] = b"AMRSG1";

/// Layer count, head count and hidden width of the reasoner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerShape {
    pub k_layers: usize,
    pub heads: usize,
    pub dim: usize,
}

impl Default for ReasonerShape {
    fn default() -> Self {
        Self {
            k_layers: 2,
            heads: 16,
            dim: 64,
        }
    }
}

impl ReasonerShape {
    pub fn new(k_layers: usize, heads: usize, dim: usize) -> Result<Self, ReasonerError> {
        let shape = Self { k_layers, heads, dim };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), ReasonerError> {
        if self.k_layers == 0 || self.heads == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(ReasonerError::InvalidShape(format!(
                "K={}, h={}, d={} (need K, h, d >= 1 and h | d)",
                self.k_layers, self.heads, self.dim
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        let d = self.dim;
        self.k_layers * d * d + 2 * d + 1 + d * d + d
    }
}

/// GCN head projections, gate and output head.
///
/// Also used as the container for gradients, which share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerParams {
    shape: ReasonerShape,
    /// `layers[k][i]` is the `d × d/h` projection of head `i` in layer `k`.
    pub layers: Vec<Vec<DMatrix<f64>>>,
    /// Gate weights over `[x_cls : x_H]`, length `2d`.
    pub w_lambda: DVector<f64>,
    pub b_lambda: f64,
    pub w_o: DMatrix<f64>,
    pub b_o: DVector<f64>,
}

impl ReasonerParams {
    pub fn zeros(shape: ReasonerShape) -> Result<Self, ReasonerError> {
        shape.validate()?;
        let d = shape.dim;
        Ok(Self {
            shape,
            layers: vec![vec![DMatrix::zeros(d, shape.head_dim()); shape.heads]; shape.k_layers],
            w_lambda: DVector::zeros(2 * d),
            b_lambda: 0.0,
            w_o: DMatrix::zeros(d, d),
            b_o: DVector::zeros(d),
        })
    }

    /// Every entry uniform in `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init(shape: ReasonerShape, seed: u64) -> Result<Self, ReasonerError> {
        let bound = 1.0 / (shape.dim.max(1) as f64).sqrt();
        Self::uniform(shape, seed, bound)
    }

    pub fn uniform(shape: ReasonerShape, seed: u64, bound: f64) -> Result<Self, ReasonerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..shape.num_params()).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self::from_flat(shape, &values)
    }

    pub fn shape(&self) -> ReasonerShape {
        self.shape
    }

    /// All parameters in serialization order: head projections by layer then
    /// head, gate weights, gate bias, output matrix, output bias. Matrices
    /// are row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape.num_params());
        for layer in &self.layers {
            for w in layer {
                push_row_major(&mut out, w);
            }
        }
        out.extend(self.w_lambda.iter());
        out.push(self.b_lambda);
        push_row_major(&mut out, &self.w_o);
        out.extend(self.b_o.iter());
        out
    }

    pub fn from_flat(shape: ReasonerShape, values: &[f64]) -> Result<Self, ReasonerError> {
        shape.validate()?;
        if values.len() != shape.num_params() {
            return Err(ReasonerError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                shape.num_params(),
                values.len()
            )));
        }
        let d = shape.dim;
        let hd = shape.head_dim();
        let mut it = values.iter().copied();
        let mut take = |rows: usize, cols: usize| DMatrix::from_row_iterator(rows, cols, it.by_ref().take(rows * cols));
        let layers = (0..shape.k_layers)
            .map(|_| (0..shape.heads).map(|_| take(d, hd)).collect())
            .collect();
        let w_lambda = DVector::from_column_slice(take(1, 2 * d).as_slice());
        let b_lambda = take(1, 1)[(0, 0)];
        let w_o = take(d, d);
        let b_o = DVector::from_column_slice(take(d, 1).as_slice());
        Ok(Self {
            shape,
            layers,
            w_lambda,
            b_lambda,
            w_o,
            b_o,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ReasonerParams) {
        for (layer, other_layer) in self.layers.iter_mut().zip(&other.layers) {
            for (w, ow) in layer.iter_mut().zip(other_layer) {
                *w += ow * alpha;
            }
        }
        self.w_lambda += &other.w_lambda * alpha;
        self.b_lambda += other.b_lambda * alpha;
        self.w_o += &other.w_o * alpha;
        self.b_o += &other.b_o * alpha;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + 8 * self.shape.num_params());
        out.extend_from_slice(PARAMS_MAGIC);
        for v in [self.shape.k_layers, self.shape.heads, self.shape.dim] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.to_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ReasonerError> {
        let bad = |m: &str| ReasonerError::ParamsFormat(m.to_string());
        let rest = bytes
            .strip_prefix(PARAMS_MAGIC.as_slice())
            .ok_or_else(|| bad("bad magic"))?;
        if rest.len() < 12 {
            return Err(bad("truncated header"));
        }
        let read_u32 = |i: usize| u32::from_le_bytes(rest[i * 4..i * 4 + 4].try_into().expect("4 bytes")) as usize;
        let shape = ReasonerShape::new(read_u32(0), read_u32(1), read_u32(2))?;
        let body = &rest[12..];
        let expected = shape
            .num_params()
            .checked_mul(8)
            .ok_or_else(|| bad("shape too large"))?;
        if body.len() != expected {
            return Err(bad(&format!("expected {expected} payload bytes, found {}", body.len())));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let params = Self::from_flat(shape, &values)?;
        if !params.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(params)
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
}

//! Dense building blocks: linear maps, layer norm, multi-head attention and
//! the position-wise feed-forward network.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `y = x W + b` applied to every row. `weight` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Gaussian weights scaled by `1 / sqrt(fan_in)`, zero bias.
    pub fn seeded<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.sample::<f64, _>(StandardNormal) * scale);
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(format!(
                "linear map expects {} input features, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.mean().unwrap_or(0.0);
            let var = row.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0);
            let inv = 1.0 / (var + self.eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        out * &self.gamma + &self.beta
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Output of one attention call, with the per-head attention matrices
/// (`query_len x key_len`, rows summing to one).
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Array2<f64>,
    pub weights: Vec<Array2<f64>>,
}

impl AttentionOutput {
    /// Largest `|row sum - 1|` over all heads.
    pub fn max_row_sum_error(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.sum_axis(Axis(1)).into_iter())
            .fold(0.0, |m, s| m.max((s - 1.0).abs()))
    }

    pub fn key_len(&self) -> usize {
        self.weights.first().map_or(0, |w| w.ncols())
    }
}

/// Scaled dot-product attention split over `heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub q_proj: Linear,
    pub k_proj: Linear,
    pub v_proj: Linear,
    pub out_proj: Linear,
}

impl MultiHeadAttention {
    pub fn seeded<R: Rng>(rng: &mut R, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "model width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            q_proj: Linear::seeded(rng, dim, dim),
            k_proj: Linear::seeded(rng, dim, dim),
            v_proj: Linear::seeded(rng, dim, dim),
            out_proj: Linear::seeded(rng, dim, dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.q_proj.in_dim()
    }

    /// Attends from `query` to `key`/`value`. Positional terms, when used,
    /// are already added to `query` and `key` by the caller.
    pub fn forward(&self, query: &Array2<f64>, key: &Array2<f64>, value: &Array2<f64>) -> Result<AttentionOutput> {
        let dim = self.dim();
        if self.heads == 0 || !dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model width {dim} is not divisible by {} heads",
                self.heads
            )));
        }
        if key.nrows() != value.nrows() {
            return Err(Error::shape(format!(
                "{} keys but {} values",
                key.nrows(),
                value.nrows()
            )));
        }
        if key.nrows() == 0 || query.nrows() == 0 {
            return Err(Error::shape("attention needs at least one query and one key"));
        }
        let q = self.q_proj.forward(&query.view())?;
        let k = self.k_proj.forward(&key.view())?;
        let v = self.v_proj.forward(&value.view())?;

        let head_dim = dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut merged = Array2::zeros((query.nrows(), dim));
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut scores);
            merged.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            weights.push(scores);
        }
        Ok(AttentionOutput {
            output: self.out_proj.forward(&merged.view())?,
            weights,
        })
    }
}

/// `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub expand: Linear,
    pub contract: Linear,
}

impl FeedForward {
    pub fn seeded<R: Rng>(rng: &mut R, dim: usize, hidden: usize) -> Self {
        Self {
            expand: Linear::seeded(rng, dim, hidden),
            contract: Linear::seeded(rng, hidden, dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let hidden = self.expand.forward(&x.view())?.mapv(|v| v.max(0.0));
        self.contract.forward(&hidden.view())
    }
}

/// Fixed 2D sine/cosine embedding for an `h x w` grid, one row per position
/// in row-major order. The first half of the channels encodes the row, the
/// second half the column.
pub fn sine_position_embedding(h: usize, w: usize, dim: usize) -> Result<Array2<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::Config(format!("positional embedding width {dim} must be even")));
    }
    let half = dim / 2;
    let two_pi = std::f64::consts::TAU;
    let freq = |k: usize| 10000f64.powf((2 * (k / 2)) as f64 / half as f64);
    let mut out = Array2::zeros((h * w, dim));
    for i in 0..h {
        let y = (i + 1) as f64 / h as f64 * two_pi;
        for j in 0..w {
            let x = (j + 1) as f64 / w as f64 * two_pi;
            let mut row = out.row_mut(i * w + j);
            for k in 0..half {
                let (py, px) = (y / freq(k), x / freq(k));
                row[k] = if k % 2 == 0 { py.sin() } else { py.cos() };
                row[half + k] = if k % 2 == 0 { px.sin() } else { px.cos() };
            }
        }
    }
    Ok(out)
}

/// Stacks `a` on top of `b`.
pub fn concat_rows(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).map_err(|e| Error::shape(e.to_string()))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

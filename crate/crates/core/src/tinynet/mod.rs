//! Forward-only, seeded replica of the view-prediction network.
//!
//! The pipeline is `features -> channel_reduce -> encoder -> feature
//! extrapolation -> decoder -> heads`. The extrapolation module (FEM) grows a
//! set of `M` padded tokens from a learnable query, attending over the
//! visible tokens and its own self-attention output. The decoder turns `N`
//! learnable anchors into boxes and confidences while attending over visible
//! and padded tokens together.
//!
//! Weights are immutable after [`ModelWeights::seeded`]; every forward pass
//! is a pure function of weights and input.
//!
//! ```
//! use unic_kit::tinynet::{forward, synth_features_with_channels, ModelWeights, TinyNetConfig};
//!
//! let cfg = TinyNetConfig { in_channels: 16, d_model: 16, heads: 2, ffn_dim: 32, encoder_layers: 1, ..TinyNetConfig::default() };
//! let weights = ModelWeights::seeded(&cfg, 7).unwrap();
//! let grid = synth_features_with_channels(64, 96, 16, 7).unwrap();
//! let out = forward(&grid, &weights, true).unwrap();
//! assert_eq!(out.predictions.len(), cfg.queries);
//! ```

mod features;
mod layers;

pub use features::{
    grid_side, read_feature_file, read_features, synth_features, synth_features_with_channels, write_feature_file,
    write_features, FeatureGrid, BACKBONE_CHANNELS, BACKBONE_STRIDE,
};
pub use layers::{
    concat_rows, sigmoid, sine_position_embedding, softmax_rows, softplus, AttentionOutput, FeedForward, LayerNorm,
    Linear, MultiHeadAttention,
};

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CompBox;
use crate::views::PredictedView;

/// `L x d` token matrix.
pub type TokenSequence = Array2<f64>;

/// Added to softplus sizes so widths and heights stay strictly positive.
pub const MIN_SIZE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyNetConfig {
    pub in_channels: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub fem_layers: usize,
    pub decoder_layers: usize,
    /// `M`, the number of extrapolated tokens.
    pub pad_tokens: usize,
    /// `N`, the number of predicted views.
    pub queries: usize,
}

impl Default for TinyNetConfig {
    fn default() -> Self {
        Self {
            in_channels: BACKBONE_CHANNELS,
            d_model: 256,
            heads: 8,
            ffn_dim: 1024,
            encoder_layers: 6,
            fem_layers: 2,
            decoder_layers: 2,
            pad_tokens: 12,
            queries: 16,
        }
    }
}

impl TinyNetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("pad_tokens", self.pad_tokens),
            ("queries", self.queries),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::Config(format!("d_model {} must be even", self.d_model)));
        }
        Ok(())
    }
}

/// Post-norm self-attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

/// Self-attention, cross-attention and FFN, each with residual and norm.
/// Used by both the extrapolation module and the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossBlock {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: TinyNetConfig,
    pub reduce: Linear,
    pub encoder: Vec<EncoderBlock>,
    pub fem: Vec<CrossBlock>,
    /// Learnable query `m`, `M x d`.
    pub pad_query: Array2<f64>,
    pub decoder: Vec<CrossBlock>,
    /// Learnable anchors, `N x d`.
    pub anchors: Array2<f64>,
    pub box_head: Linear,
    pub confidence_head: Linear,
}

impl ModelWeights {
    pub fn seeded(config: &TinyNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = *config;
        let d = c.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reduce = Linear::seeded(&mut rng, c.in_channels, d);
        let encoder = (0..c.encoder_layers)
            .map(|_| {
                Ok(EncoderBlock {
                    attn: MultiHeadAttention::seeded(&mut rng, d, c.heads)?,
                    norm1: LayerNorm::new(d),
                    ffn: FeedForward::seeded(&mut rng, d, c.ffn_dim),
                    norm2: LayerNorm::new(d),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fem = seeded_cross_blocks(&mut rng, &c, c.fem_layers)?;
        let pad_query = gaussian(&mut rng, c.pad_tokens, d);
        let decoder = seeded_cross_blocks(&mut rng, &c, c.decoder_layers)?;
        let anchors = gaussian(&mut rng, c.queries, d);
        let mut box_head = Linear::seeded(&mut rng, d, 4);
        box_head.bias[0] = 0.5;
        box_head.bias[1] = 0.5;
        let confidence_head = Linear::seeded(&mut rng, d, 1);
        Ok(Self {
            config: c,
            reduce,
            encoder,
            fem,
            pad_query,
            decoder,
            anchors,
            box_head,
            confidence_head,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn seeded_cross_blocks(rng: &mut ChaCha8Rng, c: &TinyNetConfig, layers: usize) -> Result<Vec<CrossBlock>> {
    (0..layers)
        .map(|_| {
            Ok(CrossBlock {
                self_attn: MultiHeadAttention::seeded(rng, c.d_model, c.heads)?,
                norm1: LayerNorm::new(c.d_model),
                cross_attn: MultiHeadAttention::seeded(rng, c.d_model, c.heads)?,
                norm2: LayerNorm::new(c.d_model),
                ffn: FeedForward::seeded(rng, c.d_model, c.ffn_dim),
                norm3: LayerNorm::new(c.d_model),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Encoder,
    FemSelf,
    FemCross,
    DecoderSelf,
    DecoderCross,
}

/// Shape and normalization facts about one attention call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub stage: Stage,
    pub layer: usize,
    pub query_len: usize,
    pub key_len: usize,
    pub max_row_sum_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub records: Vec<AttentionRecord>,
}

impl ForwardTrace {
    fn record(&mut self, stage: Stage, layer: usize, out: &AttentionOutput) {
        self.records.push(AttentionRecord {
            stage,
            layer,
            query_len: out.output.nrows(),
            key_len: out.key_len(),
            max_row_sum_error: out.max_row_sum_error(),
        });
    }

    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &AttentionRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.max_row_sum_error))
    }
}

fn ensure_finite(x: &Array2<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values after {what}")))
    }
}

fn check_width(x: &Array2<f64>, d: usize, what: &str) -> Result<()> {
    if x.ncols() != d || x.nrows() == 0 {
        return Err(Error::shape(format!(
            "{what} is {}x{}, expected Lx{d} with L >= 1",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Per-position linear channel map, flattened row-major into `H*W` tokens.
pub fn channel_reduce(grid: &FeatureGrid, weights: &ModelWeights) -> Result<TokenSequence> {
    let (c, h, w) = grid.data().dim();
    if c != weights.reduce.in_dim() {
        return Err(Error::shape(format!(
            "feature grid has {c} channels, weights expect {}",
            weights.reduce.in_dim()
        )));
    }
    let positions = grid
        .data()
        .view()
        .into_shape_with_order((c, h * w))
        .map_err(|e| Error::shape(e.to_string()))?;
    weights.reduce.forward(&positions.t())
}

/// Runs the encoder stack. `pos`, when given, is added to queries and keys
/// only.
pub fn encoder_forward(
    z: &TokenSequence,
    pos: Option<&TokenSequence>,
    weights: &ModelWeights,
    trace: &mut ForwardTrace,
) -> Result<TokenSequence> {
    check_width(z, weights.config.d_model, "encoder input")?;
    if let Some(p) = pos {
        if p.dim() != z.dim() {
            return Err(Error::shape(format!(
                "positional embedding {:?} does not match tokens {:?}",
                p.dim(),
                z.dim()
            )));
        }
    }
    let mut x = z.clone();
    for (layer, block) in weights.encoder.iter().enumerate() {
        let qk = match pos {
            Some(p) => &x + p,
            None => x.clone(),
        };
        let a = block.attn.forward(&qk, &qk, &x)?;
        trace.record(Stage::Encoder, layer, &a);
        x = block.norm1.forward(&(&x + &a.output));
        x = block.norm2.forward(&(&x + &block.ffn.forward(&x)?));
        ensure_finite(&x, "encoder block")?;
    }
    Ok(x)
}

/// Grows the `M` padded tokens from the learnable query.
pub fn fem_forward(z_vis: &TokenSequence, weights: &ModelWeights, trace: &mut ForwardTrace) -> Result<TokenSequence> {
    check_width(z_vis, weights.config.d_model, "visible tokens")?;
    let mut x = weights.pad_query.clone();
    for (layer, block) in weights.fem.iter().enumerate() {
        let s = block.self_attn.forward(&x, &x, &x)?;
        trace.record(Stage::FemSelf, layer, &s);
        let s = block.norm1.forward(&(&x + &s.output));
        let memory = concat_rows(z_vis, &s)?;
        let c = block.cross_attn.forward(&s, &memory, &memory)?;
        trace.record(Stage::FemCross, layer, &c);
        let c = block.norm2.forward(&(&s + &c.output));
        x = block.norm3.forward(&(&c + &block.ffn.forward(&c)?));
        ensure_finite(&x, "extrapolation layer")?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    pub boxes: Vec<CompBox>,
    pub confidences: Vec<f64>,
}

impl DecoderOutput {
    pub fn predictions(&self) -> Result<Vec<PredictedView>> {
        self.boxes
            .iter()
            .zip(&self.confidences)
            .map(|(b, &c)| PredictedView::new(*b, c))
            .collect()
    }
}

/// Decodes anchors against `concat(z_vis, z_pad)` and applies the heads:
/// linear centers, softplus sizes, sigmoid confidence.
pub fn decoder_forward(
    z_vis: &TokenSequence,
    z_pad: &TokenSequence,
    weights: &ModelWeights,
    trace: &mut ForwardTrace,
) -> Result<DecoderOutput> {
    let d = weights.config.d_model;
    check_width(z_vis, d, "visible tokens")?;
    check_width(z_pad, d, "padded tokens")?;
    let memory = concat_rows(z_vis, z_pad)?;
    let mut x = weights.anchors.clone();
    for (layer, block) in weights.decoder.iter().enumerate() {
        let s = block.self_attn.forward(&x, &x, &x)?;
        trace.record(Stage::DecoderSelf, layer, &s);
        let s = block.norm1.forward(&(&x + &s.output));
        let c = block.cross_attn.forward(&s, &memory, &memory)?;
        trace.record(Stage::DecoderCross, layer, &c);
        let c = block.norm2.forward(&(&s + &c.output));
        x = block.norm3.forward(&(&c + &block.ffn.forward(&c)?));
        ensure_finite(&x, "decoder block")?;
    }
    let raw_boxes = weights.box_head.forward(&x.view())?;
    let raw_conf = weights.confidence_head.forward(&x.view())?;
    let boxes = raw_boxes
        .axis_iter(Axis(0))
        .map(|r| CompBox::new(r[0], r[1], softplus(r[2]) + MIN_SIZE, softplus(r[3]) + MIN_SIZE))
        .collect::<Result<Vec<_>>>()?;
    let confidences = raw_conf.iter().map(|&v| sigmoid(v)).collect();
    Ok(DecoderOutput { boxes, confidences })
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub z_vis: TokenSequence,
    pub z_pad: TokenSequence,
    pub predictions: Vec<PredictedView>,
    pub trace: ForwardTrace,
}

/// Full pipeline from a feature grid to `N` predicted views.
pub fn forward(grid: &FeatureGrid, weights: &ModelWeights, positional: bool) -> Result<ForwardOutput> {
    let mut trace = ForwardTrace::default();
    let tokens = channel_reduce(grid, weights)?;
    ensure_finite(&tokens, "channel reduction")?;
    let pos = if positional {
        Some(sine_position_embedding(
            grid.height(),
            grid.width(),
            weights.config.d_model,
        )?)
    } else {
        None
    };
    let z_vis = encoder_forward(&tokens, pos.as_ref(), weights, &mut trace)?;
    let z_pad = fem_forward(&z_vis, weights, &mut trace)?;
    let decoded = decoder_forward(&z_vis, &z_pad, weights, &mut trace)?;
    Ok(ForwardOutput {
        z_vis,
        z_pad,
        predictions: decoded.predictions()?,
        trace,
    })
}

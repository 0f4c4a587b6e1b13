//! Scalar importance estimator over the graph: a feature projection, stacked
//! predicate-aware attention layers, and a degree-based centrality adjustment.
//! The forward pass records every intermediate needed by the analytic
//! backward pass in the objective module.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, NodeFeatures};

/// Architecture hyperparameters. `hidden_dim = None` derives the projection
/// width as `ceil(0.75 * feature_dim)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub layers: usize,
    pub heads: usize,
    pub pred_dim: usize,
    pub hidden_dim: Option<usize>,
    pub leaky_slope: f64,
    pub degree_epsilon: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            pred_dim: 10,
            hidden_dim: None,
            leaky_slope: 0.01,
            degree_epsilon: 1e-8,
        }
    }
}

impl EstimatorConfig {
    pub fn hidden_dim(&self, feature_dim: usize) -> usize {
        self.hidden_dim.unwrap_or((3 * feature_dim + 3) / 4)
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.pred_dim == 0 {
            return Err(Error::Config(
                "layers, heads and pred_dim must all be positive".into(),
            ));
        }
        if feature_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if self.hidden_dim(feature_dim) == 0 {
            return Err(Error::Config("hidden dimension must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky slope must lie in (0, 1)".into()));
        }
        if !(self.degree_epsilon > 0.0) {
            return Err(Error::Config("degree epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Length of one attention vector: coefficients for the source score,
    /// the predicate embedding, and the neighbor score.
    pub fn attention_len(&self) -> usize {
        2 + self.pred_dim
    }
}

/// All trainable parameters. Shapes are fixed by the config, the feature
/// dimension, and the predicate count (embedding table has one extra row for
/// self-edges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Projection `hidden_dim x feature_dim`.
    pub w_g: Array2<f64>,
    pub b_g: Array1<f64>,
    /// Readout of the projected features into the initial scalar score.
    pub w_out: Array1<f64>,
    pub b_out: f64,
    /// Predicate embeddings, `(predicates + 1) x pred_dim`; last row is the
    /// self-edge predicate.
    pub pred_emb: Array2<f64>,
    /// Attention vectors, one `2 + pred_dim` row per head per layer.
    pub attention: Vec<Array2<f64>>,
    pub alpha: f64,
    pub beta: f64,
}

impl EstimatorParams {
    /// Zero-valued parameters with the same shapes, used as gradient storage.
    pub fn zeros_like(&self) -> Self {
        Self {
            w_g: Array2::zeros(self.w_g.raw_dim()),
            b_g: Array1::zeros(self.b_g.raw_dim()),
            w_out: Array1::zeros(self.w_out.raw_dim()),
            b_out: 0.0,
            pred_emb: Array2::zeros(self.pred_emb.raw_dim()),
            attention: self
                .attention
                .iter()
                .map(|a| Array2::zeros(a.raw_dim()))
                .collect(),
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_g.len()
            + self.b_g.len()
            + self.w_out.len()
            + 1
            + self.pred_emb.len()
            + self.attention.iter().map(|a| a.len()).sum::<usize>()
            + 2
    }

    /// Serializes every block in canonical order: projection, projection
    /// bias, readout, readout bias, predicate embeddings, attention vectors
    /// (layer-major, head-major), then the two centrality scalars.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.w_g.iter());
        out.extend(self.b_g.iter());
        out.extend(self.w_out.iter());
        out.push(self.b_out);
        out.extend(self.pred_emb.iter());
        for a in &self.attention {
            out.extend(a.iter());
        }
        out.push(self.alpha);
        out.push(self.beta);
        out
    }

    /// Rebuilds parameters from a flat vector in canonical order; the
    /// template supplies the shapes.
    pub fn from_flat(template: &Self, flat: &[f64]) -> Result<Self> {
        if flat.len() != template.param_count() {
            return Err(Error::Dimension {
                context: "flat parameter vector".into(),
                expected: template.param_count(),
                found: flat.len(),
            });
        }
        let mut pos = 0;
        let mut take = |len: usize| {
            let slice = &flat[pos..pos + len];
            pos += len;
            slice.to_vec()
        };
        let w_g = Array2::from_shape_vec(template.w_g.raw_dim(), take(template.w_g.len())).unwrap();
        let b_g = Array1::from_vec(take(template.b_g.len()));
        let w_out = Array1::from_vec(take(template.w_out.len()));
        let b_out = take(1)[0];
        let pred_emb =
            Array2::from_shape_vec(template.pred_emb.raw_dim(), take(template.pred_emb.len())).unwrap();
        let attention = template
            .attention
            .iter()
            .map(|a| Array2::from_shape_vec(a.raw_dim(), take(a.len())).unwrap())
            .collect();
        let alpha = take(1)[0];
        let beta = take(1)[0];
        Ok(Self {
            w_g,
            b_g,
            w_out,
            b_out,
            pred_emb,
            attention,
            alpha,
            beta,
        })
    }

    /// In-place `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        self.w_g.scaled_add(scale, &other.w_g);
        self.b_g.scaled_add(scale, &other.b_g);
        self.w_out.scaled_add(scale, &other.w_out);
        self.b_out += scale * other.b_out;
        self.pred_emb.scaled_add(scale, &other.pred_emb);
        for (a, b) in self.attention.iter_mut().zip(&other.attention) {
            a.scaled_add(scale, b);
        }
        self.alpha += scale * other.alpha;
        self.beta += scale * other.beta;
    }
}

/// Draws fresh parameters from seeded normal distributions, each block scaled
/// by its fan-in.
pub fn init_params(
    config: &EstimatorConfig,
    kg: &KnowledgeGraph,
    feature_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EstimatorParams> {
    config.validate(feature_dim)?;
    let hidden = config.hidden_dim(feature_dim);
    let att_len = config.attention_len();

    let normal = |rng: &mut ChaCha8Rng, n: usize, std: f64| -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("std is finite and positive");
        (0..n).map(|_| dist.sample(rng)).collect()
    };

    let w_g = Array2::from_shape_vec(
        (hidden, feature_dim),
        normal(rng, hidden * feature_dim, 1.0 / (feature_dim as f64).sqrt()),
    )
    .unwrap();
    let b_g = Array1::zeros(hidden);
    let w_out = Array1::from_vec(normal(rng, hidden, 1.0 / (hidden as f64).sqrt()));
    let b_out = 0.0;
    let pred_rows = kg.predicate_count() + 1;
    let pred_emb = Array2::from_shape_vec(
        (pred_rows, config.pred_dim),
        normal(rng, pred_rows * config.pred_dim, 1.0 / (config.pred_dim as f64).sqrt()),
    )
    .unwrap();
    let attention = (0..config.layers)
        .map(|_| {
            Array2::from_shape_vec(
                (config.heads, att_len),
                normal(rng, config.heads * att_len, 1.0 / (att_len as f64).sqrt()),
            )
            .unwrap()
        })
        .collect();
    // centrality starts as a mild positive degree effect
    let alpha = 1.0 + 0.1 * rng.gen::<f64>();
    let beta = 0.0;

    Ok(EstimatorParams {
        w_g,
        b_g,
        w_out,
        b_out,
        pred_emb,
        attention,
        alpha,
        beta,
    })
}

#[inline]
pub fn leaky_relu(u: f64, slope: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        slope * u
    }
}

/// Derivative convention at the kink: the negative-side slope.
#[inline]
pub fn leaky_relu_grad(u: f64, slope: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub fn elu(u: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        u.exp() - 1.0
    }
}

#[inline]
pub fn elu_grad(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        u.exp()
    }
}

/// Attention state of one head in one layer: pre-activation logits and the
/// normalized weights, both aligned with `kg.attention_edges(i)`.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub logits: Vec<Vec<f64>>,
    pub omegas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub heads: Vec<HeadTrace>,
    /// Head-averaged scores after this layer.
    pub h_out: Vec<f64>,
}

/// Complete record of one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Projected features, `n x hidden_dim`.
    pub x_proj: Array2<f64>,
    /// Scores per level: `h_levels[0]` is the readout, `h_levels[l]` the
    /// output of layer `l`.
    pub h_levels: Vec<Vec<f64>>,
    pub layers: Vec<LayerTrace>,
    /// Pre-activation of the centrality factor.
    pub u: Vec<f64>,
    /// Centrality factors after ELU.
    pub c: Vec<f64>,
    /// Products `c * h_last` before the final rectification.
    pub y: Vec<f64>,
    /// Final non-negative importance estimates.
    pub z: Vec<f64>,
}

impl ForwardTrace {
    pub fn final_scores(&self) -> &[f64] {
        &self.z
    }
}

/// `X' = X W_g^T + b_g`.
pub fn project_features(params: &EstimatorParams, features: &NodeFeatures) -> Result<Array2<f64>> {
    if features.dim() != params.w_g.ncols() {
        return Err(Error::Dimension {
            context: "feature projection".into(),
            expected: params.w_g.ncols(),
            found: features.dim(),
        });
    }
    Ok(features.matrix().dot(&params.w_g.t()) + &params.b_g)
}

/// Initial scalar score per node from the projected features.
pub fn initial_scores(params: &EstimatorParams, x_proj: &Array2<f64>) -> Vec<f64> {
    x_proj
        .rows()
        .into_iter()
        .map(|row| row.dot(&params.w_out) + params.b_out)
        .collect()
}

/// Computes one head's attention over every node's neighborhood. The logit of
/// edge `(i, rho, j)` combines the source score, the predicate embedding, and
/// the neighbor score; weights are the leaky-rectified logits, softmaxed over
/// each neighborhood.
pub fn attention_weights(
    params: &EstimatorParams,
    config: &EstimatorConfig,
    kg: &KnowledgeGraph,
    h: &[f64],
    layer: usize,
    head: usize,
) -> HeadTrace {
    let a = params.attention[layer].row(head);
    let d_p = config.pred_dim;
    let n = kg.entity_count();
    let mut logits = Vec::with_capacity(n);
    let mut omegas = Vec::with_capacity(n);
    for i in 0..n {
        let edges = kg.attention_edges(EntityId(i as u32));
        let mut raw = Vec::with_capacity(edges.len());
        for edge in edges {
            let pi = params.pred_emb.row(edge.predicate_row);
            let mut s_hat = a[0] * h[i] + a[1 + d_p] * h[edge.other.idx()];
            for t in 0..d_p {
                s_hat += a[1 + t] * pi[t];
            }
            raw.push(s_hat);
        }
        let acts: Vec<f64> = raw.iter().map(|&s| leaky_relu(s, config.leaky_slope)).collect();
        let max = acts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = acts.iter().map(|&e| (e - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        omegas.push(exps.into_iter().map(|e| e / sum).collect());
        logits.push(raw);
    }
    HeadTrace { logits, omegas }
}

/// One attention layer: per head, each node aggregates its neighborhood's
/// previous scores under that head's weights; heads are averaged.
pub fn layer_forward(
    params: &EstimatorParams,
    config: &EstimatorConfig,
    kg: &KnowledgeGraph,
    h: &[f64],
    layer: usize,
) -> LayerTrace {
    let n = kg.entity_count();
    let heads: Vec<HeadTrace> = (0..config.heads)
        .map(|k| attention_weights(params, config, kg, h, layer, k))
        .collect();
    let mut h_out = vec![0.0; n];
    for i in 0..n {
        let edges = kg.attention_edges(EntityId(i as u32));
        let mut acc = 0.0;
        for head in &heads {
            let omega = &head.omegas[i];
            for (e, edge) in edges.iter().enumerate() {
                acc += omega[e] * h[edge.other.idx()];
            }
        }
        h_out[i] = acc / config.heads as f64;
    }
    LayerTrace { heads, h_out }
}

/// Scales each node's final score by an ELU-activated log-degree factor and
/// rectifies the product. Returns `(u, c, y, z)`.
pub fn centrality_adjust(
    params: &EstimatorParams,
    config: &EstimatorConfig,
    kg: &KnowledgeGraph,
    h_last: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = kg.entity_count();
    let mut u = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let deg = kg.in_degree(EntityId(i as u32)) as f64;
        let ui = params.alpha * (deg + config.degree_epsilon).ln() + params.beta;
        let ci = elu(ui);
        let yi = ci * h_last[i];
        u.push(ui);
        c.push(ci);
        y.push(yi);
        z.push(yi.max(0.0));
    }
    (u, c, y, z)
}

/// Full forward pass, keeping every intermediate for the backward pass.
pub fn forward(
    params: &EstimatorParams,
    config: &EstimatorConfig,
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
) -> Result<ForwardTrace> {
    config.validate(features.dim())?;
    if params.pred_emb.nrows() != kg.predicate_count() + 1 {
        return Err(Error::Dimension {
            context: "predicate embedding rows".into(),
            expected: kg.predicate_count() + 1,
            found: params.pred_emb.nrows(),
        });
    }
    let x_proj = project_features(params, features)?;
    let h0 = initial_scores(params, &x_proj);

    let mut h_levels = vec![h0];
    let mut layers = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let trace = layer_forward(params, config, kg, h_levels.last().unwrap(), l);
        h_levels.push(trace.h_out.clone());
        layers.push(trace);
    }

    let (u, c, y, z) = centrality_adjust(params, config, kg, h_levels.last().unwrap());
    Ok(ForwardTrace {
        x_proj,
        h_levels,
        layers,
        u,
        c,
        y,
        z,
    })
}

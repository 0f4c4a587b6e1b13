//! The training objective: listwise cross-entropy against each observed
//! signal, a bilinear edge-score regularizer over sampled triples, and an L2
//! prior. Gradients are computed analytically by reverse accumulation through
//! the recorded forward trace, and a central-difference checker validates
//! them entry by entry.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{
    elu_grad, forward, leaky_relu_grad, EstimatorConfig, EstimatorParams, ForwardTrace,
};
use crate::kg::{EntityId, KnowledgeGraph, NodeFeatures};
use crate::signals::{top_one_probabilities, InputSignal};

/// Weights of the two regularizers and the edge-sampling policy for the
/// bilinear term.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// L2 weight on all parameters.
    pub lambda: f64,
    /// Weight of the bilinear edge-score term; 0 disables it.
    pub nu: f64,
    /// Fraction of triples entering the edge term per step.
    pub edge_sample_fraction: f64,
    /// Base seed of the per-step edge-sampling stream.
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.001,
            nu: 0.0,
            edge_sample_fraction: 0.2,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, est: &EstimatorConfig, feature_dim: usize) -> Result<()> {
        if self.lambda < 0.0 || self.nu < 0.0 {
            return Err(Error::Config("lambda and nu must be non-negative".into()));
        }
        if !(self.edge_sample_fraction > 0.0 && self.edge_sample_fraction <= 1.0) {
            return Err(Error::Config("edge_sample_fraction must lie in (0, 1]".into()));
        }
        if self.nu > 0.0 && est.pred_dim != est.hidden_dim(feature_dim) {
            return Err(Error::Config(format!(
                "the bilinear edge term requires pred_dim == hidden_dim, found {} and {}",
                est.pred_dim,
                est.hidden_dim(feature_dim)
            )));
        }
        Ok(())
    }
}

/// Loss value together with one gradient block per parameter block.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub loss: f64,
    pub grads: EstimatorParams,
    /// Importance estimates at the evaluated point, so a training loop can
    /// validate without a second forward pass.
    pub z: Vec<f64>,
}

/// Shannon entropy of a probability vector in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum::<f64>()
}

/// Cross-entropy between the top-one distributions of the observed values and
/// of the restricted estimates. Bounded below by the entropy of the observed
/// distribution, with equality when the estimates match up to a shift.
pub fn listwise_loss(z_restricted: &[f64], s: &[f64]) -> Result<f64> {
    if z_restricted.len() != s.len() {
        return Err(Error::Contract(format!(
            "listwise loss needs aligned vectors, found {} and {}",
            z_restricted.len(),
            s.len()
        )));
    }
    if s.is_empty() {
        return Err(Error::Contract("listwise loss needs at least one entry".into()));
    }
    let p = top_one_probabilities(s);
    let q = top_one_probabilities(z_restricted);
    Ok(p.iter()
        .zip(&q)
        .map(|(&pi, &qi)| -pi * qi.max(1e-300).ln())
        .sum())
}

/// Triple indices entering the edge term at the given step. The sample is
/// drawn without replacement from a stream keyed on the config seed and the
/// step, so repeated calls agree and successive steps differ.
pub fn sample_reg_edges(kg: &KnowledgeGraph, config: &LossConfig, step: u64) -> Vec<usize> {
    if config.nu == 0.0 || kg.triple_count() == 0 {
        return Vec::new();
    }
    let n = kg.triple_count();
    let amount = ((config.edge_sample_fraction * n as f64).round() as usize).clamp(1, n);
    if amount == n {
        return (0..n).collect();
    }
    let mixed = config.seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut picked = rand::seq::index::sample(&mut rng, n, amount).into_vec();
    picked.sort_unstable();
    picked
}

fn bilinear_score(
    pred_emb: &Array2<f64>,
    x_proj: &Array2<f64>,
    s: usize,
    rho: usize,
    o: usize,
) -> f64 {
    let mut score = 0.0;
    for t in 0..pred_emb.ncols() {
        score += pred_emb[[rho, t]] * x_proj[[s, t]] * x_proj[[o, t]];
    }
    score
}

/// Edge-score regularizer: `(nu/2) * sum over sampled triples of
/// (x'_s^T diag(w_rho) x'_o - 1)^2`, where `w_rho` is the predicate-embedding
/// row of the triple's predicate. Self-edges never enter the pool because the
/// sample indexes real triples only.
pub fn kg_reg_loss(
    params: &EstimatorParams,
    kg: &KnowledgeGraph,
    x_proj: &Array2<f64>,
    config: &LossConfig,
    step: u64,
) -> Result<f64> {
    if config.nu == 0.0 {
        return Ok(0.0);
    }
    if params.pred_emb.ncols() != x_proj.ncols() {
        return Err(Error::Config(format!(
            "the bilinear edge term requires pred_dim == hidden_dim, found {} and {}",
            params.pred_emb.ncols(),
            x_proj.ncols()
        )));
    }
    let mut loss = 0.0;
    for m in sample_reg_edges(kg, config, step) {
        let t = kg.triples()[m];
        let r = bilinear_score(&params.pred_emb, x_proj, t.subject.idx(), t.predicate.idx(), t.object.idx())
            - 1.0;
        loss += 0.5 * config.nu * r * r;
    }
    Ok(loss)
}

fn l2_norm_sq(params: &EstimatorParams) -> f64 {
    params.flatten().iter().map(|v| v * v).sum()
}

struct LossParts {
    loss: f64,
    trace: ForwardTrace,
}

fn loss_parts(
    params: &EstimatorParams,
    est: &EstimatorConfig,
    config: &LossConfig,
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &[&InputSignal],
    step: u64,
) -> Result<LossParts> {
    config.validate(est, features.dim())?;
    let trace = forward(params, est, kg, features)?;

    let mut loss = 0.0;
    for signal in signals {
        let s_vals: Vec<f64> = signal.values().values().copied().collect();
        let z_res: Vec<f64> = signal.domain().map(|id| trace.z[id.idx()]).collect();
        loss += listwise_loss(&z_res, &s_vals)?;
    }
    loss += kg_reg_loss(params, kg, &trace.x_proj, config, step)?;
    loss += 0.5 * config.lambda * l2_norm_sq(params);
    Ok(LossParts { loss, trace })
}

/// Full objective at the given parameters: listwise terms over the cluster's
/// signals, the sampled edge term for this step, and the L2 prior.
pub fn total_loss(
    params: &EstimatorParams,
    est: &EstimatorConfig,
    config: &LossConfig,
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &[&InputSignal],
    step: u64,
) -> Result<f64> {
    Ok(loss_parts(params, est, config, kg, features, signals, step)?.loss)
}

/// Analytic gradient of `total_loss` with respect to every parameter block,
/// obtained by reverse accumulation through the forward trace.
pub fn gradients(
    params: &EstimatorParams,
    est: &EstimatorConfig,
    config: &LossConfig,
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &[&InputSignal],
    step: u64,
) -> Result<GradientBundle> {
    config.validate(est, features.dim())?;
    let trace = forward(params, est, kg, features)?;
    let n = kg.entity_count();
    let hidden = trace.x_proj.ncols();
    let d_p = est.pred_dim;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;

    // listwise terms: d loss / d z = q - p per signal, scattered to domains
    let mut dz = vec![0.0; n];
    for signal in signals {
        let ids: Vec<usize> = signal.domain().map(|id| id.idx()).collect();
        let s_vals: Vec<f64> = signal.values().values().copied().collect();
        let z_res: Vec<f64> = ids.iter().map(|&i| trace.z[i]).collect();
        let p = top_one_probabilities(&s_vals);
        let q = top_one_probabilities(&z_res);
        loss += p
            .iter()
            .zip(&q)
            .map(|(&pi, &qi)| -pi * qi.max(1e-300).ln())
            .sum::<f64>();
        for (k, &i) in ids.iter().enumerate() {
            dz[i] += q[k] - p[k];
        }
    }

    // rectifier and centrality backward; the estimate is z = relu(c * h_last)
    let h_last = trace.h_levels.last().unwrap();
    let mut dh = vec![0.0; n];
    for i in 0..n {
        if dz[i] == 0.0 || trace.y[i] <= 0.0 {
            continue;
        }
        let dy = dz[i];
        dh[i] += dy * trace.c[i];
        let du = dy * h_last[i] * elu_grad(trace.u[i]);
        let deg = kg.in_degree(EntityId(i as u32)) as f64;
        grads.alpha += du * (deg + est.degree_epsilon).ln();
        grads.beta += du;
    }

    // attention layers, last to first
    for l in (0..est.layers).rev() {
        let h_prev = &trace.h_levels[l];
        let mut dh_prev = vec![0.0; n];
        let inv_heads = 1.0 / est.heads as f64;
        for k in 0..est.heads {
            let head = &trace.layers[l].heads[k];
            let a = params.attention[l].row(k).to_owned();
            let mut da = vec![0.0; est.attention_len()];
            for i in 0..n {
                let dhead = dh[i] * inv_heads;
                if dhead == 0.0 {
                    continue;
                }
                let edges = kg.attention_edges(EntityId(i as u32));
                let omega = &head.omegas[i];
                let logits = &head.logits[i];
                // aggregation h_i = sum_e omega_e * h_prev[j_e]
                let mut domega = vec![0.0; edges.len()];
                for (e, edge) in edges.iter().enumerate() {
                    let j = edge.other.idx();
                    domega[e] = dhead * h_prev[j];
                    dh_prev[j] += dhead * omega[e];
                }
                // softmax, leaky rectifier, then the logit's three terms
                let dot: f64 = omega.iter().zip(&domega).map(|(w, d)| w * d).sum();
                for (e, edge) in edges.iter().enumerate() {
                    let de = omega[e] * (domega[e] - dot);
                    let ds = de * leaky_relu_grad(logits[e], est.leaky_slope);
                    if ds == 0.0 {
                        continue;
                    }
                    let j = edge.other.idx();
                    let rho = edge.predicate_row;
                    da[0] += ds * h_prev[i];
                    da[1 + d_p] += ds * h_prev[j];
                    for t in 0..d_p {
                        da[1 + t] += ds * params.pred_emb[[rho, t]];
                        grads.pred_emb[[rho, t]] += ds * a[1 + t];
                    }
                    dh_prev[i] += ds * a[0];
                    dh_prev[j] += ds * a[1 + d_p];
                }
            }
            for (t, v) in da.into_iter().enumerate() {
                grads.attention[l][[k, t]] += v;
            }
        }
        dh = dh_prev;
    }

    // readout backward: h0_i = w_out . x'_i + b_out
    let mut dx_proj = Array2::<f64>::zeros((n, hidden));
    for i in 0..n {
        let d = dh[i];
        if d == 0.0 {
            continue;
        }
        grads.b_out += d;
        for t in 0..hidden {
            grads.w_out[t] += d * trace.x_proj[[i, t]];
            dx_proj[[i, t]] += d * params.w_out[t];
        }
    }

    // sampled edge term, contributing to embeddings and projected features
    if config.nu > 0.0 {
        for m in sample_reg_edges(kg, config, step) {
            let t = kg.triples()[m];
            let (s, rho, o) = (t.subject.idx(), t.predicate.idx(), t.object.idx());
            let r = bilinear_score(&params.pred_emb, &trace.x_proj, s, rho, o) - 1.0;
            loss += 0.5 * config.nu * r * r;
            let coef = config.nu * r;
            for tdim in 0..hidden {
                grads.pred_emb[[rho, tdim]] +=
                    coef * trace.x_proj[[s, tdim]] * trace.x_proj[[o, tdim]];
                dx_proj[[s, tdim]] += coef * params.pred_emb[[rho, tdim]] * trace.x_proj[[o, tdim]];
                dx_proj[[o, tdim]] += coef * params.pred_emb[[rho, tdim]] * trace.x_proj[[s, tdim]];
            }
        }
    }

    // projection backward: x' = X W_g^T + b_g
    grads.w_g = grads.w_g + dx_proj.t().dot(features.matrix());
    grads.b_g = grads.b_g + dx_proj.sum_axis(Axis(0));

    // L2 prior
    loss += 0.5 * config.lambda * l2_norm_sq(params);
    grads.add_scaled(params, config.lambda);

    for (block, ok) in [
        ("projection", grads.w_g.iter().chain(grads.b_g.iter()).all(|v| v.is_finite())),
        ("readout", grads.w_out.iter().all(|v| v.is_finite()) && grads.b_out.is_finite()),
        ("predicate embeddings", grads.pred_emb.iter().all(|v| v.is_finite())),
        (
            "attention",
            grads.attention.iter().all(|a| a.iter().all(|v| v.is_finite())),
        ),
        ("centrality", grads.alpha.is_finite() && grads.beta.is_finite()),
    ] {
        if !ok {
            return Err(Error::NonFinite(format!("gradient of the {block} block")));
        }
    }

    Ok(GradientBundle { loss, grads, z: trace.z })
}

/// Adam moment estimates over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over a flat parameter slice.
pub fn adam_step_flat(
    state: &mut AdamState,
    theta: &mut [f64],
    grads: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
) {
    const EPS: f64 = 1e-8;
    state.t += 1;
    assert_eq!(theta.len(), grads.len(), "gradient layout must match parameters");
    assert_eq!(theta.len(), state.m.len(), "optimizer state must match parameters");
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..theta.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

/// One bias-corrected Adam update in place. L2 regularization lives in the
/// loss, so there is no decoupled weight decay here.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut EstimatorParams,
    grads: &EstimatorParams,
    lr: f64,
    beta1: f64,
    beta2: f64,
) {
    let mut flat = params.flatten();
    let g = grads.flatten();
    adam_step_flat(state, &mut flat, &g, lr, beta1, beta2);
    *params = EstimatorParams::from_flat(params, &flat).expect("layout is unchanged");
}

/// Finite-difference verification policy.
#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Above this many parameters a seeded subsample is checked instead.
    pub max_entries: usize,
    /// Entries whose evaluation passes within this distance of a rectifier
    /// kink are skipped: the difference quotient is invalid there.
    pub kink_tolerance: f64,
    /// Relative tolerance the report will be judged against. Sets the floor
    /// below which a derivative is too small for central differences to
    /// certify at that tolerance in f64; see the skip rule in [`grad_check`].
    pub rel_tolerance: f64,
    pub seed: u64,
    /// Edge-sample step forwarded to the loss, keeping both sides aligned.
    pub reg_step: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_entries: 1000,
            kink_tolerance: 1e-7,
            rel_tolerance: 1e-4,
            seed: 0,
            reg_step: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over
    /// the checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Pre-activation values of everything with a kink or curvature jump at
/// zero: attention logits (LeakyReLU), final products (ReLU), and centrality
/// inputs (ELU, whose second derivative jumps).
fn kink_preacts(trace: &ForwardTrace) -> Vec<f64> {
    let mut preacts = Vec::new();
    for layer in &trace.layers {
        for head in &layer.heads {
            for logits in &head.logits {
                preacts.extend_from_slice(logits);
            }
        }
    }
    preacts.extend_from_slice(&trace.y);
    preacts.extend_from_slice(&trace.u);
    preacts
}

/// A coordinate's difference interval is invalid when it drives any
/// pre-activation across zero, or materially moves one that sits within the
/// tolerance of zero. Static pre-activations never disqualify a coordinate.
fn crosses_kink(plus: &[f64], minus: &[f64], tol: f64) -> bool {
    plus.iter().zip(minus).any(|(&a, &b)| {
        (a > 0.0) != (b > 0.0) || ((a - b).abs() > 1e-12 && a.abs().min(b.abs()) < tol)
    })
}

/// How many loss-value rounding quanta the difference of two evaluations may
/// absorb before the quotient is considered noise rather than signal.
const NOISE_SAFETY: f64 = 8.0;

/// Compares the analytic gradient against central differences entry by entry.
///
/// Two kinds of entries are skipped as unmeasurable rather than counted as
/// mismatches. First, entries whose difference interval straddles or touches
/// a rectifier kink: the quotient is invalid there. Second, entries where
/// both the analytic and the numeric derivative sit below the f64 resolution
/// floor: each loss evaluation is quantized to about eps*|loss|, so the
/// quotient carries noise of eps*|loss|/(2*step), and a derivative smaller
/// than `NOISE_SAFETY` times that noise divided by `rel_tolerance` cannot be
/// certified to `rel_tolerance` no matter how correct the gradient is. The
/// floor applies only when BOTH sides agree the derivative is that small; a
/// large analytic value against a flat numeric one (or the reverse) is still
/// checked and fails, so real gradient bugs are never masked by this rule.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    params: &EstimatorParams,
    est: &EstimatorConfig,
    config: &LossConfig,
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &[&InputSignal],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    assert!(opts.step > 0.0, "finite-difference step must be positive");
    let bundle = gradients(params, est, config, kg, features, signals, opts.reg_step)?;
    let analytic = bundle.grads.flatten();
    let base = params.flatten();

    let coords: Vec<usize> = if base.len() <= opts.max_entries {
        (0..base.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = rand::seq::index::sample(&mut rng, base.len(), opts.max_entries).into_vec();
        picked.sort_unstable();
        picked
    };

    let eval = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = EstimatorParams::from_flat(params, theta)?;
        let parts = loss_parts(&p, est, config, kg, features, signals, opts.reg_step)?;
        let preacts = kink_preacts(&parts.trace);
        Ok((parts.loss, preacts))
    };

    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for &i in &coords {
        let mut plus = base.clone();
        plus[i] += opts.step;
        let mut minus = base.clone();
        minus[i] -= opts.step;
        let (lp, fp_plus) = eval(&plus)?;
        let (lm, fp_minus) = eval(&minus)?;
        if crosses_kink(&fp_plus, &fp_minus, opts.kink_tolerance) {
            skipped += 1;
            continue;
        }
        let a = analytic[i];
        let numeric = (lp - lm) / (2.0 * opts.step);
        let quotient_noise = f64::EPSILON * lp.abs().max(lm.abs()) / (2.0 * opts.step);
        let resolution_floor = NOISE_SAFETY * quotient_noise / opts.rel_tolerance;
        if a.abs() < resolution_floor && numeric.abs() < resolution_floor {
            skipped += 1;
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel_error = max_rel_error.max(rel);
        checked += 1;
    }
    Ok(GradCheckReport {
        max_rel_error,
        checked,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::init_params;
    use crate::kg::load_triples;
    use crate::signals::SignalSet;
    use ndarray::Array2;
    use rand::Rng;
    use std::collections::BTreeMap;
    use std::io::Write;

    struct Instance {
        _dir: tempfile::TempDir,
        kg: KnowledgeGraph,
        features: NodeFeatures,
        signals: SignalSet,
        params: EstimatorParams,
        est: EstimatorConfig,
    }

    fn random_instance(seed: u64, nodes: usize, feature_dim: usize, nu_ready: bool) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let mut content = String::new();
        let preds = ["p0", "p1", "p2"];
        for i in 0..nodes {
            let parents = 1 + rng.gen_range(0..3usize);
            for _ in 0..parents {
                let j = rng.gen_range(0..nodes);
                let p = preds[rng.gen_range(0..preds.len())];
                content.push_str(&format!("n{i}\t{p}\tn{j}\n"));
            }
        }
        std::fs::File::create(&path)
            .unwrap()
            .write_all(content.as_bytes())
            .unwrap();
        let kg = load_triples(&path, None).unwrap();

        let n = kg.entity_count();
        let features = NodeFeatures::new(Array2::from_shape_fn((n, feature_dim), |_| {
            rng.gen_range(-1.0..1.0)
        }))
        .unwrap();

        let est = EstimatorConfig {
            layers: 2,
            heads: 2,
            pred_dim: if nu_ready {
                EstimatorConfig::default().hidden_dim(feature_dim)
            } else {
                4
            },
            ..EstimatorConfig::default()
        };
        let params = init_params(&est, &kg, feature_dim, &mut rng).unwrap();

        let mut signals = SignalSet::default();
        for name in ["s0", "s1"] {
            let mut values = BTreeMap::new();
            for i in 0..n {
                if rng.gen::<f64>() < 0.6 {
                    values.insert(EntityId(i as u32), rng.gen_range(0.0..5.0));
                }
            }
            if values.len() < 2 {
                values.insert(EntityId(0), 1.0);
                values.insert(EntityId(1), 2.0);
            }
            signals.push(InputSignal::new(name, values).unwrap()).unwrap();
        }

        Instance {
            _dir: dir,
            kg,
            features,
            signals,
            params,
            est,
        }
    }

    fn signal_refs(set: &SignalSet) -> Vec<&InputSignal> {
        set.iter().collect()
    }

    #[test]
    fn listwise_loss_on_singleton_is_zero() {
        assert_eq!(listwise_loss(&[3.7], &[9.0]).unwrap(), 0.0);
    }

    #[test]
    fn listwise_loss_at_shifted_target_equals_entropy() {
        // s = [ln 2, 0] gives p = [2/3, 1/3], entropy 0.63651 nats
        let s = [2.0f64.ln(), 0.0];
        let z: Vec<f64> = s.iter().map(|v| v + 0.5).collect();
        let loss = listwise_loss(&z, &s).unwrap();
        let h = entropy(&top_one_probabilities(&s));
        assert!((h - 0.6365141682948129).abs() < 1e-12);
        assert!((loss - h).abs() < 1e-12);
    }

    #[test]
    fn listwise_loss_respects_the_entropy_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..12);
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let loss = listwise_loss(&z, &s).unwrap();
            let h = entropy(&top_one_probabilities(&s));
            assert!(loss >= h - 1e-9, "loss {loss} below entropy {h}");
        }
    }

    #[test]
    fn listwise_loss_is_shift_invariant() {
        let s = [1.0, 0.5, 2.0];
        let z = [0.3, 0.9, -0.4];
        let base = listwise_loss(&z, &s).unwrap();
        let z_shift: Vec<f64> = z.iter().map(|v| v + 7.0).collect();
        let s_shift: Vec<f64> = s.iter().map(|v| v + 3.0).collect();
        assert!((listwise_loss(&z_shift, &s).unwrap() - base).abs() < 1e-9);
        assert!((listwise_loss(&z, &s_shift).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn listwise_loss_rejects_mismatched_lengths() {
        assert!(listwise_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kg_reg_loss_matches_hand_computation() {
        let inst = random_instance(5, 4, 4, true);
        let hidden = inst.est.hidden_dim(4);
        let mut params = inst.params.clone();
        // exact-fit case: unit-basis embeddings score exactly 1, term 0
        let x_proj = Array2::from_elem((inst.kg.entity_count(), hidden), 0.0);
        let mut x_unit = x_proj.clone();
        for i in 0..inst.kg.entity_count() {
            x_unit[[i, 0]] = 1.0;
        }
        params.pred_emb.fill(1.0);
        let config = LossConfig {
            nu: 2.0,
            edge_sample_fraction: 1.0,
            ..LossConfig::default()
        };
        assert_eq!(kg_reg_loss(&params, &inst.kg, &x_unit, &config, 0).unwrap(), 0.0);

        // single hand-set triple: score = sum_t w[t] xs[t] xo[t]
        let t0 = inst.kg.triples()[0];
        let mut x_hand = x_unit.clone();
        for t in 0..hidden {
            x_hand[[t0.subject.idx(), t]] = 0.5 + t as f64;
            x_hand[[t0.object.idx(), t]] = 1.0 - 0.25 * t as f64;
        }
        let one_edge = LossConfig {
            nu: 2.0,
            edge_sample_fraction: 1.0 / inst.kg.triple_count() as f64,
            seed: 9,
            ..LossConfig::default()
        };
        let sampled = sample_reg_edges(&inst.kg, &one_edge, 0);
        assert_eq!(sampled.len(), 1);
        let tm = inst.kg.triples()[sampled[0]];
        let mut score = 0.0;
        for t in 0..hidden {
            score += params.pred_emb[[tm.predicate.idx(), t]]
                * x_hand[[tm.subject.idx(), t]]
                * x_hand[[tm.object.idx(), t]];
        }
        let expected = 0.5 * 2.0 * (score - 1.0) * (score - 1.0);
        let got = kg_reg_loss(&params, &inst.kg, &x_hand, &one_edge, 0).unwrap();
        assert!((got - expected).abs() < 1e-12);

        // nu = 0 disables the term entirely
        let off = LossConfig::default();
        assert_eq!(kg_reg_loss(&params, &inst.kg, &x_hand, &off, 0).unwrap(), 0.0);
    }

    #[test]
    fn edge_samples_are_stable_per_step_and_vary_across_steps() {
        let inst = random_instance(6, 10, 4, false);
        let config = LossConfig {
            nu: 1.0,
            edge_sample_fraction: 0.5,
            seed: 42,
            ..LossConfig::default()
        };
        let a = sample_reg_edges(&inst.kg, &config, 3);
        let b = sample_reg_edges(&inst.kg, &config, 3);
        assert_eq!(a, b);
        let later: Vec<_> = (0..20)
            .map(|step| sample_reg_edges(&inst.kg, &config, step))
            .collect();
        assert!(later.windows(2).any(|w| w[0] != w[1]));
        for s in &later {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&m| m < inst.kg.triple_count()));
        }
    }

    #[test]
    fn total_loss_is_the_sum_of_its_terms() {
        let inst = random_instance(7, 8, 5, true);
        let config = LossConfig {
            lambda: 0.01,
            nu: 0.3,
            edge_sample_fraction: 0.5,
            seed: 5,
        };
        let refs = signal_refs(&inst.signals);
        let total = total_loss(&inst.params, &inst.est, &config, &inst.kg, &inst.features, &refs, 2).unwrap();

        let trace = forward(&inst.params, &inst.est, &inst.kg, &inst.features).unwrap();
        let mut expected = 0.0;
        for signal in &refs {
            let s_vals: Vec<f64> = signal.values().values().copied().collect();
            let z_res: Vec<f64> = signal.domain().map(|id| trace.z[id.idx()]).collect();
            expected += listwise_loss(&z_res, &s_vals).unwrap();
        }
        expected += kg_reg_loss(&inst.params, &inst.kg, &trace.x_proj, &config, 2).unwrap();
        expected += 0.5 * config.lambda * inst.params.flatten().iter().map(|v| v * v).sum::<f64>();
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn l2_only_loss_matches_arithmetic() {
        let inst = random_instance(8, 3, 3, false);
        // scale parameters so the squared norm is exactly 4
        let flat = inst.params.flatten();
        let norm_sq: f64 = flat.iter().map(|v| v * v).sum();
        let scaled: Vec<f64> = flat.iter().map(|v| v * (4.0 / norm_sq).sqrt()).collect();
        let params = EstimatorParams::from_flat(&inst.params, &scaled).unwrap();
        // a singleton signal contributes exactly zero listwise loss
        let mut values = BTreeMap::new();
        values.insert(EntityId(0), 1.0);
        let singleton = InputSignal::new("one", values).unwrap();
        let config = LossConfig {
            lambda: 0.001,
            nu: 0.0,
            ..LossConfig::default()
        };
        let loss = total_loss(&params, &inst.est, &config, &inst.kg, &inst.features, &[&singleton], 0).unwrap();
        assert!((loss - 0.002).abs() < 1e-12);
    }

    #[test]
    fn total_loss_ignores_signal_order() {
        let inst = random_instance(9, 8, 4, false);
        let config = LossConfig::default();
        let refs = signal_refs(&inst.signals);
        let fwd = total_loss(&inst.params, &inst.est, &config, &inst.kg, &inst.features, &refs, 0).unwrap();
        let rev: Vec<&InputSignal> = refs.iter().rev().copied().collect();
        let bwd = total_loss(&inst.params, &inst.est, &config, &inst.kg, &inst.features, &rev, 0).unwrap();
        assert!((fwd - bwd).abs() < 1e-12);
    }

    #[test]
    fn loss_grows_without_bound_along_a_ray() {
        let inst = random_instance(10, 5, 3, false);
        let config = LossConfig {
            lambda: 0.5,
            ..LossConfig::default()
        };
        let refs = signal_refs(&inst.signals);
        let mut last = f64::NEG_INFINITY;
        for scale in [1.0, 10.0, 100.0] {
            let flat: Vec<f64> = inst.params.flatten().iter().map(|v| v * scale).collect();
            let p = EstimatorParams::from_flat(&inst.params, &flat).unwrap();
            let loss = total_loss(&p, &inst.est, &config, &inst.kg, &inst.features, &refs, 0).unwrap();
            assert!(loss > last);
            last = loss;
        }
        assert!(last > 1e3);
    }

    #[test]
    fn doubling_lambda_adds_exactly_the_l2_gradient() {
        let inst = random_instance(11, 6, 4, false);
        let refs = signal_refs(&inst.signals);
        let lo = LossConfig {
            lambda: 0.001,
            ..LossConfig::default()
        };
        let hi = LossConfig {
            lambda: 0.002,
            ..LossConfig::default()
        };
        let g_lo = gradients(&inst.params, &inst.est, &lo, &inst.kg, &inst.features, &refs, 0).unwrap();
        let g_hi = gradients(&inst.params, &inst.est, &hi, &inst.kg, &inst.features, &refs, 0).unwrap();
        let flat_lo = g_lo.grads.flatten();
        let flat_hi = g_hi.grads.flatten();
        let theta = inst.params.flatten();
        for i in 0..theta.len() {
            assert!((flat_hi[i] - flat_lo[i] - 0.001 * theta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_check_is_exact_on_the_quadratic_term() {
        let inst = random_instance(12, 4, 3, false);
        let config = LossConfig {
            lambda: 0.7,
            nu: 0.0,
            ..LossConfig::default()
        };
        // central differences are exact on a quadratic at any step, and the
        // wider step keeps roundoff in the quotient below 1e-9
        let opts = GradCheckOptions {
            step: 1e-3,
            ..GradCheckOptions::default()
        };
        let report = grad_check(
            &inst.params,
            &inst.est,
            &config,
            &inst.kg,
            &inst.features,
            &[],
            &opts,
        )
        .unwrap();
        assert!(report.checked > 0);
        assert!(
            report.max_rel_error < 1e-9,
            "quadratic-only error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn grad_check_passes_on_full_random_instances() {
        for seed in [21, 22, 23] {
            let inst = random_instance(seed, 8, 5, true);
            let config = LossConfig {
                lambda: 0.01,
                nu: 0.4,
                edge_sample_fraction: 0.6,
                seed,
            };
            let refs = signal_refs(&inst.signals);
            let report = grad_check(
                &inst.params,
                &inst.est,
                &config,
                &inst.kg,
                &inst.features,
                &refs,
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.checked > 0, "everything was skipped for seed {seed}");
            assert!(
                report.max_rel_error < 1e-4,
                "seed {seed}: max relative error {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn nu_requires_matching_dimensions() {
        let inst = random_instance(13, 4, 4, false);
        let config = LossConfig {
            nu: 0.1,
            ..LossConfig::default()
        };
        let refs = signal_refs(&inst.signals);
        assert!(matches!(
            total_loss(&inst.params, &inst.est, &config, &inst.kg, &inst.features, &refs, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn adam_fixed_points_and_first_step() {
        let inst = random_instance(14, 3, 3, false);
        let mut params = inst.params.clone();
        let zero = params.zeros_like();
        let mut state = AdamState::new(params.param_count());
        adam_step(&mut state, &mut params, &zero, 0.005, 0.9, 0.999);
        assert_eq!(params.flatten(), inst.params.flatten());

        // lr = 0 leaves parameters untouched even with a live gradient
        let mut g = params.zeros_like();
        g.b_out = 3.0;
        let mut state2 = AdamState::new(params.param_count());
        let before = params.flatten();
        adam_step(&mut state2, &mut params, &g, 0.0, 0.9, 0.999);
        assert_eq!(params.flatten(), before);

        // first step moves each coordinate by about -lr * sign(g)
        let mut params3 = inst.params.clone();
        let mut g3 = params3.zeros_like();
        g3.b_out = -2.5;
        g3.alpha = 0.75;
        let mut state3 = AdamState::new(params3.param_count());
        let before3 = params3.flatten();
        adam_step(&mut state3, &mut params3, &g3, 0.005, 0.9, 0.999);
        let after3 = params3.flatten();
        for i in 0..before3.len() {
            let gflat = g3.flatten()[i];
            let expected = if gflat == 0.0 {
                0.0
            } else {
                -0.005 * gflat.signum()
            };
            assert!(
                (after3[i] - before3[i] - expected).abs() <= 0.005 * 1e-6,
                "coordinate {i}"
            );
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        // one-dimensional f(x) = x^2 driven through the same update rule
        let template = EstimatorParams {
            w_g: Array2::zeros((1, 1)),
            b_g: ndarray::Array1::zeros(1),
            w_out: ndarray::Array1::zeros(1),
            b_out: 1.0,
            pred_emb: Array2::zeros((1, 1)),
            attention: vec![Array2::zeros((1, 3))],
            alpha: 0.0,
            beta: 0.0,
        };
        let mut params = template.clone();
        let mut state = AdamState::new(params.param_count());
        for _ in 0..2000 {
            let mut g = params.zeros_like();
            g.b_out = 2.0 * params.b_out;
            adam_step(&mut state, &mut params, &g, 0.01, 0.9, 0.999);
        }
        assert!(params.b_out.abs() < 1e-3, "got {}", params.b_out);
    }
}

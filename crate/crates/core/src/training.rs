//! Siamese training: pair construction, hand-derived reverse-mode
//! gradients through the encoder, Adam, and the epoch loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::community::{CommunityAssignment, CommunityCache};
use crate::error::{Error, Result};
use crate::graph::{
    as_structure, renormalized_propagation, scale_to_unit_max, NetworkInstance, PropagationMatrix, ViewKind,
};
use crate::linalg::Matrix;
use crate::model::{
    community_preserving_loss_grad, contrastive_loss_grad, Activation, EmbeddingResult, ForwardTrace, LayerWidths,
    LossWeights, Pair, ScpGcnModel,
};
use crate::rng::{derive_seed, derived_rng, stream};

pub type PairBatch = Vec<Pair>;

/// Every unordered pair `(i, j)`, `i < j`, labeled 1 when the classes agree.
pub fn make_pairs(labels: &[u8]) -> Result<PairBatch> {
    if labels.len() < 2 {
        return Err(Error::invalid(format!("{} instances cannot form a pair", labels.len())));
    }
    let mut pairs = Vec::with_capacity(labels.len() * (labels.len() - 1) / 2);
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            pairs.push(Pair { i, j, y: u8::from(labels[i] == labels[j]) });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub communities: usize,
    pub widths: LayerWidths,
    pub activation: Activation,
    pub view_structure: ViewKind,
    pub view_features: ViewKind,
    pub use_siamese: bool,
    pub use_cp: bool,
    /// Rescale each structure view so its largest weight is 1.
    pub normalize_structure: bool,
    pub seed: u64,
    /// Seed for per-instance spectral clustering; kept apart from `seed` so
    /// clusterings are shared across repeats.
    pub cluster_seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 0.01,
            margin: 0.5,
            learning_rate: 0.01,
            epochs: 200,
            communities: 4,
            widths: LayerWidths::default(),
            activation: Activation::Relu,
            view_structure: ViewKind::Structural,
            view_features: ViewKind::Functional,
            use_siamese: true,
            use_cp: true,
            normalize_structure: false,
            seed: 0,
            cluster_seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::invalid("margin must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.communities == 0 {
            return Err(Error::invalid("community count must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be non-negative"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        Ok(())
    }

    /// Loss weights with the community term zeroed when `use_cp` is off.
    pub fn loss_weights(&self) -> LossWeights {
        let (alpha, beta) = if self.use_cp { (self.alpha, self.beta) } else { (0.0, 0.0) };
        LossWeights { alpha, beta, margin: self.margin }
    }
}

/// An instance ready for the encoder: propagation operator, `P·X`, and
/// (when the community term is active) its structural communities.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub propagation: PropagationMatrix,
    pub propagated_features: Matrix,
    pub assignment: Option<CommunityAssignment>,
    pub label: u8,
}

/// The matrix that defines graph structure under `config`.
pub fn structure_view(instance: &NetworkInstance, config: &TrainConfig) -> Matrix {
    let s = as_structure(instance.view(config.view_structure), config.view_structure);
    if config.normalize_structure {
        scale_to_unit_max(&s)
    } else {
        s
    }
}

pub fn prepare_instance(
    instance: &NetworkInstance,
    config: &TrainConfig,
    cache: &mut CommunityCache,
) -> Result<PreparedInstance> {
    let structure = structure_view(instance, config);
    let propagation = renormalized_propagation(&structure)?;
    let propagated_features = propagation.matrix().matmul(instance.view(config.view_features))?;
    let assignment = if config.loss_weights().uses_communities() {
        Some(cache.get_or_compute(instance.id(), &structure, config.communities, config.cluster_seed)?.clone())
    } else {
        None
    };
    Ok(PreparedInstance { propagation, propagated_features, assignment, label: instance.label() })
}

/// One gradient buffer per model parameter tensor, in
/// [`ScpGcnModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub tensors: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &ScpGcnModel) -> Self {
        GradientSet { tensors: model.parameters().iter().map(|p| vec![0.0; p.len()]).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Loss of one optimization step, split into its terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Contrastive term, or binary cross entropy in single-branch mode.
    pub supervised: f64,
    pub community: f64,
}

const THETA0: usize = 0;
const THETA1: usize = 1;
const FC_W: usize = 2;
const FC_B: usize = 3;
const HEAD_W: usize = 4;
const HEAD_B: usize = 5;

fn accumulate(dst: &mut [f64], src: &Matrix) {
    for (d, s) in dst.iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}

/// Backpropagates `∂L/∂Z` through one encoder branch into `grads`.
fn backward(
    model: &ScpGcnModel,
    prep: &PreparedInstance,
    trace: &ForwardTrace,
    dz: &Matrix,
    grads: &mut GradientSet,
) -> Result<()> {
    let act = model.activation();
    accumulate(&mut grads.tensors[FC_W], &trace.h2.transpose_matmul(dz)?);
    for i in 0..dz.rows() {
        for (b, v) in grads.tensors[FC_B].iter_mut().zip(dz.row(i)) {
            *b += v;
        }
    }
    let mut da2 = dz.matmul_transpose(model.fc_weights())?;
    for (d, &h) in da2.as_mut_slice().iter_mut().zip(trace.h2.as_slice()) {
        *d *= act.derivative_from_output(h);
    }
    accumulate(&mut grads.tensors[THETA1], &trace.ph1.transpose_matmul(&da2)?);
    let dph1 = da2.matmul_transpose(model.theta1())?;
    let mut da1 = prep.propagation.matrix().transpose_matmul(&dph1)?;
    for (d, &h) in da1.as_mut_slice().iter_mut().zip(trace.h1.as_slice()) {
        *d *= act.derivative_from_output(h);
    }
    accumulate(&mut grads.tensors[THETA0], &prep.propagated_features.transpose_matmul(&da1)?);
    Ok(())
}

fn community_term(
    prep: &PreparedInstance,
    index: usize,
    z: &Matrix,
    weights: LossWeights,
) -> Result<(f64, Option<Matrix>)> {
    if !weights.uses_communities() {
        return Ok((0.0, None));
    }
    let a = prep.assignment.as_ref().ok_or(Error::MissingAssignment(index))?;
    let (l, g) = community_preserving_loss_grad(z, a, weights.alpha, weights.beta)?;
    Ok((l, Some(g)))
}

fn add_into(dst: &mut Matrix, src: Option<Matrix>) {
    if let Some(src) = src {
        for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
            *d += s;
        }
    }
}

fn check_loss(b: LossBreakdown) -> Result<LossBreakdown> {
    if !b.supervised.is_finite() {
        return Err(Error::NonFiniteLoss("supervised"));
    }
    if !b.community.is_finite() {
        return Err(Error::NonFiniteLoss("community-preserving"));
    }
    if !b.total.is_finite() {
        return Err(Error::NonFiniteLoss("total"));
    }
    Ok(b)
}

/// Total loss of one pair (contrastive plus each instance's community term)
/// and its gradient. Both branches share parameters, so their gradients
/// are summed.
pub fn loss_gradients(
    pair: Pair,
    instances: &[PreparedInstance],
    model: &ScpGcnModel,
    weights: LossWeights,
) -> Result<(LossBreakdown, GradientSet)> {
    let get = |k: usize| instances.get(k).ok_or_else(|| Error::invalid(format!("no instance {k}")));
    let (pi, pj) = (get(pair.i)?, get(pair.j)?);
    let ti = model.forward_trace(&pi.propagation, &pi.propagated_features)?;
    let tj = model.forward_trace(&pj.propagation, &pj.propagated_features)?;

    let (supervised, dg) = contrastive_loss_grad(ti.z.as_slice(), tj.z.as_slice(), pair.same_class(), weights.margin)?;
    let (cp_i, dcp_i) = community_term(pi, pair.i, &ti.z, weights)?;
    let (cp_j, dcp_j) = community_term(pj, pair.j, &tj.z, weights)?;
    let breakdown = check_loss(LossBreakdown { total: supervised + cp_i + cp_j, supervised, community: cp_i + cp_j })?;

    let (n, d) = ti.z.shape();
    let mut dzi = Matrix::from_vec(n, d, dg.clone())?;
    let mut dzj = Matrix::from_vec(tj.z.rows(), tj.z.cols(), dg.iter().map(|v| -v).collect())?;
    add_into(&mut dzi, dcp_i);
    add_into(&mut dzj, dcp_j);

    let mut grads = GradientSet::zeros_like(model);
    backward(model, pi, &ti, &dzi, &mut grads)?;
    backward(model, pj, &tj, &dzj, &mut grads)?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    Ok((breakdown, grads))
}

/// Numerically stable `log(1 + eˣ)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Single-branch step: binary cross entropy of the model's sigmoid head on
/// `g`, plus the instance's community term.
pub fn supervised_gradients(
    index: usize,
    instances: &[PreparedInstance],
    model: &ScpGcnModel,
    weights: LossWeights,
) -> Result<(LossBreakdown, GradientSet)> {
    let prep = instances.get(index).ok_or_else(|| Error::invalid(format!("no instance {index}")))?;
    let head = model.head().ok_or_else(|| Error::invalid("single-branch training needs a classifier head"))?;
    let trace = model.forward_trace(&prep.propagation, &prep.propagated_features)?;
    let g = trace.z.as_slice();
    if head.weights.len() != g.len() {
        return Err(Error::dim(format!("head expects {} inputs, embedding has {}", head.weights.len(), g.len())));
    }
    let logit = head.logit(g);
    let y = f64::from(prep.label);
    let bce = softplus(logit) - y * logit;
    let dlogit = sigmoid(logit) - y;
    let (cp, dcp) = community_term(prep, index, &trace.z, weights)?;
    let breakdown = check_loss(LossBreakdown { total: bce + cp, supervised: bce, community: cp })?;

    let mut grads = GradientSet::zeros_like(model);
    grads.tensors[HEAD_W].iter_mut().zip(g).for_each(|(d, v)| *d = dlogit * v);
    grads.tensors[HEAD_B][0] = dlogit;
    let mut dz = Matrix::from_vec(trace.z.rows(), trace.z.cols(), head.weights.iter().map(|w| dlogit * w).collect())?;
    add_into(&mut dz, dcp);
    backward(model, prep, &trace, &dz, &mut grads)?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    Ok((breakdown, grads))
}

/// First and second moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        AdamMoments { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamMoments,
    lr: f64,
    adam: AdamConfig,
    t: u64,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::dim(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if t == 0 {
        return Err(Error::invalid("adam step counter starts at 1"));
    }
    let AdamConfig { beta1, beta2, epsilon } = adam;
    let c1 = 1.0 - libm::pow(beta1, t as f64);
    let c2 = 1.0 - libm::pow(beta2, t as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
    }
    Ok(())
}

/// Adam over every parameter tensor of a model.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    lr: f64,
    moments: Vec<AdamMoments>,
    t: u64,
}

impl Adam {
    pub fn new(model: &ScpGcnModel, lr: f64, config: AdamConfig) -> Self {
        let moments = model.parameters().iter().map(|p| AdamMoments::zeros(p.len())).collect();
        Adam { config, lr, moments, t: 0 }
    }

    pub fn step(&mut self, model: &mut ScpGcnModel, grads: &GradientSet) -> Result<()> {
        let mut params = model.parameters_mut();
        if params.len() != grads.tensors.len() {
            return Err(Error::dim("gradient set does not match the model's parameter list"));
        }
        self.t += 1;
        for ((p, g), s) in params.iter_mut().zip(&grads.tensors).zip(&mut self.moments) {
            adam_step(p, g, s, self.lr, self.config, self.t)?;
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_contrastive: f64,
    pub mean_cp: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ScpGcnModel,
    pub history: Vec<EpochRecord>,
}

/// Trains on every instance of `dataset` (callers pass the training split).
pub fn train(dataset: &[NetworkInstance], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_cache(dataset, config, &mut CommunityCache::new())
}

pub fn train_with_cache(
    dataset: &[NetworkInstance],
    config: &TrainConfig,
    cache: &mut CommunityCache,
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = dataset.first().ok_or_else(|| Error::invalid("empty training set"))?;
    let n = first.node_count();
    if let Some(bad) = dataset.iter().find(|x| x.node_count() != n) {
        return Err(Error::dim(format!("{} has {} nodes, expected {n}", bad.id(), bad.node_count())));
    }
    let prepared = dataset.iter().map(|x| prepare_instance(x, config, cache)).collect::<Result<Vec<_>>>()?;
    let weights = config.loss_weights();

    let mut init_rng = derived_rng(config.seed, stream::INIT, 0);
    let mut model = ScpGcnModel::init(n, config.widths, config.activation, &mut init_rng)?;
    let mut steps: Vec<Pair> = if config.use_siamese {
        make_pairs(&crate::graph::labels(dataset))?
    } else {
        model.attach_head(n, &mut init_rng);
        // Single-branch steps reuse `Pair` with `i` as the instance.
        (0..dataset.len()).map(|i| Pair { i, j: i, y: dataset[i].label() }).collect()
    };
    let mut adam = Adam::new(&model, config.learning_rate, config.adam);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = derived_rng(config.seed, stream::SHUFFLE, epoch as u64);
        steps.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for &step in &steps {
            let (loss, grads) = if config.use_siamese {
                loss_gradients(step, &prepared, &model, weights)?
            } else {
                supervised_gradients(step.i, &prepared, &model, weights)?
            };
            adam.step(&mut model, &grads)?;
            if !model.all_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {}", epoch + 1)));
            }
            sum.total += loss.total;
            sum.supervised += loss.supervised;
            sum.community += loss.community;
        }
        let k = steps.len() as f64;
        let record = EpochRecord {
            epoch: epoch + 1,
            mean_loss: sum.total / k,
            mean_contrastive: sum.supervised / k,
            mean_cp: sum.community / k,
        };
        log::debug!("epoch {} mean loss {:.6}", record.epoch, record.mean_loss);
        history.push(record);
    }
    Ok(TrainOutcome { model, history })
}

/// Graph embeddings of `instances` under the views `config` selects.
pub fn embed_instances(
    model: &ScpGcnModel,
    instances: &[NetworkInstance],
    config: &TrainConfig,
) -> Result<Vec<EmbeddingResult>> {
    instances
        .iter()
        .map(|x| {
            let structure = structure_view(x, config);
            let p = renormalized_propagation(&structure)?;
            crate::model::gcn_forward(&p, x.view(config.view_features), model)
        })
        .collect()
}

/// Seed of repeat `r` under a master seed, used by the evaluation harness.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, stream::REPEAT, r as u64)
}

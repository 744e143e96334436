//! The SCP-GCN encoder and its losses.
//!
//! The encoder runs two graph convolutions `H ← σ(P·H·Θ)` starting from
//! the functional adjacency as node features, then a dense layer shared by
//! all nodes (`Z = H²·W + b`, no activation). The graph embedding `g` is the
//! row-major flattening of `Z`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::community::{community_centers, CommunityAssignment};
use crate::error::{Error, Result};
use crate::graph::PropagationMatrix;
use crate::linalg::{squared_distance, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
        }
    }

    /// Derivative expressed through the activation output `y = σ(x)`.
    /// ReLU's derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

/// Output widths of the two convolutions and the dense embedding layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWidths {
    pub hidden1: usize,
    pub hidden2: usize,
    pub embedding: usize,
}

impl Default for LayerWidths {
    fn default() -> Self {
        LayerWidths { hidden1: 256, hidden2: 128, embedding: 64 }
    }
}

/// Sigmoid unit on the graph embedding, trained jointly with the encoder
/// when the Siamese objective is switched off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ClassifierHead {
    pub fn logit(&self, g: &[f64]) -> f64 {
        crate::linalg::dot(&self.weights, g) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct ScpGcnModel {
    theta0: Matrix,
    theta1: Matrix,
    fc_weights: Matrix,
    fc_bias: Vec<f64>,
    activation: Activation,
    head: Option<ClassifierHead>,
}

/// Multiplier on the Glorot-uniform limit. At full Glorot scale the initial
/// graph-embedding distances sit several times beyond the default margin, so
/// early training only pulls same-class pairs together; with lr 0.01 that
/// phase drove every ReLU dead (all embeddings equal) in roughly one run in
/// five. Halving each layer's scale starts distances near the margin.
pub const INIT_GAIN: f64 = 0.5;

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = INIT_GAIN * libm::sqrt(6.0 / (rows + cols) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

impl ScpGcnModel {
    /// Glorot-uniform weights scaled by [`INIT_GAIN`], zero biases.
    pub fn init(input_dim: usize, widths: LayerWidths, activation: Activation, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || widths.hidden1 == 0 || widths.hidden2 == 0 || widths.embedding == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let theta0 = glorot(input_dim, widths.hidden1, rng);
        let theta1 = glorot(widths.hidden1, widths.hidden2, rng);
        let fc_weights = glorot(widths.hidden2, widths.embedding, rng);
        Ok(ScpGcnModel { theta0, theta1, fc_weights, fc_bias: vec![0.0; widths.embedding], activation, head: None })
    }

    pub fn from_parts(
        theta0: Matrix,
        theta1: Matrix,
        fc_weights: Matrix,
        fc_bias: Vec<f64>,
        activation: Activation,
        head: Option<ClassifierHead>,
    ) -> Result<Self> {
        let model = ScpGcnModel { theta0, theta1, fc_weights, fc_bias, activation, head };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.theta0.cols() != self.theta1.rows() || self.theta1.cols() != self.fc_weights.rows() {
            return Err(Error::dim(format!(
                "inconsistent layer shapes {:?} / {:?} / {:?}",
                self.theta0.shape(),
                self.theta1.shape(),
                self.fc_weights.shape()
            )));
        }
        if self.fc_bias.len() != self.fc_weights.cols() {
            return Err(Error::dim("dense bias length differs from embedding width"));
        }
        for (name, m) in [("theta0", &self.theta0), ("theta1", &self.theta1), ("fc_weights", &self.fc_weights)] {
            m.check_finite(name)?;
        }
        let head_ok = self.head.as_ref().is_none_or(|h| h.bias.is_finite() && h.weights.iter().all(|v| v.is_finite()));
        if !head_ok || !self.fc_bias.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Attaches a sigmoid head over embeddings of `nodes`-node graphs.
    pub fn attach_head(&mut self, nodes: usize, rng: &mut Rng) {
        let len = nodes * self.embedding_dim();
        let limit = libm::sqrt(6.0 / (len + 1) as f64);
        let weights = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
        self.head = Some(ClassifierHead { weights, bias: 0.0 });
    }

    pub fn input_dim(&self) -> usize {
        self.theta0.rows()
    }

    pub fn widths(&self) -> LayerWidths {
        LayerWidths { hidden1: self.theta0.cols(), hidden2: self.theta1.cols(), embedding: self.fc_weights.cols() }
    }

    pub fn embedding_dim(&self) -> usize {
        self.fc_weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn theta0(&self) -> &Matrix {
        &self.theta0
    }

    pub fn theta1(&self) -> &Matrix {
        &self.theta1
    }

    pub fn fc_weights(&self) -> &Matrix {
        &self.fc_weights
    }

    pub fn fc_bias(&self) -> &[f64] {
        &self.fc_bias
    }

    pub fn head(&self) -> Option<&ClassifierHead> {
        self.head.as_ref()
    }

    /// Parameter tensors in a fixed order: Θ⁰, Θ¹, W, b, then the head's
    /// weights and bias when present.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out =
            vec![self.theta0.as_slice(), self.theta1.as_slice(), self.fc_weights.as_slice(), self.fc_bias.as_slice()];
        if let Some(h) = &self.head {
            out.push(&h.weights);
            out.push(core::slice::from_ref(&h.bias));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.theta0.as_mut_slice(),
            self.theta1.as_mut_slice(),
            self.fc_weights.as_mut_slice(),
            self.fc_bias.as_mut_slice(),
        ];
        if let Some(h) = &mut self.head {
            out.push(&mut h.weights);
            out.push(core::slice::from_mut(&mut h.bias));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Forward pass from precomputed `P·X`, keeping every intermediate.
    pub fn forward_trace(&self, propagation: &PropagationMatrix, propagated_features: &Matrix) -> Result<ForwardTrace> {
        let p = propagation.matrix();
        if propagated_features.cols() != self.input_dim() || propagated_features.rows() != p.rows() {
            return Err(Error::dim(format!(
                "features {:?} for a {}-node graph and {}-dim input layer",
                propagated_features.shape(),
                p.rows(),
                self.input_dim()
            )));
        }
        let act = self.activation;
        let h1 = propagated_features.matmul(&self.theta0)?.map(|v| act.apply(v));
        h1.check_finite("convolution layer 1")?;
        let ph1 = p.matmul(&h1)?;
        let h2 = ph1.matmul(&self.theta1)?.map(|v| act.apply(v));
        h2.check_finite("convolution layer 2")?;
        let mut z = h2.matmul(&self.fc_weights)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.fc_bias) {
                *v += b;
            }
        }
        z.check_finite("dense output layer")?;
        Ok(ForwardTrace { h1, ph1, h2, z })
    }

    pub fn embed(&self, propagation: &PropagationMatrix, features: &Matrix) -> Result<EmbeddingResult> {
        gcn_forward(propagation, features, self)
    }
}

/// Activations retained by [`ScpGcnModel::forward_trace`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub h1: Matrix,
    pub ph1: Matrix,
    pub h2: Matrix,
    pub z: Matrix,
}

/// Node embeddings `Z` (n × d) and their row-major concatenation `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub node_embeddings: Matrix,
    pub graph_embedding: Vec<f64>,
}

impl EmbeddingResult {
    pub fn from_nodes(z: Matrix) -> Self {
        let graph_embedding = z.as_slice().to_vec();
        EmbeddingResult { node_embeddings: z, graph_embedding }
    }
}

pub fn gcn_forward(propagation: &PropagationMatrix, features: &Matrix, model: &ScpGcnModel) -> Result<EmbeddingResult> {
    if features.rows() != propagation.size() {
        return Err(Error::dim(format!("{} feature rows for a {}-node graph", features.rows(), propagation.size())));
    }
    let px = propagation.matrix().matmul(features)?;
    let trace = model.forward_trace(propagation, &px)?;
    Ok(EmbeddingResult::from_nodes(trace.z))
}

/// Serialized form of [`ScpGcnModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub input_dim: usize,
    pub widths: [usize; 2],
    pub d: usize,
    pub activation: Activation,
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
    pub fc_weights: Vec<f64>,
    pub fc_bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<ClassifierHead>,
}

impl From<ScpGcnModel> for ModelFile {
    fn from(m: ScpGcnModel) -> Self {
        let w = m.widths();
        ModelFile {
            input_dim: m.input_dim(),
            widths: [w.hidden1, w.hidden2],
            d: w.embedding,
            activation: m.activation,
            theta0: m.theta0.into_vec(),
            theta1: m.theta1.into_vec(),
            fc_weights: m.fc_weights.into_vec(),
            fc_bias: m.fc_bias,
            head: m.head,
        }
    }
}

impl TryFrom<ModelFile> for ScpGcnModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let [h1, h2] = f.widths;
        ScpGcnModel::from_parts(
            Matrix::from_vec(f.input_dim, h1, f.theta0)?,
            Matrix::from_vec(h1, h2, f.theta1)?,
            Matrix::from_vec(h2, f.d, f.fc_weights)?,
            f.fc_bias,
            f.activation,
            f.head,
        )
    }
}

// Losses.

/// Weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
}

impl LossWeights {
    pub fn uses_communities(&self) -> bool {
        self.alpha != 0.0 || self.beta != 0.0
    }
}

/// Contrastive loss `y/2·‖gᵢ−gⱼ‖² + (1−y)/2·max(0, m − ‖gᵢ−gⱼ‖)²`.
pub fn contrastive_loss(gi: &[f64], gj: &[f64], same_class: bool, margin: f64) -> Result<f64> {
    contrastive_loss_grad(gi, gj, same_class, margin).map(|(l, _)| l)
}

/// Loss and its gradient with respect to `gᵢ` (the gradient for `gⱼ` is
/// the negation). For a different-class pair at zero distance the hinge
/// gradient is defined as 0.
pub fn contrastive_loss_grad(gi: &[f64], gj: &[f64], same_class: bool, margin: f64) -> Result<(f64, Vec<f64>)> {
    if gi.len() != gj.len() {
        return Err(Error::dim(format!("graph embeddings of length {} and {}", gi.len(), gj.len())));
    }
    if !(margin > 0.0) {
        return Err(Error::invalid(format!("margin must be positive, got {margin}")));
    }
    let diff: Vec<f64> = gi.iter().zip(gj).map(|(a, b)| a - b).collect();
    let sq: f64 = diff.iter().map(|v| v * v).sum();
    if same_class {
        return Ok((0.5 * sq, diff));
    }
    let dist = libm::sqrt(sq);
    let gap = margin - dist;
    if gap <= 0.0 {
        return Ok((0.0, vec![0.0; diff.len()]));
    }
    let grad = if dist > 0.0 {
        let k = -gap / dist;
        diff.iter().map(|v| k * v).collect()
    } else {
        vec![0.0; diff.len()]
    };
    Ok((0.5 * gap * gap, grad))
}

/// `α·Σ_c (1/|S_c|)·Σ_{i∈S_c} ‖zᵢ−ẑ_c‖² − β·Σ_{c<c'} ‖ẑ_c−ẑ_c'‖²`.
pub fn community_preserving_loss(z: &Matrix, assignment: &CommunityAssignment, alpha: f64, beta: f64) -> Result<f64> {
    community_preserving_loss_grad(z, assignment, alpha, beta).map(|(l, _)| l)
}

/// Loss and `∂L/∂Z`.
pub fn community_preserving_loss_grad(
    z: &Matrix,
    assignment: &CommunityAssignment,
    alpha: f64,
    beta: f64,
) -> Result<(f64, Matrix)> {
    let centers = community_centers(z, assignment)?;
    let count = assignment.community_count();
    let mut grad = Matrix::zeros(z.rows(), z.cols());

    let mut intra = 0.0;
    for (c, members) in assignment.sets().iter().enumerate() {
        let inv = 1.0 / members.len() as f64;
        for &i in members {
            intra += inv * squared_distance(z.row(i), centers.row(c));
            for ((g, &zi), &zc) in grad.row_mut(i).iter_mut().zip(z.row(i)).zip(centers.row(c)) {
                *g += alpha * 2.0 * inv * (zi - zc);
            }
        }
    }

    let mut inter = 0.0;
    for c in 0..count {
        for c2 in (c + 1)..count {
            inter += squared_distance(centers.row(c), centers.row(c2));
        }
    }
    if beta != 0.0 && count > 1 {
        // ∂/∂ẑ_c of the pair sum is 2·Σ_{c'≠c}(ẑ_c − ẑ_c'); spread over S_c.
        let dim = z.cols();
        let mut total = vec![0.0; dim];
        for c in 0..count {
            for (t, &v) in total.iter_mut().zip(centers.row(c)) {
                *t += v;
            }
        }
        for (c, members) in assignment.sets().iter().enumerate() {
            let scale = -beta * 2.0 / members.len() as f64;
            let dc: Vec<f64> = (0..dim).map(|k| count as f64 * centers[(c, k)] - total[k]).collect();
            for &i in members {
                for (g, d) in grad.row_mut(i).iter_mut().zip(&dc) {
                    *g += scale * d;
                }
            }
        }
    }

    Ok((alpha * intra - beta * inter, grad))
}

/// One training pair: instance indices and whether they share a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub y: u8,
}

impl Pair {
    pub fn same_class(&self) -> bool {
        self.y == 1
    }
}

/// Sum of contrastive terms over `pairs`, plus one community-preserving
/// term per distinct instance appearing in the batch.
///
/// `embeddings` and `assignments` are indexed by instance. Assignments are
/// only consulted when `α` or `β` is non-zero.
pub fn total_loss(
    pairs: &[Pair],
    embeddings: &[EmbeddingResult],
    assignments: &[Option<CommunityAssignment>],
    weights: LossWeights,
) -> Result<f64> {
    let fetch = |i: usize| embeddings.get(i).ok_or_else(|| Error::invalid(format!("no embedding for instance {i}")));
    let mut loss = 0.0;
    let mut seen = alloc::collections::BTreeSet::new();
    for p in pairs {
        let (ei, ej) = (fetch(p.i)?, fetch(p.j)?);
        loss += contrastive_loss(&ei.graph_embedding, &ej.graph_embedding, p.same_class(), weights.margin)?;
        seen.insert(p.i);
        seen.insert(p.j);
    }
    if weights.uses_communities() {
        for i in seen {
            let a = assignments.get(i).and_then(Option::as_ref).ok_or(Error::MissingAssignment(i))?;
            loss += community_preserving_loss(&fetch(i)?.node_embeddings, a, weights.alpha, weights.beta)?;
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::renormalized_propagation;
    use crate::rng::rng_from;

    fn identity_model(n: usize) -> ScpGcnModel {
        ScpGcnModel::from_parts(
            Matrix::identity(n),
            Matrix::identity(n),
            Matrix::identity(n),
            vec![0.0; n],
            Activation::Relu,
            None,
        )
        .unwrap()
    }

    #[test]
    fn identity_pipeline_returns_identity() {
        let p = PropagationMatrix::from_matrix_unchecked(Matrix::identity(4)).unwrap();
        let out = gcn_forward(&p, &Matrix::identity(4), &identity_model(4)).unwrap();
        assert_eq!(out.node_embeddings, Matrix::identity(4));
        assert_eq!(out.graph_embedding.len(), 16);
    }

    #[test]
    fn default_widths_give_expected_shapes() {
        let mut rng = rng_from(1);
        let model = ScpGcnModel::init(90, LayerWidths::default(), Activation::Relu, &mut rng).unwrap();
        let mut a = Matrix::zeros(90, 90);
        for i in 0..89 {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
        let p = renormalized_propagation(&a).unwrap();
        let x = Matrix::from_fn(90, 90, |i, j| if i == j { 1.0 } else { 0.2 });
        let out = gcn_forward(&p, &x, &model).unwrap();
        assert_eq!(out.node_embeddings.shape(), (90, 64));
        assert_eq!(out.graph_embedding.len(), 5760);
    }

    #[test]
    fn forward_matches_step_by_step_products() {
        let mut rng = rng_from(2);
        let widths = LayerWidths { hidden1: 5, hidden2: 4, embedding: 3 };
        let mut model = ScpGcnModel::init(6, widths, Activation::Relu, &mut rng).unwrap();
        model.fc_bias = vec![0.1, -0.2, 0.3];
        let p = Matrix::from_fn(6, 6, |_, _| rng.random_range(-0.5..0.5));
        let p = PropagationMatrix::from_matrix_unchecked(p.symmetrized().unwrap()).unwrap();
        let x = Matrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));

        let naive = |a: &Matrix, b: &Matrix| {
            Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
        };
        let relu = |m: Matrix| m.map(|v| if v > 0.0 { v } else { 0.0 });
        let h1 = relu(naive(&naive(p.matrix(), &x), &model.theta0));
        let h2 = relu(naive(&naive(p.matrix(), &h1), &model.theta1));
        let mut z = naive(&h2, &model.fc_weights);
        for i in 0..6 {
            for k in 0..3 {
                z[(i, k)] += model.fc_bias[k];
            }
        }
        let out = gcn_forward(&p, &x, &model).unwrap();
        assert!(out.node_embeddings.sub(&z).unwrap().max_abs() < 1e-12);
        assert_eq!(out.graph_embedding, out.node_embeddings.as_slice());
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let p = PropagationMatrix::from_matrix_unchecked(Matrix::identity(4)).unwrap();
        assert!(gcn_forward(&p, &Matrix::identity(3), &identity_model(4)).is_err());
        assert!(gcn_forward(&p, &Matrix::zeros(4, 5), &identity_model(4)).is_err());
    }

    #[test]
    fn forward_names_non_finite_layer() {
        let big = Matrix::from_fn(2, 2, |_, _| 1e200);
        let model =
            ScpGcnModel::from_parts(big.clone(), big.clone(), big, vec![0.0; 2], Activation::Relu, None).unwrap();
        let p = PropagationMatrix::from_matrix_unchecked(Matrix::identity(2)).unwrap();
        let x = Matrix::from_fn(2, 2, |_, _| 1e200);
        match gcn_forward(&p, &x, &model) {
            Err(Error::NonFinite(layer)) => assert!(layer.contains("layer 1"), "{layer}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contrastive_cases() {
        let g = [0.3, -1.0, 2.0];
        assert_eq!(contrastive_loss(&g, &g, true, 0.5).unwrap(), 0.0);
        assert_eq!(contrastive_loss(&g, &g, false, 0.5).unwrap(), 0.125);
        assert_eq!(contrastive_loss(&[0.0, 0.0], &[0.6, 0.8], false, 0.5).unwrap(), 0.0);
        assert_eq!(contrastive_loss(&[0.0, 0.0], &[0.6, 0.8], true, 0.5).unwrap(), 0.5);
        assert!(contrastive_loss(&[0.0], &[0.0, 1.0], true, 0.5).is_err());
        assert!(contrastive_loss(&[0.0], &[0.0], true, 0.0).is_err());
    }

    #[test]
    fn cp_loss_cases() {
        let a = CommunityAssignment::from_membership(vec![0, 0, 1, 1], 2).unwrap();
        let same = Matrix::from_fn(4, 3, |_, j| j as f64);
        assert_eq!(community_preserving_loss(&same, &a, 1.3, 0.7).unwrap(), 0.0);

        // C = 1: α times the mean squared distance to the single center.
        let one = CommunityAssignment::single(2).unwrap();
        let z = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(community_preserving_loss(&z, &one, 2.0, 5.0).unwrap(), 2.0 * (1.0 + 1.0) / 2.0);

        let split = CommunityAssignment::from_membership(vec![0, 1], 2).unwrap();
        assert_eq!(community_preserving_loss(&z, &split, 1.0, 1.0).unwrap(), -4.0);
        assert!(community_preserving_loss(&Matrix::zeros(3, 1), &split, 1.0, 1.0).is_err());
    }

    #[test]
    fn total_loss_composition() {
        let mut rng = rng_from(9);
        let emb: Vec<EmbeddingResult> = (0..4)
            .map(|_| EmbeddingResult::from_nodes(Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0))))
            .collect();
        let assign: Vec<Option<CommunityAssignment>> =
            (0..4).map(|k| Some(CommunityAssignment::from_membership(vec![0, (k % 2), 1], 2).unwrap())).collect();
        let pairs = [Pair { i: 0, j: 1, y: 1 }, Pair { i: 2, j: 1, y: 0 }];
        let w = LossWeights { alpha: 0.3, beta: 0.2, margin: 0.5 };
        let got = total_loss(&pairs, &emb, &assign, w).unwrap();
        let mut expect = contrastive_loss(&emb[0].graph_embedding, &emb[1].graph_embedding, true, 0.5).unwrap()
            + contrastive_loss(&emb[2].graph_embedding, &emb[1].graph_embedding, false, 0.5).unwrap();
        // Instance 1 appears twice but contributes one community term.
        for i in 0..3 {
            expect +=
                community_preserving_loss(&emb[i].node_embeddings, assign[i].as_ref().unwrap(), 0.3, 0.2).unwrap();
        }
        assert!((got - expect).abs() < 1e-12);

        let no_cp = LossWeights { alpha: 0.0, beta: 0.0, margin: 0.5 };
        let contrastive_only = total_loss(&pairs, &emb, &[], no_cp).unwrap();
        let sum = contrastive_loss(&emb[0].graph_embedding, &emb[1].graph_embedding, true, 0.5).unwrap()
            + contrastive_loss(&emb[2].graph_embedding, &emb[1].graph_embedding, false, 0.5).unwrap();
        assert_eq!(contrastive_only, sum);

        let missing = [Some(assign[0].clone().unwrap()), None];
        assert!(matches!(total_loss(&pairs[..1], &emb, &missing, w), Err(Error::MissingAssignment(1))));
    }

    #[test]
    fn total_loss_vanishes_for_collapsed_same_class_pair() {
        let z = Matrix::from_fn(4, 2, |_, j| j as f64 + 0.5);
        let emb = [EmbeddingResult::from_nodes(z.clone()), EmbeddingResult::from_nodes(z)];
        let a = CommunityAssignment::from_membership(vec![0, 1, 0, 1], 2).unwrap();
        let w = LossWeights { alpha: 1.0, beta: 1.0, margin: 0.5 };
        let l = total_loss(&[Pair { i: 0, j: 1, y: 1 }], &emb, &[Some(a.clone()), Some(a)], w).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn cp_gradient_matches_finite_differences() {
        let mut rng = rng_from(13);
        let z = Matrix::from_fn(7, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = CommunityAssignment::from_membership(vec![0, 1, 2, 0, 1, 2, 2], 3).unwrap();
        let (_, g) = community_preserving_loss_grad(&z, &a, 0.7, 0.4).unwrap();
        let h = 1e-6;
        for i in 0..7 {
            for k in 0..3 {
                let mut zp = z.clone();
                zp[(i, k)] += h;
                let mut zm = z.clone();
                zm[(i, k)] -= h;
                let fd = (community_preserving_loss(&zp, &a, 0.7, 0.4).unwrap()
                    - community_preserving_loss(&zm, &a, 0.7, 0.4).unwrap())
                    / (2.0 * h);
                assert!((fd - g[(i, k)]).abs() < 1e-7, "{fd} vs {}", g[(i, k)]);
            }
        }
    }

    #[test]
    fn model_file_round_trip_validates_shapes() {
        let mut rng = rng_from(4);
        let widths = LayerWidths { hidden1: 3, hidden2: 2, embedding: 2 };
        let mut model = ScpGcnModel::init(4, widths, Activation::Tanh, &mut rng).unwrap();
        model.attach_head(4, &mut rng);
        let file: ModelFile = model.clone().into();
        assert_eq!(ScpGcnModel::try_from(file.clone()).unwrap(), model);
        let mut broken = file;
        broken.theta1.pop();
        assert!(ScpGcnModel::try_from(broken).is_err());
    }
}

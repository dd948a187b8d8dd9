//! Graph-convolution + dense network with manual backpropagation.
//!
//! Graph convolution rule: h'_v = act(W_self·h_v + W_neigh·Σ_{u∈N(v)} h_u + b)
//! with plain neighbor sums (no degree normalization). Atom rows are pooled
//! by mean or sum readout, then fed through the dense stack; binary
//! classification applies a sigmoid on top of the final (linear) unit.

mod train;

pub use train::{gradients, train, Gradients, LayerGrads};

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::molgraph::{atom_feature_matrix, FeatureError, MolecularGraph};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("layer stack invalid: {0}")]
    LayerOrder(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("classification target for example {index} is {value}, expected 0 or 1")]
    BadTarget { index: usize, value: f64 },
    #[error("training diverged at epoch {epoch}: loss or weights became non-finite")]
    Divergence { epoch: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("bad training configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation input.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    GraphConv,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvLayer {
    pub w_self: Matrix,
    pub w_neigh: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    GraphConv(GraphConvLayer),
    Dense(DenseLayer),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::GraphConv(_) => LayerKind::GraphConv,
            Layer::Dense(_) => LayerKind::Dense,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::GraphConv(l) => l.w_self.rows(),
            Layer::Dense(l) => l.w.rows(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::GraphConv(l) => l.w_self.cols(),
            Layer::Dense(l) => l.w.cols(),
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::GraphConv(l) => l.activation,
            Layer::Dense(l) => l.activation,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: self.kind(),
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            activation: self.activation(),
        }
    }

    /// All parameters as mutable slices, weights before bias.
    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::GraphConv(l) => vec![
                l.w_self.data_mut(),
                l.w_neigh.data_mut(),
                l.b.as_mut_slice(),
            ],
            Layer::Dense(l) => vec![l.w.data_mut(), l.b.as_mut_slice()],
        }
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::GraphConv(l) => vec![l.w_self.data(), l.w_neigh.data(), l.b.as_slice()],
            Layer::Dense(l) => vec![l.w.data(), l.b.as_slice()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnnModel {
    pub layers: Vec<Layer>,
    pub task: Task,
    pub readout: Readout,
    pub rng_seed: u64,
    /// Layer indices whose parameters the optimizer must not touch; recorded
    /// by the transfer machinery and honored by training.
    pub frozen_layers: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub frozen_layers: BTreeSet<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.005,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            frozen_layers: BTreeSet::new(),
            seed: 0,
        }
    }
}

/// Validates the layer chain and initializes weights Glorot-uniform from the
/// seed. Graph-conv layers must precede all dense layers; the stack must end
/// in a dense layer of width one (the prediction head).
pub fn build_model(
    specs: &[LayerSpec],
    task: Task,
    readout: Readout,
    seed: u64,
) -> Result<GcnnModel, NetError> {
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .iter()
        .map(|spec| init_layer(spec, &mut rng))
        .collect();
    Ok(GcnnModel {
        layers,
        task,
        readout,
        rng_seed: seed,
        frozen_layers: BTreeSet::new(),
    })
}

pub(crate) fn validate_specs(specs: &[LayerSpec]) -> Result<(), NetError> {
    if specs.is_empty() {
        return Err(NetError::LayerOrder("no layers".into()));
    }
    let mut seen_dense = false;
    for (i, spec) in specs.iter().enumerate() {
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(NetError::ShapeMismatch(format!(
                "layer {i} has zero dimension"
            )));
        }
        match spec.kind {
            LayerKind::Dense => seen_dense = true,
            LayerKind::GraphConv if seen_dense => {
                return Err(NetError::LayerOrder(format!(
                    "graph_conv layer {i} appears after a dense layer"
                )));
            }
            LayerKind::GraphConv => {}
        }
        if i > 0 && specs[i - 1].out_dim != spec.in_dim {
            return Err(NetError::ShapeMismatch(format!(
                "layer {} out_dim {} does not match layer {i} in_dim {}",
                i - 1,
                specs[i - 1].out_dim,
                spec.in_dim
            )));
        }
    }
    let last = specs.last().unwrap();
    if last.kind != LayerKind::Dense || last.out_dim != 1 {
        return Err(NetError::LayerOrder(
            "the stack must end in a dense head of width 1".into(),
        ));
    }
    if last.activation != Activation::Linear {
        return Err(NetError::LayerOrder(
            "the head activation must be linear; tasks add their own link".into(),
        ));
    }
    Ok(())
}

pub(crate) fn init_layer(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Layer {
    let glorot = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Matrix::from_flat(rows, cols, data)
    };
    match spec.kind {
        LayerKind::GraphConv => Layer::GraphConv(GraphConvLayer {
            w_self: glorot(rng, spec.in_dim, spec.out_dim),
            w_neigh: glorot(rng, spec.in_dim, spec.out_dim),
            b: vec![0.0; spec.out_dim],
            activation: spec.activation,
        }),
        LayerKind::Dense => Layer::Dense(DenseLayer {
            w: glorot(rng, spec.in_dim, spec.out_dim),
            b: vec![0.0; spec.out_dim],
            activation: spec.activation,
        }),
    }
}

/// Adjacency as neighbor lists; the graph-conv pass only needs sums.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub features: Matrix,
    pub neighbors: Vec<Vec<usize>>,
}

impl GraphInput {
    pub fn from_molecule(mol: &MolecularGraph) -> Result<Self, NetError> {
        let features = atom_feature_matrix(mol)?;
        let neighbors = (0..mol.atom_count())
            .map(|i| mol.neighbors(i).iter().map(|&(u, _)| u).collect())
            .collect();
        Ok(GraphInput {
            features,
            neighbors,
        })
    }
}

/// Per-layer caches for backpropagation.
pub(crate) struct ForwardTrace {
    /// Input to graph-conv layer i (atoms × in_dim); entry 0 is the feature
    /// matrix itself, plus one final entry with the last conv output.
    pub atom_inputs: Vec<Matrix>,
    /// Neighbor sums per graph-conv layer.
    pub neighbor_sums: Vec<Matrix>,
    /// Pre-activations per graph-conv layer.
    pub conv_pre: Vec<Matrix>,
    /// Input vector to dense layer j.
    pub dense_inputs: Vec<Vec<f64>>,
    /// Pre-activations per dense layer.
    pub dense_pre: Vec<Vec<f64>>,
    /// Head output before any task link.
    pub raw: f64,
}

impl GcnnModel {
    pub fn n_conv_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind() == LayerKind::GraphConv)
            .count()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Raw head output (the regression value, or the classification logit).
    pub fn forward_raw(&self, input: &GraphInput) -> Result<f64, NetError> {
        Ok(self.forward_trace(input)?.raw)
    }

    /// Task-level prediction: identity for regression, sigmoid for
    /// classification.
    pub fn forward_graph(&self, input: &GraphInput) -> Result<f64, NetError> {
        let raw = self.forward_raw(input)?;
        Ok(match self.task {
            Task::Regression => raw,
            Task::BinaryClassification => sigmoid(raw),
        })
    }

    pub fn forward(&self, mol: &MolecularGraph) -> Result<f64, NetError> {
        self.forward_graph(&GraphInput::from_molecule(mol)?)
    }

    pub(crate) fn forward_trace(&self, input: &GraphInput) -> Result<ForwardTrace, NetError> {
        if input.features.cols() != self.layers[0].in_dim() {
            return Err(NetError::ShapeMismatch(format!(
                "input features have {} columns, first layer expects {}",
                input.features.cols(),
                self.layers[0].in_dim()
            )));
        }
        let n_atoms = input.features.rows();
        if n_atoms == 0 {
            return Err(NetError::ShapeMismatch("molecule has no atoms".into()));
        }

        let mut atom_inputs = vec![input.features.clone()];
        let mut neighbor_sums = Vec::new();
        let mut conv_pre = Vec::new();
        let mut dense_inputs: Vec<Vec<f64>> = Vec::new();
        let mut dense_pre: Vec<Vec<f64>> = Vec::new();

        let mut pooled: Option<Vec<f64>> = None;
        for layer in &self.layers {
            match layer {
                Layer::GraphConv(conv) => {
                    let h = atom_inputs.last().unwrap();
                    let mut sums = Matrix::zeros(n_atoms, h.cols());
                    for (v, neigh) in input.neighbors.iter().enumerate() {
                        for &u in neigh {
                            let src = h.row(u).to_vec();
                            let dst = sums.row_mut(v);
                            for (d, s) in dst.iter_mut().zip(&src) {
                                *d += s;
                            }
                        }
                    }
                    let mut pre = h.matmul(&conv.w_self);
                    pre.add_assign(&sums.matmul(&conv.w_neigh));
                    for r in 0..n_atoms {
                        let row = pre.row_mut(r);
                        for (x, b) in row.iter_mut().zip(&conv.b) {
                            *x += b;
                        }
                    }
                    let mut post = pre.clone();
                    for x in post.data_mut() {
                        *x = conv.activation.apply(*x);
                    }
                    neighbor_sums.push(sums);
                    conv_pre.push(pre);
                    atom_inputs.push(post);
                }
                Layer::Dense(dense) => {
                    let vec_in = match pooled.take() {
                        Some(v) => v,
                        None => {
                            let h = atom_inputs.last().unwrap();
                            let mut v = h.column_sums();
                            if self.readout == Readout::Mean {
                                for x in &mut v {
                                    *x /= n_atoms as f64;
                                }
                            }
                            v
                        }
                    };
                    let mut pre = dense.b.clone();
                    for (i, &x) in vec_in.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        for (j, p) in pre.iter_mut().enumerate() {
                            *p += x * dense.w.get(i, j);
                        }
                    }
                    let post: Vec<f64> = pre.iter().map(|&x| dense.activation.apply(x)).collect();
                    dense_inputs.push(vec_in);
                    dense_pre.push(pre);
                    pooled = Some(post);
                }
            }
        }
        let out = pooled.expect("validated stacks end in a dense head");
        Ok(ForwardTrace {
            atom_inputs,
            neighbor_sums,
            conv_pre,
            dense_inputs,
            dense_pre,
            raw: out[0],
        })
    }
}

/// Mean per-example loss: squared error for regression, binary cross-entropy
/// (computed stably from the logit) for classification.
pub fn loss(model: &GcnnModel, batch: &[(&MolecularGraph, f64)]) -> Result<f64, NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let mut total = 0.0;
    for (index, (mol, target)) in batch.iter().enumerate() {
        let input = GraphInput::from_molecule(mol)?;
        total += example_loss(model, &input, *target, index)?;
    }
    Ok(total / batch.len() as f64)
}

pub(crate) fn example_loss(
    model: &GcnnModel,
    input: &GraphInput,
    target: f64,
    index: usize,
) -> Result<f64, NetError> {
    let raw = model.forward_raw(input)?;
    example_loss_from_raw(model.task, raw, target, index)
}

pub(crate) fn example_loss_from_raw(
    task: Task,
    raw: f64,
    target: f64,
    index: usize,
) -> Result<f64, NetError> {
    match task {
        Task::Regression => Ok((raw - target).powi(2)),
        Task::BinaryClassification => {
            if target != 0.0 && target != 1.0 {
                return Err(NetError::BadTarget {
                    index,
                    value: target,
                });
            }
            // max(z,0) − z·y + ln(1 + e^{−|z|})
            Ok(raw.max(0.0) - raw * target + (-raw.abs()).exp().ln_1p())
        }
    }
}

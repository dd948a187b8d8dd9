//! Backpropagation, Adam, and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::molgraph::MolecularGraph;
use crate::task::Task;

use super::{
    sigmoid, example_loss_from_raw, GcnnModel, GraphInput, Layer, NetError, TrainConfig,
};

/// Gradient tensors for one layer, shaped like the layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    /// `w_self` for graph-conv layers, `w` for dense layers.
    pub w: Matrix,
    pub w_neigh: Option<Matrix>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    fn zeros_like(model: &GcnnModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::GraphConv(l) => LayerGrads {
                    w: Matrix::zeros(l.w_self.rows(), l.w_self.cols()),
                    w_neigh: Some(Matrix::zeros(l.w_neigh.rows(), l.w_neigh.cols())),
                    b: vec![0.0; l.b.len()],
                },
                Layer::Dense(l) => LayerGrads {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    w_neigh: None,
                    b: vec![0.0; l.b.len()],
                },
            })
            .collect();
        Gradients { layers }
    }

    fn scale(&mut self, s: f64) {
        for lg in &mut self.layers {
            lg.w.scale(s);
            if let Some(wn) = &mut lg.w_neigh {
                wn.scale(s);
            }
            for b in &mut lg.b {
                *b *= s;
            }
        }
    }
}

/// Mean analytic gradients of the batch loss with respect to every
/// parameter, frozen or not (freezing is an optimizer concern). Also returns
/// the batch loss.
pub fn gradients(
    model: &GcnnModel,
    batch: &[(&MolecularGraph, f64)],
) -> Result<(Gradients, f64), NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let inputs: Vec<GraphInput> = batch
        .iter()
        .map(|(mol, _)| GraphInput::from_molecule(mol))
        .collect::<Result<_, _>>()?;
    let input_refs: Vec<(&GraphInput, f64)> = inputs
        .iter()
        .zip(batch.iter())
        .map(|(input, (_, target))| (input, *target))
        .collect();
    gradients_on_inputs(model, &input_refs)
}

pub(crate) fn gradients_on_inputs(
    model: &GcnnModel,
    batch: &[(&GraphInput, f64)],
) -> Result<(Gradients, f64), NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let mut grads = Gradients::zeros_like(model);
    let mut total_loss = 0.0;
    for (index, (input, target)) in batch.iter().enumerate() {
        let trace = model.forward_trace(input)?;
        total_loss += example_loss_from_raw(model.task, trace.raw, *target, index)?;
        backward_example(model, input, &trace, *target, &mut grads);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((grads, total_loss * inv))
}

/// Accumulates one example's parameter gradients into `grads`.
fn backward_example(
    model: &GcnnModel,
    input: &GraphInput,
    trace: &super::ForwardTrace,
    target: f64,
    grads: &mut Gradients,
) {
    let n_atoms = input.features.rows();
    // d(loss)/d(raw): 2(z−y) for squared error, σ(z)−y for logit BCE.
    let mut d_out = vec![match model.task {
        Task::Regression => 2.0 * (trace.raw - target),
        Task::BinaryClassification => sigmoid(trace.raw) - target,
    }];

    let n_conv = model.n_conv_layers();
    // Dense stack, last to first.
    for (layer_idx, layer) in model.layers.iter().enumerate().rev() {
        let Layer::Dense(dense) = layer else { continue };
        let dense_idx = layer_idx - n_conv;
        let pre = &trace.dense_pre[dense_idx];
        let v_in = &trace.dense_inputs[dense_idx];
        let lg = &mut grads.layers[layer_idx];

        let dz: Vec<f64> = d_out
            .iter()
            .zip(pre)
            .map(|(d, &z)| d * dense.activation.derivative(z))
            .collect();
        for (j, &dzj) in dz.iter().enumerate() {
            lg.b[j] += dzj;
        }
        for (i, &xi) in v_in.iter().enumerate() {
            if xi != 0.0 {
                let row = lg.w.row_mut(i);
                for (j, &dzj) in dz.iter().enumerate() {
                    row[j] += xi * dzj;
                }
            }
        }
        let mut d_in = vec![0.0; v_in.len()];
        for (i, di) in d_in.iter_mut().enumerate() {
            for (j, &dzj) in dz.iter().enumerate() {
                *di += dense.w.get(i, j) * dzj;
            }
        }
        d_out = d_in;
    }

    if n_conv == 0 {
        return;
    }

    // Readout: distribute the pooled gradient over atom rows.
    let pooled_dim = d_out.len();
    let mut d_atoms = Matrix::zeros(n_atoms, pooled_dim);
    let share = match model.readout {
        super::Readout::Mean => 1.0 / n_atoms as f64,
        super::Readout::Sum => 1.0,
    };
    for r in 0..n_atoms {
        let row = d_atoms.row_mut(r);
        for (c, &d) in d_out.iter().enumerate() {
            row[c] = d * share;
        }
    }

    // Graph-conv stack, last to first.
    for layer_idx in (0..n_conv).rev() {
        let Layer::GraphConv(conv) = &model.layers[layer_idx] else {
            unreachable!("conv layers precede dense layers");
        };
        let pre = &trace.conv_pre[layer_idx];
        let h_in = &trace.atom_inputs[layer_idx];
        let sums = &trace.neighbor_sums[layer_idx];

        let mut dz = d_atoms;
        for (x, &z) in dz.data_mut().iter_mut().zip(pre.data()) {
            *x *= conv.activation.derivative(z);
        }

        let lg = &mut grads.layers[layer_idx];
        lg.w.add_assign(&h_in.transpose_matmul(&dz));
        lg.w_neigh
            .as_mut()
            .expect("conv gradients carry w_neigh")
            .add_assign(&sums.transpose_matmul(&dz));
        for (j, s) in dz.column_sums().into_iter().enumerate() {
            lg.b[j] += s;
        }

        // dH = dZ·W_selfᵀ + A·(dZ·W_neighᵀ); the adjacency is symmetric so
        // the neighbor term is again a plain neighbor sum.
        let d_self = dz.matmul_transpose(&conv.w_self);
        let d_neigh_part = dz.matmul_transpose(&conv.w_neigh);
        let mut d_h = d_self;
        for (v, neigh) in input.neighbors.iter().enumerate() {
            for &u in neigh {
                let src = d_neigh_part.row(u).to_vec();
                let dst = d_h.row_mut(v);
                for (d, s) in dst.iter_mut().zip(&src) {
                    *d += s;
                }
            }
        }
        d_atoms = d_h;
    }
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    fn new(model: &GcnnModel) -> Self {
        AdamState {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut GcnnModel, grads: &Gradients, config: &TrainConfig) {
        self.t += 1;
        let (b1, b2, eps, lr) = (
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
            config.learning_rate,
        );
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (layer_idx, layer) in model.layers.iter_mut().enumerate() {
            if config.frozen_layers.contains(&layer_idx) {
                continue;
            }
            let lg = &grads.layers[layer_idx];
            let grad_slices: Vec<&[f64]> = match &lg.w_neigh {
                Some(wn) => vec![lg.w.data(), wn.data(), lg.b.as_slice()],
                None => vec![lg.w.data(), lg.b.as_slice()],
            };
            let m_layer = &mut self.m.layers[layer_idx];
            let v_layer = &mut self.v.layers[layer_idx];
            let m_slices: Vec<&mut [f64]> = match &mut m_layer.w_neigh {
                Some(wn) => vec![m_layer.w.data_mut(), wn.data_mut(), m_layer.b.as_mut_slice()],
                None => vec![m_layer.w.data_mut(), m_layer.b.as_mut_slice()],
            };
            let v_slices: Vec<&mut [f64]> = match &mut v_layer.w_neigh {
                Some(wn) => vec![v_layer.w.data_mut(), wn.data_mut(), v_layer.b.as_mut_slice()],
                None => vec![v_layer.w.data_mut(), v_layer.b.as_mut_slice()],
            };
            let params = layer.params_mut();
            for (((param, grad), m), v) in params
                .into_iter()
                .zip(grad_slices)
                .zip(m_slices)
                .zip(v_slices)
            {
                for i in 0..param.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Trains a copy of the model with Adam and seeded shuffling. Returns the
/// trained model and the per-epoch mean training loss. Frozen layers come
/// out bit-identical. Epochs may be zero (no updates, empty history).
pub fn train(
    model: &GcnnModel,
    data: &[(MolecularGraph, f64)],
    config: &TrainConfig,
) -> Result<(GcnnModel, Vec<f64>), NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(NetError::BadConfig("batch_size must be at least 1".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(NetError::BadConfig("learning_rate must be positive".into()));
    }
    for &(b, name) in &[(config.adam_beta1, "beta1"), (config.adam_beta2, "beta2")] {
        if !(0.0 < b && b < 1.0) {
            return Err(NetError::BadConfig(format!("{name} must be in (0, 1)")));
        }
    }
    if let Some(&bad) = config
        .frozen_layers
        .iter()
        .find(|&&i| i >= model.layers.len())
    {
        return Err(NetError::BadConfig(format!(
            "frozen layer index {bad} out of range for {} layers",
            model.layers.len()
        )));
    }

    // Featurize once; training revisits every molecule each epoch.
    let inputs: Vec<GraphInput> = data
        .iter()
        .map(|(mol, _)| GraphInput::from_molecule(mol))
        .collect::<Result<_, _>>()?;
    let targets: Vec<f64> = data.iter().map(|(_, t)| t).copied().collect();

    let mut model = model.clone();
    let mut adam = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&GraphInput, f64)> =
                chunk.iter().map(|&i| (&inputs[i], targets[i])).collect();
            let (grads, batch_loss) = gradients_on_inputs(&model, &batch)?;
            if !batch_loss.is_finite() {
                return Err(NetError::Divergence { epoch });
            }
            adam.step(&mut model, &grads, config);
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let finite = model
            .layers
            .iter()
            .all(|l| l.params().iter().all(|s| s.iter().all(|x| x.is_finite())));
        if !finite {
            return Err(NetError::Divergence { epoch });
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::super::tests::paper_specs;
    use super::super::{
        build_model, loss, Activation, LayerKind, LayerSpec, Readout,
    };
    use super::*;
    use crate::molgraph::{parse_smiles, ATOM_FEATURE_DIM};
    use crate::task::Task;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn toy_data(smiles: &[&str]) -> Vec<(MolecularGraph, f64)> {
        smiles
            .iter()
            .enumerate()
            .map(|(i, s)| (parse_smiles(s).unwrap(), i as f64 * 0.5 - 1.0))
            .collect()
    }

    #[test]
    fn zero_residual_batch_has_zero_gradients() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 1).unwrap();
        let mol = parse_smiles("CCO").unwrap();
        let target = model.forward(&mol).unwrap();
        let (grads, batch_loss) = gradients(&model, &[(&mol, target)]).unwrap();
        assert_abs_diff_eq!(batch_loss, 0.0, epsilon = 1e-18);
        for lg in grads.layers {
            assert!(lg.w.data().iter().all(|&g| g == 0.0));
            if let Some(wn) = lg.w_neigh {
                assert!(wn.data().iter().all(|&g| g == 0.0));
            }
            assert!(lg.b.iter().all(|&g| g == 0.0));
        }
    }

    /// Central finite differences over every parameter of every layer.
    fn finite_difference_check(
        model: &GcnnModel,
        batch: &[(&MolecularGraph, f64)],
        step: f64,
        tolerance: f64,
    ) {
        let (analytic, _) = gradients(model, batch).unwrap();
        let mut worst = 0.0f64;
        for layer_idx in 0..model.layers.len() {
            let lg = &analytic.layers[layer_idx];
            let tensors: Vec<Vec<f64>> = match &lg.w_neigh {
                Some(wn) => vec![lg.w.data().to_vec(), wn.data().to_vec(), lg.b.clone()],
                None => vec![lg.w.data().to_vec(), lg.b.clone()],
            };
            for (tensor_idx, tensor) in tensors.iter().enumerate() {
                for i in 0..tensor.len() {
                    let mut plus = model.clone();
                    plus.layers[layer_idx].params_mut()[tensor_idx][i] += step;
                    let mut minus = model.clone();
                    minus.layers[layer_idx].params_mut()[tensor_idx][i] -= step;
                    let numeric =
                        (loss(&plus, batch).unwrap() - loss(&minus, batch).unwrap()) / (2.0 * step);
                    let a = tensor[i];
                    let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < tolerance, "worst relative error {worst}");
    }

    #[test]
    fn analytic_gradients_match_finite_differences_regression() {
        let model = build_model(&paper_specs(6), Task::Regression, Readout::Mean, 42).unwrap();
        let mols: Vec<MolecularGraph> = ["CCO", "c1ccncc1", "CC(=O)O"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let batch: Vec<(&MolecularGraph, f64)> = mols
            .iter()
            .zip([0.3, -1.2, 2.0])
            .map(|(m, t)| (m, t))
            .collect();
        finite_difference_check(&model, &batch, 1e-5, 1e-4);
    }

    #[test]
    fn analytic_gradients_match_finite_differences_classification() {
        let specs = vec![
            LayerSpec {
                kind: LayerKind::GraphConv,
                in_dim: ATOM_FEATURE_DIM,
                out_dim: 5,
                activation: Activation::Sigmoid,
            },
            LayerSpec {
                kind: LayerKind::Dense,
                in_dim: 5,
                out_dim: 4,
                activation: Activation::Sigmoid,
            },
            LayerSpec {
                kind: LayerKind::Dense,
                in_dim: 4,
                out_dim: 1,
                activation: Activation::Linear,
            },
        ];
        let model =
            build_model(&specs, Task::BinaryClassification, Readout::Sum, 9).unwrap();
        let mols: Vec<MolecularGraph> = ["CCO", "c1ccccc1"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let batch: Vec<(&MolecularGraph, f64)> =
            mols.iter().zip([1.0, 0.0]).map(|(m, t)| (m, t)).collect();
        finite_difference_check(&model, &batch, 1e-5, 1e-4);
    }

    #[test]
    fn frozen_layers_keep_bitwise_weights_but_still_get_gradients() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 3).unwrap();
        let data = toy_data(&["CCO", "CCC", "c1ccccc1", "CCN"]);

        // Gradients exist for frozen layers (freezing is not their concern).
        let batch: Vec<(&MolecularGraph, f64)> = data.iter().map(|(m, t)| (m, *t)).collect();
        let (grads, _) = gradients(&model, &batch).unwrap();
        assert!(grads.layers[0].w.data().iter().any(|&g| g != 0.0));

        let config = TrainConfig {
            epochs: 5,
            frozen_layers: [0usize, 1].into_iter().collect(),
            seed: 5,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&model, &data, &config).unwrap();
        assert_eq!(history.len(), 5);
        assert_eq!(trained.layers[0], model.layers[0]);
        assert_eq!(trained.layers[1], model.layers[1]);
        assert_ne!(trained.layers[2], model.layers[2]);
    }

    #[test]
    fn all_layers_frozen_is_identity() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 3).unwrap();
        let data = toy_data(&["CCO", "CCC"]);
        let config = TrainConfig {
            epochs: 3,
            frozen_layers: (0..model.layers.len()).collect(),
            ..TrainConfig::default()
        };
        let (trained, _) = train(&model, &data, &config).unwrap();
        assert_eq!(trained.layers, model.layers);
    }

    #[test]
    fn training_is_deterministic() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 3).unwrap();
        let data = toy_data(&["CCO", "CCC", "c1ccccc1", "CCN", "CCCC"]);
        let config = TrainConfig {
            epochs: 20,
            batch_size: 2,
            seed: 77,
            ..TrainConfig::default()
        };
        let (m1, h1) = train(&model, &data, &config).unwrap();
        let (m2, h2) = train(&model, &data, &config).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn overfits_five_molecules() {
        let model = build_model(&paper_specs(16), Task::Regression, Readout::Mean, 12).unwrap();
        let data = toy_data(&["CCO", "CCC", "c1ccccc1", "CCN", "CC(=O)O"]);
        let config = TrainConfig {
            epochs: 2000,
            batch_size: 5,
            learning_rate: 0.01,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, history) = train(&model, &data, &config).unwrap();
        let final_loss = *history.last().unwrap();
        assert!(
            final_loss < 1e-3,
            "expected overfit below 1e-3, got {final_loss}"
        );
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 3).unwrap();
        let data = toy_data(&["CCO"]);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&model, &data, &config).unwrap();
        assert!(history.is_empty());
        assert_eq!(trained, model);
    }

    #[test]
    fn bad_config_rejected() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 3).unwrap();
        let data = toy_data(&["CCO"]);
        let bad_frozen = TrainConfig {
            frozen_layers: BTreeSet::from([99]),
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&model, &data, &bad_frozen),
            Err(NetError::BadConfig(_))
        ));
        let bad_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&model, &data, &bad_lr),
            Err(NetError::BadConfig(_))
        ));
        assert!(matches!(
            train(&model, &[], &TrainConfig::default()),
            Err(NetError::EmptyDataset)
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let model = build_model(&paper_specs(8), Task::Regression, Readout::Mean, 3).unwrap();
        // Absurd target magnitude with a huge learning rate overflows fast.
        let data = vec![(parse_smiles("CCO").unwrap(), 1e155)];
        let config = TrainConfig {
            epochs: 50,
            learning_rate: 1e30,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&model, &data, &config),
            Err(NetError::Divergence { .. })
        ));
    }
}

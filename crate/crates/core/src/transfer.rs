//! Donor→acceptor weight transfer.
//!
//! Donor models are serialized to a versioned JSON archive (full-precision
//! floats, human-inspectable). Importing grafts the copied layers into a
//! freshly initialized model; feature-extraction mode freezes the grafted
//! layers during acceptor training, fine-tuning leaves everything trainable.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::molgraph::{parse_smiles, MolecularGraph, SmilesError};
use crate::neuralnet::{
    build_model, train, Activation, DenseLayer, GcnnModel, GraphConvLayer, Layer, LayerKind,
    LayerSpec, NetError, Readout, TrainConfig,
};
use crate::sampling::Dataset;
use crate::task::Task;

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("unrecognized archive format version {0}")]
    Version(u32),
    #[error("layer {layer} incompatible: {detail}")]
    ShapeIncompatible { layer: usize, detail: String },
    #[error("transfer plan invalid: {0}")]
    BadPlan(String),
    #[error("archive malformed: {0}")]
    Malformed(String),
    #[error("record {id:?}: {source}")]
    Parse { id: String, source: SmilesError },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub donor_dataset: String,
    pub seed: u64,
    pub epochs: usize,
    pub task: Task,
    pub readout: Readout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_self: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_neigh: Option<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LayerEntry {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: self.kind,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightArchive {
    pub format_version: u32,
    pub layers: Vec<LayerEntry>,
    pub metadata: ArchiveMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    FeatureExtraction,
    FineTuning,
}

impl std::str::FromStr for TransferMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feature_extraction" => Ok(TransferMode::FeatureExtraction),
            "fine_tuning" => Ok(TransferMode::FineTuning),
            other => Err(format!("unknown transfer mode: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    pub copied_layers: BTreeSet<usize>,
    pub mode: TransferMode,
    pub reinit_head: bool,
}

impl TransferPlan {
    /// Default plan: copy exactly the graph-conv layers (they hold the
    /// structural knowledge), keep a fresh head.
    pub fn graph_conv_only(archive: &WeightArchive, mode: TransferMode) -> Self {
        let copied = archive
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind == LayerKind::GraphConv)
            .map(|(i, _)| i)
            .collect();
        TransferPlan {
            copied_layers: copied,
            mode,
            reinit_head: false,
        }
    }

    pub fn full_copy(archive: &WeightArchive, mode: TransferMode) -> Self {
        TransferPlan {
            copied_layers: (0..archive.layers.len()).collect(),
            mode,
            reinit_head: false,
        }
    }

    fn validate(&self, n_layers: usize) -> Result<(), TransferError> {
        if self.copied_layers.is_empty() {
            return Err(TransferError::BadPlan("copied_layers is empty".into()));
        }
        if let Some(&bad) = self.copied_layers.iter().find(|&&i| i >= n_layers) {
            return Err(TransferError::BadPlan(format!(
                "copied layer {bad} out of range for {n_layers} layers"
            )));
        }
        Ok(())
    }

    /// Layers that actually carry donor weights: the head drops out when it
    /// is reinitialized. In feature-extraction mode this set is also frozen.
    fn effective_copied(&self, n_layers: usize) -> BTreeSet<usize> {
        let mut copied = self.copied_layers.clone();
        if self.reinit_head {
            copied.remove(&(n_layers - 1));
        }
        copied
    }
}

/// Serializes a model with its training metadata. Lossless at full f64
/// precision (shortest round-trip decimal encoding).
pub fn export_weights(model: &GcnnModel, metadata: ArchiveMetadata) -> WeightArchive {
    let layers = model
        .layers
        .iter()
        .map(|layer| match layer {
            Layer::GraphConv(l) => LayerEntry {
                kind: LayerKind::GraphConv,
                in_dim: l.w_self.rows(),
                out_dim: l.w_self.cols(),
                activation: l.activation,
                w_self: Some(l.w_self.data().to_vec()),
                w: None,
                w_neigh: Some(l.w_neigh.data().to_vec()),
                b: l.b.clone(),
            },
            Layer::Dense(l) => LayerEntry {
                kind: LayerKind::Dense,
                in_dim: l.w.rows(),
                out_dim: l.w.cols(),
                activation: l.activation,
                w_self: None,
                w: Some(l.w.data().to_vec()),
                w_neigh: None,
                b: l.b.clone(),
            },
        })
        .collect();
    WeightArchive {
        format_version: ARCHIVE_FORMAT_VERSION,
        layers,
        metadata,
    }
}

fn entry_to_layer(entry: &LayerEntry, index: usize) -> Result<Layer, TransferError> {
    let expect_len = |name: &str, data: &Option<Vec<f64>>, len: usize| {
        let data = data.as_ref().ok_or_else(|| TransferError::Malformed(format!(
            "layer {index} ({:?}) is missing tensor {name}",
            entry.kind
        )))?;
        if data.len() != len {
            return Err(TransferError::Malformed(format!(
                "layer {index} tensor {name} has {} values, expected {len}",
                data.len()
            )));
        }
        Ok(data.clone())
    };
    let wlen = entry.in_dim * entry.out_dim;
    if entry.b.len() != entry.out_dim {
        return Err(TransferError::Malformed(format!(
            "layer {index} bias has {} values, expected {}",
            entry.b.len(),
            entry.out_dim
        )));
    }
    Ok(match entry.kind {
        LayerKind::GraphConv => Layer::GraphConv(GraphConvLayer {
            w_self: Matrix::from_flat(entry.in_dim, entry.out_dim, expect_len("w_self", &entry.w_self, wlen)?),
            w_neigh: Matrix::from_flat(entry.in_dim, entry.out_dim, expect_len("w_neigh", &entry.w_neigh, wlen)?),
            b: entry.b.clone(),
            activation: entry.activation,
        }),
        LayerKind::Dense => Layer::Dense(DenseLayer {
            w: Matrix::from_flat(entry.in_dim, entry.out_dim, expect_len("w", &entry.w, wlen)?),
            b: entry.b.clone(),
            activation: entry.activation,
        }),
    })
}

/// Exact donor reconstruction: every layer restored bitwise, nothing frozen.
pub fn restore_model(archive: &WeightArchive) -> Result<GcnnModel, TransferError> {
    check_version(archive)?;
    let layers = archive
        .layers
        .iter()
        .enumerate()
        .map(|(i, e)| entry_to_layer(e, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GcnnModel {
        layers,
        task: archive.metadata.task,
        readout: archive.metadata.readout,
        rng_seed: archive.metadata.seed,
        frozen_layers: BTreeSet::new(),
    })
}

fn check_version(archive: &WeightArchive) -> Result<(), TransferError> {
    if archive.format_version != ARCHIVE_FORMAT_VERSION {
        return Err(TransferError::Version(archive.format_version));
    }
    Ok(())
}

/// Grafts donor weights into a fresh model built from `target_spec`.
///
/// Copied layers carry the donor tensors bitwise; everything else (plus the
/// head when `reinit_head`) keeps its fresh Glorot initialization from
/// `seed`. The returned model records the frozen set implied by the plan's
/// mode.
pub fn import_weights(
    archive: &WeightArchive,
    target_spec: &[LayerSpec],
    plan: &TransferPlan,
    seed: u64,
) -> Result<GcnnModel, TransferError> {
    graft(
        archive,
        target_spec,
        plan,
        seed,
        archive.metadata.task,
        archive.metadata.readout,
    )
}

fn graft(
    archive: &WeightArchive,
    target_spec: &[LayerSpec],
    plan: &TransferPlan,
    seed: u64,
    task: Task,
    readout: Readout,
) -> Result<GcnnModel, TransferError> {
    check_version(archive)?;
    plan.validate(target_spec.len())?;

    let mut model = build_model(target_spec, task, readout, seed)?;
    let effective = plan.effective_copied(target_spec.len());
    for &idx in &effective {
        let entry = archive.layers.get(idx).ok_or_else(|| {
            TransferError::ShapeIncompatible {
                layer: idx,
                detail: format!("archive has only {} layers", archive.layers.len()),
            }
        })?;
        let spec = &target_spec[idx];
        if entry.kind != spec.kind || entry.in_dim != spec.in_dim || entry.out_dim != spec.out_dim
        {
            return Err(TransferError::ShapeIncompatible {
                layer: idx,
                detail: format!(
                    "archive {:?} {}×{} vs target {:?} {}×{}",
                    entry.kind, entry.in_dim, entry.out_dim, spec.kind, spec.in_dim, spec.out_dim
                ),
            });
        }
        model.layers[idx] = entry_to_layer(entry, idx)?;
    }
    model.frozen_layers = match plan.mode {
        TransferMode::FeatureExtraction => effective,
        TransferMode::FineTuning => BTreeSet::new(),
    };
    Ok(model)
}

/// Imports donor weights for the acceptor task and trains on the acceptor
/// dataset. The target architecture is the archive's own; the head is
/// reinitialized whenever the plan says so or the tasks differ. Freezing
/// follows the plan mode (the model's recorded frozen set is merged into the
/// training config).
pub fn transfer_train(
    archive: &WeightArchive,
    acceptor: &Dataset,
    plan: &TransferPlan,
    config: &TrainConfig,
) -> Result<(GcnnModel, Vec<f64>), TransferError> {
    let target_spec: Vec<LayerSpec> = archive.layers.iter().map(LayerEntry::spec).collect();
    let mut plan = plan.clone();
    if acceptor.task != archive.metadata.task {
        plan.reinit_head = true;
    }
    let model = graft(
        archive,
        &target_spec,
        &plan,
        config.seed,
        acceptor.task,
        archive.metadata.readout,
    )?;

    let data = parse_dataset(acceptor)?;
    let mut config = config.clone();
    config.frozen_layers = config
        .frozen_layers
        .union(&model.frozen_layers)
        .copied()
        .collect();
    let (trained, history) = train(&model, &data, &config)?;
    Ok((trained, history))
}

/// Parses every record, tagging failures with the record id.
pub fn parse_dataset(ds: &Dataset) -> Result<Vec<(MolecularGraph, f64)>, TransferError> {
    ds.records
        .iter()
        .map(|rec| {
            parse_smiles(&rec.smiles)
                .map(|mol| (mol, rec.target))
                .map_err(|source| TransferError::Parse {
                    id: rec.id.clone(),
                    source,
                })
        })
        .collect()
}

impl WeightArchive {
    pub fn to_json(&self) -> Result<String, TransferError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TransferError> {
        let archive: WeightArchive = serde_json::from_str(text)?;
        check_version(&archive)?;
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<(), TransferError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| TransferError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TransferError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TransferError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

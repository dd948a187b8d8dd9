//! Experiment configuration: a TOML file with per-section defaults, plus a
//! handful of command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use transmol::baseline::{FeatureRule, ForestConfig};
use transmol::datagen::{generate_molecules, label_dataset, GenConfig, TargetFormula};
use transmol::molgraph::ATOM_FEATURE_DIM;
use transmol::neuralnet::{Activation, LayerKind, LayerSpec, Readout, TrainConfig};
use transmol::sampling::{Dataset, SplitProperty};
use transmol::transfer::TransferMode;
use transmol::Task;

/// Where a dataset comes from: a CSV on disk, or the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub n: usize,
    pub formula: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_heavy")]
    pub max_heavy_atoms: usize,
    #[serde(default)]
    pub noise_sd: f64,
}

fn default_max_heavy() -> usize {
    12
}

impl DatasetSpec {
    pub fn from_path(path: PathBuf) -> Self {
        DatasetSpec {
            path: Some(path),
            task: None,
            name: None,
            generate: None,
        }
    }

    pub fn resolve(&self) -> Result<Dataset> {
        match (&self.path, &self.generate) {
            (Some(path), None) => {
                let task = match self.task.as_deref() {
                    None | Some("regression") => Task::Regression,
                    Some("binary_classification") | Some("classification") => {
                        Task::BinaryClassification
                    }
                    Some(other) => bail!("unknown task {other:?}"),
                };
                let name = self
                    .name
                    .clone()
                    .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
                Ok(Dataset::from_csv_path(path, task, &name)?)
            }
            (None, Some(spec)) => {
                let formula: TargetFormula = spec
                    .formula
                    .parse()
                    .with_context(|| format!("formula {:?}", spec.formula))?;
                let smiles = generate_molecules(&GenConfig {
                    n_molecules: spec.n,
                    max_heavy_atoms: spec.max_heavy_atoms,
                    seed: spec.seed,
                    noise_sd: spec.noise_sd,
                })?;
                let mut ds = label_dataset(&smiles, formula, spec.noise_sd, spec.seed ^ 0x5eed)?;
                if let Some(name) = &self.name {
                    ds.name = name.clone();
                }
                Ok(ds)
            }
            (Some(_), Some(_)) => bail!("dataset spec must not set both `path` and `generate`"),
            (None, None) => bail!("dataset spec needs either `path` or `generate`"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub train_sizes: Vec<usize>,
    pub donor_sizes: Vec<usize>,
    pub split_properties: Vec<String>,
    pub transfer_mode: String,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            train_sizes: vec![10, 20, 50, 100],
            donor_sizes: vec![100, 500, 2000],
            split_properties: vec!["endpoint".into()],
            transfer_mode: "feature_extraction".into(),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ExperimentSection {
    pub fn split_properties(&self) -> Result<Vec<SplitProperty>> {
        self.split_properties
            .iter()
            .map(|s| s.parse::<SplitProperty>().map_err(anyhow::Error::msg))
            .collect()
    }

    pub fn transfer_mode(&self) -> Result<TransferMode> {
        self.transfer_mode
            .parse::<TransferMode>()
            .map_err(anyhow::Error::msg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub conv_dims: Vec<usize>,
    pub dense_dims: Vec<usize>,
    pub readout: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            conv_dims: vec![32, 32],
            dense_dims: vec![16, 8],
            readout: "mean".into(),
        }
    }
}

impl ModelSection {
    pub fn readout(&self) -> Result<Readout> {
        match self.readout.as_str() {
            "mean" => Ok(Readout::Mean),
            "sum" => Ok(Readout::Sum),
            other => bail!("unknown readout {other:?}"),
        }
    }

    /// Conv stack then dense stack then the width-one linear head.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        if self.conv_dims.is_empty() {
            bail!("model needs at least one graph_conv layer");
        }
        let mut specs = Vec::new();
        let mut in_dim = ATOM_FEATURE_DIM;
        for &out in &self.conv_dims {
            specs.push(LayerSpec {
                kind: LayerKind::GraphConv,
                in_dim,
                out_dim: out,
                activation: Activation::Relu,
            });
            in_dim = out;
        }
        for &out in &self.dense_dims {
            specs.push(LayerSpec {
                kind: LayerKind::Dense,
                in_dim,
                out_dim: out,
                activation: Activation::Relu,
            });
            in_dim = out;
        }
        specs.push(LayerSpec {
            kind: LayerKind::Dense,
            in_dim,
            out_dim: 1,
            activation: Activation::Linear,
        });
        Ok(specs)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.005,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            frozen_layers: BTreeSet::new(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DonorTrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl Default for DonorTrainingSection {
    fn default() -> Self {
        DonorTrainingSection {
            epochs: 150,
            batch_size: 32,
            learning_rate: 0.005,
            holdout_fraction: 0.2,
        }
    }
}

impl DonorTrainingSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSection {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: String,
    pub bootstrap: bool,
}

impl Default for ForestSection {
    fn default() -> Self {
        ForestSection {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: "sqrt".into(),
            bootstrap: true,
        }
    }
}

impl ForestSection {
    pub fn forest_config(&self, seed: u64) -> Result<ForestConfig> {
        let features_per_split = match self.features_per_split.as_str() {
            "sqrt" => FeatureRule::Sqrt,
            "all" => FeatureRule::All,
            other => bail!("unknown features_per_split {other:?}"),
        };
        Ok(ForestConfig {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            features_per_split,
            bootstrap: self.bootstrap,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AdSection {
    pub k: usize,
}

impl Default for AdSection {
    fn default() -> Self {
        AdSection { k: 5 }
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub out_dir: Option<PathBuf>,
    pub master_seed: Option<u64>,
    pub donor_archive: Option<PathBuf>,
    pub donor: Option<DatasetSpec>,
    pub acceptor: Option<DatasetSpec>,
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub donor_training: DonorTrainingSection,
    pub forest: ForestSection,
    pub ad: AdSection,
}

impl ExperimentConfig {
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Applies command-line overrides; flags win over file values.
    pub fn apply_overrides(
        &mut self,
        out_dir: Option<PathBuf>,
        seed: Option<u64>,
        donor_archive: Option<PathBuf>,
    ) {
        if out_dir.is_some() {
            self.out_dir = out_dir;
        }
        if seed.is_some() {
            self.master_seed = seed;
        }
        if donor_archive.is_some() {
            self.donor_archive = donor_archive;
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed.unwrap_or(0)
    }

    pub fn donor(&self) -> Result<&DatasetSpec> {
        self.donor
            .as_ref()
            .context("config is missing the [donor] section")
    }

    pub fn acceptor(&self) -> Result<&DatasetSpec> {
        self.acceptor
            .as_ref()
            .context("config is missing the [acceptor] section")
    }

    /// Config echo for reports: the effective configuration as JSON.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_toml() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.experiment.train_sizes, vec![10, 20, 50, 100]);
        assert_eq!(cfg.experiment.seeds.len(), 5);
        assert_eq!(cfg.training.epochs, 300);
        assert_eq!(cfg.forest.n_trees, 100);
        assert_eq!(cfg.ad.k, 5);
        assert_eq!(cfg.master_seed(), 0);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
out_dir = "runs/exp1"
master_seed = 7

[donor.generate]
n = 500
formula = "donor_default"
seed = 3

[acceptor.generate]
n = 300
formula = "acceptor_related"
seed = 4
noise_sd = 0.1

[experiment]
train_sizes = [10, 20]
donor_sizes = [100, 500]
split_properties = ["endpoint", "molecular_weight"]
transfer_mode = "feature_extraction"
seeds = [1, 2, 3]

[model]
conv_dims = [24, 24]
dense_dims = [12, 6]
readout = "mean"

[training]
epochs = 100
learning_rate = 0.01

[forest]
n_trees = 50
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.master_seed(), 7);
        assert_eq!(cfg.experiment.split_properties().unwrap().len(), 2);
        let specs = cfg.model.layer_specs().unwrap();
        assert_eq!(specs.len(), 5);
        assert_eq!(specs[0].in_dim, ATOM_FEATURE_DIM);
        assert_eq!(specs.last().unwrap().out_dim, 1);
        assert_eq!(cfg.training.epochs, 100);
        assert_eq!(cfg.training.batch_size, 32); // untouched default
        assert_eq!(cfg.forest.n_trees, 50);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("nonsense = 1").is_err());
        assert!(ExperimentConfig::from_toml("[training]\nepoch = 5").is_err());
    }

    #[test]
    fn generated_dataset_resolves_deterministically() {
        let spec = DatasetSpec {
            path: None,
            task: None,
            name: None,
            generate: Some(GenerateSpec {
                n: 50,
                formula: "donor_default".into(),
                seed: 9,
                max_heavy_atoms: 10,
                noise_sd: 0.0,
            }),
        };
        let a = spec.resolve().unwrap();
        let b = spec.resolve().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert_eq!(a.name, "donor_default");
    }

    #[test]
    fn both_path_and_generate_rejected() {
        let spec = DatasetSpec {
            path: Some(PathBuf::from("x.csv")),
            task: None,
            name: None,
            generate: Some(GenerateSpec {
                n: 1,
                formula: "donor_default".into(),
                seed: 0,
                max_heavy_atoms: 12,
                noise_sd: 0.0,
            }),
        };
        assert!(spec.resolve().is_err());
    }
}

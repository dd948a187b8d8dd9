//! Shared machinery for the experiment commands: dataset caches, per-cell
//! seed derivation, the three model arms, and AD coverage.

use std::collections::BTreeMap;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use transmol::analysis::{r2_score, roc_auc};
use transmol::appdomain::{fit_ad_from_fps, AdModel};
use transmol::baseline::{fit_forest_from_fps, predict_forest_fp, Forest};
use transmol::fingerprint::{ecfp, Fingerprint, DEFAULT_N_BITS, RADIUS_ECFP4, RADIUS_ECFP6};
use transmol::hash::derive_seed;
use transmol::molgraph::{parse_smiles, MolecularGraph};
use transmol::neuralnet::{build_model, train, GcnnModel};
use transmol::sampling::{diversity_split, Dataset, SplitProperty, SplitResult};
use transmol::transfer::{transfer_train, TransferPlan, WeightArchive};
use transmol::Task;

use crate::config::ExperimentConfig;
use crate::report::{AdRecord, CellStatus, MetricCell, ModelKind};

/// A dataset with everything the cells need precomputed once: parsed graphs
/// and both fingerprint radii, keyed by record id.
pub struct DatasetBundle {
    pub dataset: Dataset,
    pub mols: BTreeMap<String, MolecularGraph>,
    pub fps4: BTreeMap<String, Fingerprint>,
    pub fps6: BTreeMap<String, Fingerprint>,
}

impl DatasetBundle {
    pub fn prepare(dataset: Dataset) -> Result<Self> {
        let mut mols = BTreeMap::new();
        let mut fps4 = BTreeMap::new();
        let mut fps6 = BTreeMap::new();
        let parsed: Vec<(String, MolecularGraph)> = dataset
            .records
            .par_iter()
            .map(|rec| {
                let mol = parse_smiles(&rec.smiles)
                    .map_err(|e| anyhow!("record {:?}: {e}", rec.id))?;
                Ok((rec.id.clone(), mol))
            })
            .collect::<Result<_>>()?;
        for (id, mol) in parsed {
            let f4 = ecfp(&mol, RADIUS_ECFP4, DEFAULT_N_BITS).expect("fixed parameters");
            let f6 = ecfp(&mol, RADIUS_ECFP6, DEFAULT_N_BITS).expect("fixed parameters");
            fps4.insert(id.clone(), f4);
            fps6.insert(id.clone(), f6);
            mols.insert(id, mol);
        }
        Ok(DatasetBundle {
            dataset,
            mols,
            fps4,
            fps6,
        })
    }

    pub fn pairs_for(&self, ids: &[String]) -> Vec<(MolecularGraph, f64)> {
        let targets: BTreeMap<&str, f64> = self
            .dataset
            .records
            .iter()
            .map(|r| (r.id.as_str(), r.target))
            .collect();
        ids.iter()
            .map(|id| (self.mols[id].clone(), targets[id.as_str()]))
            .collect()
    }

    pub fn targets_for(&self, ids: &[String]) -> Vec<f64> {
        let targets: BTreeMap<&str, f64> = self
            .dataset
            .records
            .iter()
            .map(|r| (r.id.as_str(), r.target))
            .collect();
        ids.iter().map(|id| targets[id.as_str()]).collect()
    }
}

/// Donor-side context shared by every cell: the weight archive plus, when the
/// donor dataset is known, its applicability domain and per-acceptor-molecule
/// inclusion flags.
pub struct DonorContext {
    pub archive: WeightArchive,
    pub ad: Option<DonorAd>,
}

pub struct DonorAd {
    pub d_train: f64,
    /// Donor-domain inclusion per acceptor record id.
    pub included: BTreeMap<String, bool>,
}

impl DonorContext {
    pub fn new(archive: WeightArchive) -> Self {
        DonorContext { archive, ad: None }
    }

    /// Fits the donor AD on the donor training molecules and pre-evaluates
    /// every acceptor molecule against it.
    pub fn with_donor_ad(
        mut self,
        donor: &Dataset,
        acceptor: &DatasetBundle,
        k: usize,
    ) -> Result<Self> {
        let donor_fps: Vec<Fingerprint> = donor
            .records
            .par_iter()
            .map(|rec| {
                let mol = parse_smiles(&rec.smiles)
                    .map_err(|e| anyhow!("donor record {:?}: {e}", rec.id))?;
                Ok(ecfp(&mol, RADIUS_ECFP4, DEFAULT_N_BITS).expect("fixed parameters"))
            })
            .collect::<Result<_>>()?;
        let ad = fit_ad_from_fps(donor_fps, k).context("fitting donor applicability domain")?;
        let included = acceptor
            .fps4
            .iter()
            .map(|(id, fp)| (id.clone(), ad.in_domain_fp(fp).0))
            .collect();
        self.ad = Some(DonorAd {
            d_train: ad.d_train,
            included,
        });
        Ok(self)
    }
}

/// Identifies one experiment cell.
#[derive(Debug, Clone)]
pub struct CellKey {
    pub train_size: usize,
    pub property: SplitProperty,
    pub seed: u64,
    pub donor_size: Option<usize>,
}

impl CellKey {
    pub fn id(&self) -> String {
        match self.donor_size {
            Some(d) => format!(
                "donor={d:06}/size={:04}/prop={}/seed={:04}",
                self.train_size, self.property, self.seed
            ),
            None => format!(
                "size={:04}/prop={}/seed={:04}",
                self.train_size, self.property, self.seed
            ),
        }
    }

    /// Split identity excludes the donor size: sweeps over donors must see
    /// identical acceptor splits to stay paired.
    pub fn split_scope(&self) -> String {
        format!(
            "split/size={:04}/prop={}/seed={:04}",
            self.train_size, self.property, self.seed
        )
    }

    pub fn derived_seed(&self, master: u64) -> u64 {
        derive_seed(master, &self.id())
    }
}

pub fn cell_grid(
    train_sizes: &[usize],
    properties: &[SplitProperty],
    seeds: &[u64],
) -> Vec<CellKey> {
    let mut cells = Vec::new();
    for &train_size in train_sizes {
        for &property in properties {
            for &seed in seeds {
                cells.push(CellKey {
                    train_size,
                    property,
                    seed,
                    donor_size: None,
                });
            }
        }
    }
    cells
}

/// Builds the cell's split; deterministic in (master seed, size, property,
/// repetition seed) and independent of the donor under study.
pub fn cell_split(
    acceptor: &DatasetBundle,
    key: &CellKey,
    master_seed: u64,
) -> Result<SplitResult> {
    diversity_split(
        &acceptor.dataset,
        key.property,
        key.train_size,
        derive_seed(master_seed, &key.split_scope()),
    )
    .map_err(|e| anyhow!("split for {}: {e}", key.id()))
}

fn metric_for(task: Task, y_true: &[f64], preds: &[f64]) -> Result<(String, f64)> {
    match task {
        Task::Regression => Ok(("r2".into(), r2_score(y_true, preds)?)),
        Task::BinaryClassification => {
            let labels: Vec<bool> = y_true.iter().map(|&y| y == 1.0).collect();
            Ok(("roc_auc".into(), roc_auc(&labels, preds)?))
        }
    }
}

pub struct ArmOutcome {
    pub metric_name: Option<String>,
    pub value: Option<f64>,
    pub error: Option<String>,
}

fn run_arm(f: impl FnOnce() -> Result<(String, f64)>) -> ArmOutcome {
    match f() {
        Ok((name, value)) => ArmOutcome {
            metric_name: Some(name),
            value: Some(value),
            error: None,
        },
        Err(e) => ArmOutcome {
            metric_name: None,
            value: None,
            error: Some(format!("{e:#}")),
        },
    }
}

fn predict_gcnn(
    model: &GcnnModel,
    acceptor: &DatasetBundle,
    ids: &[String],
) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| model.forward(&acceptor.mols[id]).map_err(|e| anyhow!("{e}")))
        .collect()
}

fn predict_rf(forest: &Forest, acceptor: &DatasetBundle, ids: &[String]) -> Vec<f64> {
    ids.iter()
        .map(|id| predict_forest_fp(forest, &acceptor.fps6[id]))
        .collect()
}

/// Runs the pure-GCNN arm of a cell.
pub fn pure_arm(
    config: &ExperimentConfig,
    acceptor: &DatasetBundle,
    split: &SplitResult,
    cell_seed: u64,
) -> ArmOutcome {
    run_arm(|| {
        let specs = config.model.layer_specs()?;
        let model = build_model(
            &specs,
            acceptor.dataset.task,
            config.model.readout()?,
            derive_seed(cell_seed, "pure/init"),
        )?;
        let train_pairs = acceptor.pairs_for(&split.train_ids);
        let train_cfg = config
            .training
            .train_config(derive_seed(cell_seed, "pure/train"));
        let (trained, _) = train(&model, &train_pairs, &train_cfg)?;
        let preds = predict_gcnn(&trained, acceptor, &split.test_ids)?;
        metric_for(
            acceptor.dataset.task,
            &acceptor.targets_for(&split.test_ids),
            &preds,
        )
    })
}

/// Runs the transfer arm. In feature-extraction mode the copied layers are
/// verified bit-identical to the donor's after training; a violation fails
/// the cell.
pub fn transfer_arm(
    config: &ExperimentConfig,
    donor: &DonorContext,
    acceptor: &DatasetBundle,
    split: &SplitResult,
    cell_seed: u64,
) -> ArmOutcome {
    run_arm(|| {
        let mode = config.experiment.transfer_mode()?;
        let plan = TransferPlan::graph_conv_only(&donor.archive, mode);
        let train_ds = acceptor
            .dataset
            .subset(split.train_ids.iter().map(String::as_str), "cell-train");
        let train_cfg = config
            .training
            .train_config(derive_seed(cell_seed, "transfer/train"));
        let (trained, _) = transfer_train(&donor.archive, &train_ds, &plan, &train_cfg)?;
        if mode == transmol::transfer::TransferMode::FeatureExtraction {
            let donor_model = transmol::transfer::restore_model(&donor.archive)?;
            let intact = plan
                .copied_layers
                .iter()
                .all(|&i| trained.layers[i] == donor_model.layers[i]);
            if !intact {
                anyhow::bail!("freeze contract violated: copied layers changed during training");
            }
        }
        let preds = predict_gcnn(&trained, acceptor, &split.test_ids)?;
        metric_for(
            acceptor.dataset.task,
            &acceptor.targets_for(&split.test_ids),
            &preds,
        )
    })
}

/// Runs the random-forest arm on the cell's fingerprints.
pub fn forest_arm(
    config: &ExperimentConfig,
    acceptor: &DatasetBundle,
    split: &SplitResult,
    cell_seed: u64,
) -> ArmOutcome {
    run_arm(|| {
        let forest_cfg = config
            .forest
            .forest_config(derive_seed(cell_seed, "forest"))?;
        let train_fps: Vec<Fingerprint> = split
            .train_ids
            .iter()
            .map(|id| acceptor.fps6[id].clone())
            .collect();
        let train_targets = acceptor.targets_for(&split.train_ids);
        if train_fps.len() < 2 {
            anyhow::bail!("forest needs at least 2 training records");
        }
        let forest = fit_forest_from_fps(
            &train_fps,
            &train_targets,
            acceptor.dataset.task,
            &forest_cfg,
        );
        let preds = predict_rf(&forest, acceptor, &split.test_ids);
        metric_for(
            acceptor.dataset.task,
            &acceptor.targets_for(&split.test_ids),
            &preds,
        )
    })
}

/// Applicability-domain record for a cell: acceptor-train AD coverage, and
/// when the donor AD is available, the union rule and its delta.
pub fn ad_record_for_cell(
    key: &CellKey,
    config: &ExperimentConfig,
    donor_ad: Option<&DonorAd>,
    acceptor: &DatasetBundle,
    split: &SplitResult,
) -> Result<AdRecord> {
    let train_fps: Vec<Fingerprint> = split
        .train_ids
        .iter()
        .map(|id| acceptor.fps4[id].clone())
        .collect();
    let acceptor_ad: AdModel = fit_ad_from_fps(train_fps, config.ad.k)?;
    let mut inside_acceptor = 0usize;
    let mut inside_union = 0usize;
    for id in &split.test_ids {
        let (inc, _) = acceptor_ad.in_domain_fp(&acceptor.fps4[id]);
        if inc {
            inside_acceptor += 1;
        }
        let union_inc = inc || donor_ad.is_some_and(|d| d.included[id]);
        if union_inc {
            inside_union += 1;
        }
    }
    let n = split.test_ids.len() as f64;
    let acceptor_coverage = inside_acceptor as f64 / n;
    let (donor_coverage, donor_d_train, union_coverage, delta_coverage) = match donor_ad {
        Some(d) => {
            let donor_cov = split
                .test_ids
                .iter()
                .filter(|id| d.included[id.as_str()])
                .count() as f64
                / n;
            let union_cov = inside_union as f64 / n;
            (
                Some(donor_cov),
                Some(d.d_train),
                Some(union_cov),
                Some(union_cov - acceptor_coverage),
            )
        }
        None => (None, None, None, None),
    };
    Ok(AdRecord {
        cell_id: key.id(),
        train_size: key.train_size,
        split_property: key.property.to_string(),
        seed: key.seed,
        acceptor_coverage,
        acceptor_d_train: acceptor_ad.d_train,
        donor_coverage,
        donor_d_train,
        union_coverage,
        delta_coverage,
    })
}

/// Assembles a `MetricCell` from an arm outcome.
pub fn make_cell(
    key: &CellKey,
    kind: ModelKind,
    outcome: ArmOutcome,
    split: &SplitResult,
    digest: &str,
) -> MetricCell {
    let failed = outcome.error.is_some();
    MetricCell {
        cell_id: key.id(),
        train_size: key.train_size,
        split_property: key.property.to_string(),
        seed: key.seed,
        model_kind: kind,
        donor_size: key.donor_size,
        metric_name: outcome.metric_name,
        value: outcome.value,
        n_test: split.test_ids.len(),
        train_ids_digest: digest.to_string(),
        status: if failed {
            CellStatus::Failed
        } else {
            CellStatus::Ok
        },
        error: outcome.error,
    }
}

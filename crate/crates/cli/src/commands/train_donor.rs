//! `train-donor`: fit the donor model and write its weight archive.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transmol::analysis::r2_score;
use transmol::hash::derive_seed;
use transmol::molgraph::MolecularGraph;
use transmol::neuralnet::{build_model, train};
use transmol::sampling::Dataset;
use transmol::transfer::{export_weights, parse_dataset, ArchiveMetadata, WeightArchive};

use crate::config::ExperimentConfig;
use crate::report::{ArtifactRecord, DonorTrainingRecord, RunReport};

use super::ensure_dir;

pub struct DonorOutcome {
    pub report: RunReport,
    pub archive_path: PathBuf,
}

pub fn run(config: &ExperimentConfig) -> Result<DonorOutcome> {
    let out_dir = config.out_dir();
    ensure_dir(&out_dir)?;
    let dataset = config.donor()?.resolve()?;
    let (archive, record) = train_donor_on(config, &dataset, None)?;
    let archive_path = out_dir.join("donor_archive.json");
    archive.save(&archive_path)?;

    let dataset_path = out_dir.join("donor_dataset.csv");
    dataset.to_csv_path(&dataset_path)?;

    let mut report = RunReport::new("train-donor", config.master_seed(), config.echo());
    report.donor_training.push(DonorTrainingRecord {
        archive_path: archive_path.display().to_string(),
        ..record
    });
    report.artifacts.push(ArtifactRecord {
        kind: "weight_archive".into(),
        path: archive_path.display().to_string(),
    });
    report.artifacts.push(ArtifactRecord {
        kind: "dataset_csv".into(),
        path: dataset_path.display().to_string(),
    });
    Ok(DonorOutcome {
        report,
        archive_path,
    })
}

/// Trains one donor on `dataset`: a seeded holdout slice is kept aside for
/// the R² sanity metric and the model trains on the remainder. `scope`
/// namespaces the derived seeds when the sweep trains several donors.
pub fn train_donor_on(
    config: &ExperimentConfig,
    dataset: &Dataset,
    scope: Option<&str>,
) -> Result<(WeightArchive, DonorTrainingRecord)> {
    let master = config.master_seed();
    let scope = scope.unwrap_or("donor");
    let pairs = parse_dataset(dataset)?;
    let n = pairs.len();

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, &format!("{scope}/holdout")));
    order.shuffle(&mut rng);
    let holdout_n = ((n as f64) * config.donor_training.holdout_fraction).round() as usize;
    let holdout_n = holdout_n.min(n.saturating_sub(1));
    let (holdout_idx, train_idx) = order.split_at(holdout_n);

    let train_pairs: Vec<(MolecularGraph, f64)> =
        train_idx.iter().map(|&i| pairs[i].clone()).collect();
    let specs = config.model.layer_specs()?;
    let readout = config.model.readout()?;
    let init_seed = derive_seed(master, &format!("{scope}/init"));
    let model = build_model(&specs, dataset.task, readout, init_seed)?;
    let train_cfg = config
        .donor_training
        .train_config(derive_seed(master, &format!("{scope}/train")));
    let (trained, history) = train(&model, &train_pairs, &train_cfg)
        .with_context(|| format!("training donor on {} molecules", train_pairs.len()))?;

    let holdout_r2 = if holdout_idx.len() >= 2 {
        let y: Vec<f64> = holdout_idx.iter().map(|&i| pairs[i].1).collect();
        let preds: Vec<f64> = holdout_idx
            .iter()
            .map(|&i| trained.forward(&pairs[i].0))
            .collect::<Result<_, _>>()?;
        r2_score(&y, &preds).ok()
    } else {
        None
    };

    let archive = export_weights(
        &trained,
        ArchiveMetadata {
            donor_dataset: dataset.name.clone(),
            seed: init_seed,
            epochs: train_cfg.epochs,
            task: dataset.task,
            readout,
        },
    );
    let record = DonorTrainingRecord {
        donor_size: n,
        epochs: train_cfg.epochs,
        final_train_loss: history.last().copied().unwrap_or(f64::NAN),
        holdout_r2,
        archive_path: String::new(),
    };
    Ok((archive, record))
}

pub fn out_path_hint(out_dir: &Path) -> PathBuf {
    out_dir.join("donor_archive.json")
}

//! `donor-size-sweep`: train one donor per configured size on nested
//! subsamples of the donor pool, then run the transfer arm of every
//! (acceptor train size, seed) cell against each donor.

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use transmol::hash::derive_seed;
use transmol::sampling::Dataset;

use crate::config::ExperimentConfig;
use crate::report::{ids_digest, ArtifactRecord, DonorTrainingRecord, MetricCell, ModelKind, RunReport};

use super::engine::{cell_grid, cell_split, make_cell, transfer_arm, CellKey, DatasetBundle, DonorContext};
use super::train_donor::train_donor_on;
use super::ensure_dir;

pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let out_dir = config.out_dir();
    ensure_dir(&out_dir)?;
    let donor_pool = config.donor()?.resolve()?;
    let sizes = &config.experiment.donor_sizes;
    if sizes.is_empty() {
        bail!("donor_sizes is empty");
    }
    if let Some(&too_big) = sizes.iter().find(|&&s| s > donor_pool.len()) {
        bail!(
            "donor size {too_big} exceeds the donor pool ({} molecules)",
            donor_pool.len()
        );
    }
    let master = config.master_seed();

    // One shuffle; each donor set is a prefix, so smaller ⊂ larger.
    let mut order: Vec<usize> = (0..donor_pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "donor-pool"));
    order.shuffle(&mut rng);

    let acceptor = DatasetBundle::prepare(config.acceptor()?.resolve()?)?;
    let properties = config.experiment.split_properties()?;

    let mut report = RunReport::new("donor-size-sweep", master, config.echo());
    let mut sorted_sizes = sizes.clone();
    sorted_sizes.sort_unstable();
    sorted_sizes.dedup();

    for &donor_size in &sorted_sizes {
        let subset_records: Vec<_> = order[..donor_size]
            .iter()
            .map(|&i| donor_pool.records[i].clone())
            .collect();
        let donor_ds = Dataset::new(
            subset_records,
            donor_pool.task,
            &format!("{}_n{donor_size}", donor_pool.name),
        )?;
        let csv_path = out_dir.join(format!("donor_{donor_size}.csv"));
        donor_ds.to_csv_path(&csv_path)?;
        report.artifacts.push(ArtifactRecord {
            kind: "donor_subset_csv".into(),
            path: csv_path.display().to_string(),
        });

        let (archive, record) =
            train_donor_on(config, &donor_ds, Some(&format!("donor/{donor_size}")))?;
        let archive_path = out_dir.join(format!("donor_archive_{donor_size}.json"));
        archive.save(&archive_path)?;
        report.donor_training.push(DonorTrainingRecord {
            archive_path: archive_path.display().to_string(),
            ..record
        });
        report.artifacts.push(ArtifactRecord {
            kind: "weight_archive".into(),
            path: archive_path.display().to_string(),
        });

        let donor_ctx = DonorContext::new(archive);
        let mut cells = cell_grid(
            &config.experiment.train_sizes,
            &properties,
            &config.experiment.seeds,
        );
        for cell in &mut cells {
            cell.donor_size = Some(donor_size);
        }
        let results: Vec<MetricCell> = cells
            .par_iter()
            .map(|key| run_transfer_cell(config, &donor_ctx, &acceptor, key, master))
            .collect();
        report.metric_cells.extend(results);
    }
    Ok(report)
}

fn run_transfer_cell(
    config: &ExperimentConfig,
    donor_ctx: &DonorContext,
    acceptor: &DatasetBundle,
    key: &CellKey,
    master: u64,
) -> MetricCell {
    match cell_split(acceptor, key, master) {
        Ok(split) => {
            let digest = ids_digest(&split.train_ids);
            let cell_seed = key.derived_seed(master);
            let outcome = transfer_arm(config, donor_ctx, acceptor, &split, cell_seed);
            make_cell(key, ModelKind::Transfer, outcome, &split, &digest)
        }
        Err(e) => MetricCell {
            cell_id: key.id(),
            train_size: key.train_size,
            split_property: key.property.to_string(),
            seed: key.seed,
            model_kind: ModelKind::Transfer,
            donor_size: key.donor_size,
            metric_name: None,
            value: None,
            n_test: 0,
            train_ids_digest: String::new(),
            status: crate::report::CellStatus::Failed,
            error: Some(format!("{e:#}")),
        },
    }
}

//! `compare`: the three-way benchmark. For every (train size, split
//! property, seed) cell, the pure GCNN, the transfer model and the forest
//! baseline train on the identical diversity split and are scored on the
//! identical external test set. When the donor dataset is configured, each
//! cell also gets an applicability-domain record with the union rule.

use anyhow::{Context, Result};
use rayon::prelude::*;

use transmol::transfer::WeightArchive;

use crate::config::ExperimentConfig;
use crate::report::{ids_digest, AdRecord, MetricCell, ModelKind, RunReport};

use super::engine::{
    ad_record_for_cell, cell_grid, cell_split, forest_arm, make_cell, pure_arm, transfer_arm,
    ArmOutcome, CellKey, DatasetBundle, DonorContext,
};

pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let archive_path = config
        .donor_archive
        .as_ref()
        .context("compare needs `donor_archive` (config key or --donor-archive)")?;
    let archive = WeightArchive::load(archive_path)?;
    let acceptor = DatasetBundle::prepare(config.acceptor()?.resolve()?)?;

    let mut donor_ctx = DonorContext::new(archive);
    if let Some(donor_spec) = &config.donor {
        let donor_ds = donor_spec.resolve()?;
        donor_ctx = donor_ctx.with_donor_ad(&donor_ds, &acceptor, config.ad.k)?;
    }

    let properties = config.experiment.split_properties()?;
    let cells = cell_grid(
        &config.experiment.train_sizes,
        &properties,
        &config.experiment.seeds,
    );
    let master = config.master_seed();

    let results: Vec<(Vec<MetricCell>, Option<AdRecord>)> = cells
        .par_iter()
        .map(|key| run_cell(config, &donor_ctx, &acceptor, key, master))
        .collect();

    let mut report = RunReport::new("compare", master, config.echo());
    for (cells, ad) in results {
        report.metric_cells.extend(cells);
        report.ad_records.extend(ad);
    }
    Ok(report)
}

fn run_cell(
    config: &ExperimentConfig,
    donor_ctx: &DonorContext,
    acceptor: &DatasetBundle,
    key: &CellKey,
    master: u64,
) -> (Vec<MetricCell>, Option<AdRecord>) {
    let split = match cell_split(acceptor, key, master) {
        Ok(split) => split,
        Err(e) => {
            // The whole cell fails; record all three arms with the reason.
            let failed = |kind| {
                let outcome = ArmOutcome {
                    metric_name: None,
                    value: None,
                    error: Some(format!("{e:#}")),
                };
                MetricCell {
                    n_test: 0,
                    ..make_cell(
                        key,
                        kind,
                        outcome,
                        &transmol::sampling::SplitResult {
                            train_ids: Vec::new(),
                            test_ids: Vec::new(),
                            split_property: key.property,
                            train_size: key.train_size,
                        },
                        "",
                    )
                }
            };
            return (
                vec![
                    failed(ModelKind::PureGcnn),
                    failed(ModelKind::Transfer),
                    failed(ModelKind::RandomForest),
                ],
                None,
            );
        }
    };
    let digest = ids_digest(&split.train_ids);
    let cell_seed = key.derived_seed(master);

    let pure = pure_arm(config, acceptor, &split, cell_seed);
    let transfer = transfer_arm(config, donor_ctx, acceptor, &split, cell_seed);
    let forest = forest_arm(config, acceptor, &split, cell_seed);

    let ad = ad_record_for_cell(key, config, donor_ctx.ad.as_ref(), acceptor, &split).ok();

    (
        vec![
            make_cell(key, ModelKind::PureGcnn, pure, &split, &digest),
            make_cell(key, ModelKind::Transfer, transfer, &split, &digest),
            make_cell(key, ModelKind::RandomForest, forest, &split, &digest),
        ],
        ad,
    )
}

//! `rank-splitters`: per train size, rank the splitting properties by the
//! transfer model's metric across the seed repetitions and report the sum of
//! places (lower = more consistently best).

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use transmol::analysis::rank_sum;
use transmol::transfer::WeightArchive;

use crate::config::ExperimentConfig;
use crate::report::{ids_digest, MetricCell, ModelKind, RankTable, RunReport};

use super::engine::{cell_grid, cell_split, make_cell, transfer_arm, DatasetBundle, DonorContext};

pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let properties = config.experiment.split_properties()?;
    if properties.len() < 2 {
        bail!("rank-splitters needs at least 2 split properties");
    }
    let archive_path = config
        .donor_archive
        .as_ref()
        .context("rank-splitters needs `donor_archive` (config key or --donor-archive)")?;
    let archive = WeightArchive::load(archive_path)?;
    let donor_ctx = DonorContext::new(archive);
    let acceptor = DatasetBundle::prepare(config.acceptor()?.resolve()?)?;
    let master = config.master_seed();

    let cells = cell_grid(
        &config.experiment.train_sizes,
        &properties,
        &config.experiment.seeds,
    );
    let results: Vec<MetricCell> = cells
        .par_iter()
        .map(|key| match cell_split(&acceptor, key, master) {
            Ok(split) => {
                let digest = ids_digest(&split.train_ids);
                let cell_seed = key.derived_seed(master);
                let outcome = transfer_arm(config, &donor_ctx, &acceptor, &split, cell_seed);
                make_cell(key, ModelKind::Transfer, outcome, &split, &digest)
            }
            Err(e) => MetricCell {
                cell_id: key.id(),
                train_size: key.train_size,
                split_property: key.property.to_string(),
                seed: key.seed,
                model_kind: ModelKind::Transfer,
                donor_size: None,
                metric_name: None,
                value: None,
                n_test: 0,
                train_ids_digest: String::new(),
                status: crate::report::CellStatus::Failed,
                error: Some(format!("{e:#}")),
            },
        })
        .collect();

    let mut report = RunReport::new("rank-splitters", master, config.echo());
    report.metric_cells = results;

    // One table per train size, built only when every cell of that size
    // succeeded (rank sums over incomplete matrices would be misleading).
    let metric_name = match acceptor.dataset.task {
        transmol::Task::Regression => "r2",
        transmol::Task::BinaryClassification => "roc_auc",
    };
    for &train_size in &config.experiment.train_sizes {
        let mut matrix: Vec<Vec<f64>> = Vec::with_capacity(properties.len());
        let mut complete = true;
        for property in &properties {
            let mut row = Vec::with_capacity(config.experiment.seeds.len());
            for &seed in &config.experiment.seeds {
                let found = report.metric_cells.iter().find(|c| {
                    c.train_size == train_size
                        && c.split_property == property.to_string()
                        && c.seed == seed
                });
                match found.and_then(|c| c.value) {
                    Some(v) => row.push(v),
                    None => {
                        complete = false;
                    }
                }
            }
            matrix.push(row);
        }
        if complete {
            let sums = rank_sum(&matrix)?;
            report.rank_tables.push(RankTable {
                train_size,
                metric_name: metric_name.into(),
                properties: properties.iter().map(|p| p.to_string()).collect(),
                rank_sums: sums,
                n_seeds: config.experiment.seeds.len(),
            });
        }
    }
    Ok(report)
}

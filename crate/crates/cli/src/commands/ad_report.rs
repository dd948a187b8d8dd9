//! `ad-report`: applicability-domain coverage of every cell's test set under
//! the acceptor-train domain alone and under the union rule with the donor
//! domain, plus per-molecule inclusion flags as a CSV artifact.

use anyhow::{Context, Result};
use rayon::prelude::*;

use transmol::appdomain::fit_ad_from_fps;
use transmol::fingerprint::Fingerprint;

use crate::config::ExperimentConfig;
use crate::report::{AdRecord, ArtifactRecord, RunReport};

use super::engine::{cell_grid, cell_split, CellKey, DatasetBundle, DonorAd, DonorContext};
use super::ensure_dir;

pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let out_dir = config.out_dir();
    ensure_dir(&out_dir)?;
    let acceptor = DatasetBundle::prepare(config.acceptor()?.resolve()?)?;
    let donor_ds = config
        .donor()
        .context("ad-report needs the [donor] section for the donor domain")?
        .resolve()?;
    // The archive is irrelevant here; reuse the donor-AD plumbing with a
    // placeholder-free constructor path.
    let donor_ad = donor_ad_only(&donor_ds, &acceptor, config.ad.k)?;

    let properties = config.experiment.split_properties()?;
    let cells = cell_grid(
        &config.experiment.train_sizes,
        &properties,
        &config.experiment.seeds,
    );
    let master = config.master_seed();

    let mut flag_rows: Vec<(String, String, bool, bool, bool)> = Vec::new();
    let mut records: Vec<AdRecord> = Vec::new();
    let results: Vec<Result<(AdRecord, Vec<(String, String, bool, bool, bool)>)>> = cells
        .par_iter()
        .map(|key| run_ad_cell(config, &donor_ad, &acceptor, key, master))
        .collect();
    for result in results {
        let (record, flags) = result?;
        records.push(record);
        flag_rows.extend(flags);
    }

    let flags_path = out_dir.join("ad_flags.csv");
    let mut writer = csv::Writer::from_path(&flags_path)?;
    writer.write_record(["cell_id", "id", "in_acceptor_ad", "in_donor_ad", "in_union_ad"])?;
    flag_rows.sort();
    for (cell, id, acc, don, uni) in &flag_rows {
        writer.write_record([
            cell.as_str(),
            id.as_str(),
            &acc.to_string(),
            &don.to_string(),
            &uni.to_string(),
        ])?;
    }
    writer.flush()?;

    let mut report = RunReport::new("ad-report", master, config.echo());
    report.ad_records = records;
    report.artifacts.push(ArtifactRecord {
        kind: "ad_flags_csv".into(),
        path: flags_path.display().to_string(),
    });
    Ok(report)
}

/// Donor AD context without any weight archive.
fn donor_ad_only(
    donor_ds: &transmol::sampling::Dataset,
    acceptor: &DatasetBundle,
    k: usize,
) -> Result<DonorAd> {
    let dummy = DonorContext::new(transmol::transfer::WeightArchive {
        format_version: transmol::transfer::ARCHIVE_FORMAT_VERSION,
        layers: Vec::new(),
        metadata: transmol::transfer::ArchiveMetadata {
            donor_dataset: donor_ds.name.clone(),
            seed: 0,
            epochs: 0,
            task: donor_ds.task,
            readout: transmol::neuralnet::Readout::Mean,
        },
    });
    let ctx = dummy.with_donor_ad(donor_ds, acceptor, k)?;
    Ok(ctx.ad.expect("with_donor_ad sets the domain"))
}

#[allow(clippy::type_complexity)]
fn run_ad_cell(
    config: &ExperimentConfig,
    donor_ad: &DonorAd,
    acceptor: &DatasetBundle,
    key: &CellKey,
    master: u64,
) -> Result<(AdRecord, Vec<(String, String, bool, bool, bool)>)> {
    let split = cell_split(acceptor, key, master)?;
    let train_fps: Vec<Fingerprint> = split
        .train_ids
        .iter()
        .map(|id| acceptor.fps4[id].clone())
        .collect();
    let acceptor_ad = fit_ad_from_fps(train_fps, config.ad.k)?;

    let mut flags = Vec::with_capacity(split.test_ids.len());
    let mut inside_acc = 0usize;
    let mut inside_donor = 0usize;
    let mut inside_union = 0usize;
    for id in &split.test_ids {
        let (acc, _) = acceptor_ad.in_domain_fp(&acceptor.fps4[id]);
        let don = donor_ad.included[id.as_str()];
        let uni = acc || don;
        inside_acc += usize::from(acc);
        inside_donor += usize::from(don);
        inside_union += usize::from(uni);
        flags.push((key.id(), id.clone(), acc, don, uni));
    }
    let n = split.test_ids.len() as f64;
    let acceptor_coverage = inside_acc as f64 / n;
    let union_coverage = inside_union as f64 / n;
    Ok((
        AdRecord {
            cell_id: key.id(),
            train_size: key.train_size,
            split_property: key.property.to_string(),
            seed: key.seed,
            acceptor_coverage,
            acceptor_d_train: acceptor_ad.d_train,
            donor_coverage: Some(inside_donor as f64 / n),
            donor_d_train: Some(donor_ad.d_train),
            union_coverage: Some(union_coverage),
            delta_coverage: Some(union_coverage - acceptor_coverage),
        },
        flags,
    ))
}

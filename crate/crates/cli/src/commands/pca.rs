//! `pca`: joint two-component projection of two datasets' fingerprints, with
//! optional axis-aligned box filtering into sub-datasets.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use transmol::analysis::pca_fit_transform;
use transmol::fingerprint::{ecfp, DEFAULT_N_BITS, RADIUS_ECFP4};
use transmol::molgraph::parse_smiles;
use transmol::sampling::{filter_by_pca_box, Dataset, PcaBox};
use transmol::Task;

use crate::report::{ArtifactRecord, PcaSummary, RunReport};

use super::ensure_dir;

#[derive(Debug, Clone, Serialize)]
pub struct PcaArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    pub bounds: Option<[f64; 4]>,
    pub box_max_n: usize,
    pub seed: u64,
}

pub fn run(args: &PcaArgs, out_dir: &Path) -> Result<RunReport> {
    ensure_dir(out_dir)?;
    let ds_a = Dataset::from_csv_path(&args.a, Task::Regression, stem(&args.a))?;
    let ds_b = Dataset::from_csv_path(&args.b, Task::Regression, stem(&args.b))?;
    let tag_a = ds_a.name.clone();
    let tag_b = if ds_b.name == ds_a.name {
        format!("{}_b", ds_b.name)
    } else {
        ds_b.name.clone()
    };

    // Composite ids keep the joint PCA input unique across datasets.
    let mut fps = Vec::with_capacity(ds_a.len() + ds_b.len());
    for (tag, ds) in [(&tag_a, &ds_a), (&tag_b, &ds_b)] {
        for rec in &ds.records {
            let mol = parse_smiles(&rec.smiles)
                .map_err(|e| anyhow::anyhow!("{tag} record {:?}: {e}", rec.id))?;
            let fp = ecfp(&mol, RADIUS_ECFP4, DEFAULT_N_BITS).expect("fixed parameters");
            fps.push((format!("{tag}\u{1f}{}", rec.id), fp));
        }
    }
    let projection = pca_fit_transform(&fps)?;

    let projection_path = out_dir.join("pca_projection.csv");
    let mut writer = csv::Writer::from_path(&projection_path)?;
    writer.write_record(["id", "x", "y", "dataset"])?;
    for (composite, x, y) in &projection.points {
        let (tag, id) = composite
            .split_once('\u{1f}')
            .context("composite id must contain the separator")?;
        writer.write_record([id, &format!("{x}"), &format!("{y}"), tag])?;
    }
    writer.flush()?;

    let mut report = RunReport::new(
        "pca",
        args.seed,
        serde_json::to_value(args).expect("args serialize"),
    );
    report.pca = Some(PcaSummary {
        explained_variance: projection.explained_variance,
        n_points: projection.points.len(),
    });
    report.artifacts.push(ArtifactRecord {
        kind: "pca_projection_csv".into(),
        path: projection_path.display().to_string(),
    });

    if let Some([xmin, xmax, ymin, ymax]) = args.bounds {
        if xmin > xmax || ymin > ymax {
            bail!("box bounds must satisfy xmin ≤ xmax and ymin ≤ ymax");
        }
        let bounds = PcaBox {
            xmin,
            xmax,
            ymin,
            ymax,
        };
        for (tag, ds, file) in [
            (&tag_a, &ds_a, "a_box.csv"),
            (&tag_b, &ds_b, "b_box.csv"),
        ] {
            let prefix = format!("{tag}\u{1f}");
            let projections: Vec<(String, f64, f64)> = projection
                .points
                .iter()
                .filter_map(|(composite, x, y)| {
                    composite
                        .strip_prefix(&prefix)
                        .map(|id| (id.to_string(), *x, *y))
                })
                .collect();
            let filtered = filter_by_pca_box(ds, &projections, bounds, args.box_max_n, args.seed)?;
            let path = out_dir.join(file);
            filtered.to_csv_path(&path)?;
            report.artifacts.push(ArtifactRecord {
                kind: "box_filtered_csv".into(),
                path: path.display().to_string(),
            });
        }
    }
    Ok(report)
}

fn stem(path: &Path) -> &str {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
}

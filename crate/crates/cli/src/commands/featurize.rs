//! `featurize`: descriptors or fingerprint bit lists for a dataset CSV.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use transmol::fingerprint::ecfp;
use transmol::molgraph::{compute_descriptors, parse_smiles};
use transmol::sampling::Dataset;
use transmol::Task;

use crate::report::{ArtifactRecord, RunReport};

#[derive(Debug, Clone, Serialize)]
pub struct FeaturizeArgs {
    pub input: PathBuf,
    pub what: String,
    pub radius: u32,
    pub bits: usize,
    pub out: PathBuf,
}

pub fn run(args: &FeaturizeArgs, out_dir: &Path) -> Result<RunReport> {
    let ds = Dataset::from_csv_path(&args.input, Task::Regression, "featurize-input")?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("opening {}", args.out.display()))?;
    match args.what.as_str() {
        "descriptors" => {
            writer.write_record([
                "id",
                "molecular_weight",
                "aromatic_rings",
                "rotatable_bonds",
                "hba",
                "hbd",
                "heterocycles",
                "tpsa",
            ])?;
            for rec in &ds.records {
                let mol = parse_smiles(&rec.smiles)
                    .map_err(|e| anyhow::anyhow!("record {:?}: {e}", rec.id))?;
                let d = compute_descriptors(&mol);
                writer.write_record([
                    rec.id.as_str(),
                    &format!("{}", d.molecular_weight),
                    &d.aromatic_rings.to_string(),
                    &d.rotatable_bonds.to_string(),
                    &d.hba.to_string(),
                    &d.hbd.to_string(),
                    &d.heterocycles.to_string(),
                    &format!("{}", d.tpsa),
                ])?;
            }
        }
        "fingerprints" => {
            writer.write_record(["id", "n_set", "bits"])?;
            for rec in &ds.records {
                let mol = parse_smiles(&rec.smiles)
                    .map_err(|e| anyhow::anyhow!("record {:?}: {e}", rec.id))?;
                let fp = ecfp(&mol, args.radius, args.bits)?;
                let bits: Vec<String> =
                    fp.set_bits().into_iter().map(|b| b.to_string()).collect();
                writer.write_record([
                    rec.id.as_str(),
                    &fp.n_set().to_string(),
                    &bits.join(" "),
                ])?;
            }
        }
        other => bail!("unknown featurize target {other:?}; use descriptors|fingerprints"),
    }
    writer.flush()?;

    let mut report = RunReport::new(
        "featurize",
        0,
        serde_json::to_value(args).expect("args serialize"),
    );
    report.artifacts.push(ArtifactRecord {
        kind: format!("{}_csv", args.what),
        path: args.out.display().to_string(),
    });
    let _ = out_dir;
    Ok(report)
}

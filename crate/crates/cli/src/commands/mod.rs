//! Subcommand implementations. Each returns a [`RunReport`]; `main` writes
//! it and derives the exit code from the failed-cell count.

pub mod ad_report;
pub mod compare;
pub mod donor_size_sweep;
pub mod engine;
pub mod featurize;
pub mod generate;
pub mod pca;
pub mod rank_splitters;
pub mod train_donor;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::report::RunReport;

/// Finalizes and writes a report under the output directory.
pub fn write_report(mut report: RunReport, out_dir: &Path) -> Result<(RunReport, PathBuf)> {
    report.finalize();
    let path = RunReport::default_path(out_dir, &report.command);
    report.write(&path)?;
    Ok((report, path))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

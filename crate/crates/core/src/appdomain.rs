//! Applicability-domain estimation by average k-nearest-neighbor distance.
//!
//! Fit: for every training molecule, the average Tanimoto distance (over
//! radius-2 fingerprints) to its k' nearest other training molecules, with
//! k' = min(k, n−1); the domain threshold is the mean of those averages.
//! Query: a molecule is inside the domain when its average distance to the
//! k' nearest training molecules is strictly below the threshold.

use thiserror::Error;

use crate::fingerprint::{ecfp, tanimoto_distance, Fingerprint, DEFAULT_N_BITS, RADIUS_ECFP4};
use crate::molgraph::{MolecularGraph, SmilesError};
use crate::sampling::Dataset;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("applicability domain needs at least 2 training molecules, got {0}")]
    TooFewMolecules(usize),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("record {id:?}: {source}")]
    Parse { id: String, source: SmilesError },
    #[error("test set is empty")]
    EmptyTestSet,
}

#[derive(Debug, Clone)]
pub struct AdModel {
    pub train_fps: Vec<Fingerprint>,
    pub k: usize,
    pub d_train: f64,
    pub per_train_avg: Vec<f64>,
}

/// Average of the `k_eff` smallest entries.
fn avg_k_smallest(distances: &mut Vec<f64>, k_eff: usize) -> f64 {
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distances.iter().take(k_eff).sum::<f64>() / k_eff as f64
}

pub fn fit_ad(train: &[MolecularGraph], k: usize) -> Result<AdModel, AdError> {
    if k == 0 {
        return Err(AdError::InvalidK);
    }
    if train.len() < 2 {
        return Err(AdError::TooFewMolecules(train.len()));
    }
    let fps: Vec<Fingerprint> = train
        .iter()
        .map(|mol| ecfp(mol, RADIUS_ECFP4, DEFAULT_N_BITS).expect("fixed valid parameters"))
        .collect();
    fit_ad_from_fps(fps, k)
}

/// Fit from precomputed radius-2 fingerprints (same contract as [`fit_ad`]).
pub fn fit_ad_from_fps(fps: Vec<Fingerprint>, k: usize) -> Result<AdModel, AdError> {
    if k == 0 {
        return Err(AdError::InvalidK);
    }
    let n = fps.len();
    if n < 2 {
        return Err(AdError::TooFewMolecules(n));
    }
    let k_eff = k.min(n - 1);
    let mut per_train_avg = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| tanimoto_distance(&fps[i], &fps[j]).expect("equal widths"))
            .collect();
        per_train_avg.push(avg_k_smallest(&mut dists, k_eff));
    }
    let d_train = per_train_avg.iter().sum::<f64>() / n as f64;
    Ok(AdModel {
        train_fps: fps,
        k,
        d_train,
        per_train_avg,
    })
}

impl AdModel {
    /// Effective neighbor count: min(k, n−1), mirroring the fit so train and
    /// query distances stay comparable on small sets.
    pub fn effective_k(&self) -> usize {
        self.k.min(self.train_fps.len() - 1)
    }

    /// (included, d_n) for a query molecule; inclusion is the strict
    /// comparison d_n < d_train.
    pub fn in_domain(&self, mol: &MolecularGraph) -> (bool, f64) {
        let fp = ecfp(mol, RADIUS_ECFP4, DEFAULT_N_BITS).expect("fixed valid parameters");
        self.in_domain_fp(&fp)
    }

    pub fn in_domain_fp(&self, fp: &Fingerprint) -> (bool, f64) {
        let mut dists: Vec<f64> = self
            .train_fps
            .iter()
            .map(|t| tanimoto_distance(fp, t).expect("equal widths"))
            .collect();
        let d_n = avg_k_smallest(&mut dists, self.effective_k());
        (d_n < self.d_train, d_n)
    }

    /// Fraction of test molecules inside the domain.
    pub fn coverage(&self, test: &Dataset) -> Result<f64, AdError> {
        let flags = self.coverage_flags(test)?;
        let inside = flags.iter().filter(|(_, included, _)| *included).count();
        Ok(inside as f64 / flags.len() as f64)
    }

    /// Per-molecule (id, included, d_n) over a dataset.
    pub fn coverage_flags(
        &self,
        test: &Dataset,
    ) -> Result<Vec<(String, bool, f64)>, AdError> {
        if test.is_empty() {
            return Err(AdError::EmptyTestSet);
        }
        test.records
            .iter()
            .map(|rec| {
                let mol = crate::molgraph::parse_smiles(&rec.smiles).map_err(|source| {
                    AdError::Parse {
                        id: rec.id.clone(),
                        source,
                    }
                })?;
                let (included, d_n) = self.in_domain(&mol);
                Ok((rec.id.clone(), included, d_n))
            })
            .collect()
    }
}

//! Evaluation metrics, fingerprint PCA, and rank-sum aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fingerprint;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("input lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("true values have zero variance; R² undefined")]
    ZeroVariance,
    #[error("ROC AUC needs both classes present")]
    OneClassOnly,
    #[error("PCA needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("power iteration did not converge within {0} iterations")]
    ConvergenceError(usize),
    #[error("rank-sum input malformed: {0}")]
    ShapeError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    R2,
    RocAuc,
}

impl std::fmt::Display for MetricName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricName::R2 => write!(f, "r2"),
            MetricName::RocAuc => write!(f, "roc_auc"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: MetricName,
    pub value: f64,
    pub n: usize,
}

/// Coefficient of determination: 1 − SS_res/SS_tot about the mean of
/// `y_true`. May be negative; 1 is perfect.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64, AnalysisError> {
    if y_true.len() != y_pred.len() {
        return Err(AnalysisError::LengthMismatch {
            a: y_true.len(),
            b: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(AnalysisError::LengthMismatch { a: 0, b: 0 });
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Rank-based ROC AUC; tied scores contribute one half per tied
/// positive–negative pair, matching the brute-force pair count
/// (wins + ties/2) / (P·N) exactly.
pub fn roc_auc(y_true: &[bool], scores: &[f64]) -> Result<f64, AnalysisError> {
    if y_true.len() != scores.len() {
        return Err(AnalysisError::LengthMismatch {
            a: y_true.len(),
            b: scores.len(),
        });
    }
    let pos = y_true.iter().filter(|&&y| y).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AnalysisError::OneClassOnly);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Mean ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if y_true[idx] {
                rank_sum_pos += mean_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Two-component PCA of fingerprints treated as points in {0,1}^n_bits.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
    pub explained_variance: [f64; 2],
    pub points: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct PcaOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions {
            max_iterations: 1000,
            tolerance: 1e-9,
        }
    }
}

/// Mean-centers the data and extracts the top two principal directions by
/// power iteration with deflation. Covariance–vector products are computed
/// implicitly as X_cᵀ(X_c v)/n, so the n_bits × n_bits covariance is never
/// formed. Component signs are fixed so the largest-magnitude coordinate is
/// positive.
pub fn pca_fit_transform(
    fps: &[(String, Fingerprint)],
) -> Result<PcaProjection, AnalysisError> {
    pca_fit_transform_with(fps, PcaOptions::default())
}

pub fn pca_fit_transform_with(
    fps: &[(String, Fingerprint)],
    opts: PcaOptions,
) -> Result<PcaProjection, AnalysisError> {
    let n = fps.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    let dim = fps[0].1.len();
    for (_, fp) in fps {
        if fp.len() != dim {
            return Err(AnalysisError::LengthMismatch {
                a: dim,
                b: fp.len(),
            });
        }
    }

    let rows: Vec<Vec<usize>> = fps.iter().map(|(_, fp)| fp.set_bits()).collect();
    let mut mean = vec![0.0; dim];
    for bits in &rows {
        for &b in bits {
            mean[b] += 1.0;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Implicit covariance product: C v = X_cᵀ (X_c v) / n, with the
    // already-found component deflated away.
    let cov_product = |v: &[f64], deflate: Option<(&[f64], f64)>| -> Vec<f64> {
        let mean_dot_v: f64 = mean.iter().zip(v).map(|(m, x)| m * x).sum();
        let mut out = vec![0.0; dim];
        let mut s_total = 0.0;
        for bits in &rows {
            let s: f64 = bits.iter().map(|&b| v[b]).sum::<f64>() - mean_dot_v;
            s_total += s;
            for &b in bits {
                out[b] += s;
            }
        }
        for (o, m) in out.iter_mut().zip(&mean) {
            *o = (*o - m * s_total) / n as f64;
        }
        if let Some((u, lambda)) = deflate {
            let u_dot_v: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            for (o, ui) in out.iter_mut().zip(u) {
                *o -= lambda * u_dot_v * ui;
            }
        }
        out
    };

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut eigenvalues = [0.0f64; 2];
    for comp_idx in 0..2 {
        let deflate = if comp_idx == 1 {
            Some((components[0].as_slice(), eigenvalues[0]))
        } else {
            None
        };
        // Deterministic pseudo-random start vector.
        let mut v: Vec<f64> = (0..dim)
            .map(|i| {
                let h = crate::hash::mix64(i as u64 ^ 0x5eed_0000 ^ comp_idx as u64);
                (h as f64 / u64::MAX as f64) - 0.5
            })
            .collect();
        normalize(&mut v);

        let mut converged = false;
        for _ in 0..opts.max_iterations {
            let mut next = cov_product(&v, deflate);
            let norm = vec_norm(&next);
            if norm < 1e-14 {
                // Rank-deficient direction: eigenvalue is zero; pick a
                // deterministic unit vector orthogonal to earlier components.
                next = orthonormal_fallback(dim, &components);
                v = next;
                converged = true;
                break;
            }
            for x in &mut next {
                *x /= norm;
            }
            // Sign-align before measuring the change.
            let dot: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                for x in &mut next {
                    *x = -*x;
                }
            }
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            v = next;
            if delta < opts.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(AnalysisError::ConvergenceError(opts.max_iterations));
        }
        let cv = cov_product(&v, deflate);
        let lambda: f64 = v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>().max(0.0);

        // Fix sign: largest-magnitude coordinate positive.
        let (max_idx, _) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, &x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        });
        if v[max_idx] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        eigenvalues[comp_idx] = lambda;
        components.push(v);
    }
    // Power iteration returns them largest-first; guard the invariant against
    // round-off on (near-)degenerate spectra.
    eigenvalues[1] = eigenvalues[1].min(eigenvalues[0]);

    let points = fps
        .iter()
        .zip(&rows)
        .map(|((id, _), bits)| {
            let project = |c: &[f64]| {
                let on: f64 = bits.iter().map(|&b| c[b]).sum();
                let mean_dot: f64 = mean.iter().zip(c).map(|(m, x)| m * x).sum();
                on - mean_dot
            };
            (
                id.clone(),
                project(&components[0]),
                project(&components[1]),
            )
        })
        .collect();

    Ok(PcaProjection {
        components: [components[0].clone(), components[1].clone()],
        mean,
        explained_variance: eigenvalues,
        points,
    })
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let norm = vec_norm(v);
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// First standard basis vector orthogonalized against `existing`; used when a
/// deflated direction has zero variance.
fn orthonormal_fallback(dim: usize, existing: &[Vec<f64>]) -> Vec<f64> {
    for basis_idx in 0..dim {
        let mut v = vec![0.0; dim];
        v[basis_idx] = 1.0;
        for comp in existing {
            let dot: f64 = comp.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (x, c) in v.iter_mut().zip(comp) {
                *x -= dot * c;
            }
        }
        let norm = vec_norm(&v);
        if norm > 1e-6 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

/// Sum-of-places aggregation. `results[property][repetition]` holds one
/// metric value per cell; within each repetition properties are ranked by
/// metric descending (rank 1 = best, ties share the mean rank) and the
/// output is each property's rank total across repetitions. Lower is better.
pub fn rank_sum(results: &[Vec<f64>]) -> Result<Vec<f64>, AnalysisError> {
    if results.len() < 2 {
        return Err(AnalysisError::ShapeError(format!(
            "need at least 2 properties, got {}",
            results.len()
        )));
    }
    let reps = results[0].len();
    if reps == 0 {
        return Err(AnalysisError::ShapeError("zero repetitions".into()));
    }
    for (i, row) in results.iter().enumerate() {
        if row.len() != reps {
            return Err(AnalysisError::ShapeError(format!(
                "property {i} has {} repetitions, expected {reps}",
                row.len()
            )));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(AnalysisError::ShapeError(format!(
                "property {i} contains NaN"
            )));
        }
    }

    let n_props = results.len();
    let mut sums = vec![0.0; n_props];
    for rep in 0..reps {
        let mut order: Vec<usize> = (0..n_props).collect();
        // Descending by metric value.
        order.sort_by(|&a, &b| results[b][rep].partial_cmp(&results[a][rep]).unwrap());
        let mut i = 0;
        while i < n_props {
            let mut j = i;
            while j < n_props && results[order[j]][rep] == results[order[i]][rep] {
                j += 1;
            }
            let mean_rank = (i + 1 + j) as f64 / 2.0;
            for &prop in &order[i..j] {
                sums[prop] += mean_rank;
            }
            i = j;
        }
    }
    Ok(sums)
}

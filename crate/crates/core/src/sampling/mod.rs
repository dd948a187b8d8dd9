//! Dataset composition: diversity subsets, endpoint binarization, and
//! PCA-region filtering.

mod dataset;

pub use dataset::{Dataset, Record};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::molgraph::{compute_descriptors, parse_smiles, SmilesError};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("requested subset of {k} from only {n} values")]
    KTooLarge { k: usize, n: usize },
    #[error("no record projects into the requested box")]
    EmptyRegion,
    #[error("duplicate record id {id:?}")]
    DuplicateId { id: String },
    #[error("record {id:?} has a non-finite target")]
    NonFiniteTarget { id: String },
    #[error("record {id:?} has classification label {value}, expected 0 or 1")]
    BadLabel { id: String, value: f64 },
    #[error("record {id:?} has unparseable target {raw:?}")]
    BadTargetValue { id: String, raw: String },
    #[error("CSV header must be id,smiles,target; found {found:?}")]
    BadHeader { found: String },
    #[error("record {id:?} is not in the projection list")]
    MissingProjection { id: String },
    #[error("record {id:?}: {source}")]
    Parse { id: String, source: SmilesError },
    #[error("non-finite property value for id {id:?}")]
    NonFiniteProperty { id: String },
    #[error("binarization requires a regression dataset")]
    NotRegression,
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(String),
}

/// The splitting properties studied by the experiment runner. `Endpoint`
/// reads the target column; `Random` ignores values and samples uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProperty {
    Endpoint,
    MolecularWeight,
    AromaticRings,
    RotatableBonds,
    Hba,
    Hbd,
    Heterocycles,
    Tpsa,
    Random,
}

impl SplitProperty {
    pub const ALL_DESCRIPTORS: [SplitProperty; 7] = [
        SplitProperty::MolecularWeight,
        SplitProperty::AromaticRings,
        SplitProperty::RotatableBonds,
        SplitProperty::Hba,
        SplitProperty::Hbd,
        SplitProperty::Heterocycles,
        SplitProperty::Tpsa,
    ];
}

impl SplitProperty {
    pub fn name(&self) -> &'static str {
        match self {
            SplitProperty::Endpoint => "endpoint",
            SplitProperty::MolecularWeight => "molecular_weight",
            SplitProperty::AromaticRings => "aromatic_rings",
            SplitProperty::RotatableBonds => "rotatable_bonds",
            SplitProperty::Hba => "hba",
            SplitProperty::Hbd => "hbd",
            SplitProperty::Heterocycles => "heterocycles",
            SplitProperty::Tpsa => "tpsa",
            SplitProperty::Random => "random",
        }
    }
}

impl std::fmt::Display for SplitProperty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for SplitProperty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "endpoint" => SplitProperty::Endpoint,
            "molecular_weight" => SplitProperty::MolecularWeight,
            "aromatic_rings" => SplitProperty::AromaticRings,
            "rotatable_bonds" => SplitProperty::RotatableBonds,
            "hba" => SplitProperty::Hba,
            "hbd" => SplitProperty::Hbd,
            "heterocycles" => SplitProperty::Heterocycles,
            "tpsa" => SplitProperty::Tpsa,
            "random" => SplitProperty::Random,
            other => return Err(format!("unknown split property: {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub split_property: SplitProperty,
    pub train_size: usize,
}

/// Greedy max-min diversity selection on a one-dimensional property.
///
/// The first pick is the minimum value, the second the maximum; every further
/// pick maximizes the minimum absolute difference to the already-selected
/// values. Ties break toward the smaller value, then the smaller id.
/// Returns ids in pick order, so the result for k is a prefix-superset of the
/// result for k−1.
pub fn maxmin_select(values: &[(String, f64)], k: usize) -> Result<Vec<String>, SamplingError> {
    if k > values.len() {
        return Err(SamplingError::KTooLarge {
            k,
            n: values.len(),
        });
    }
    for (id, v) in values {
        if !v.is_finite() {
            return Err(SamplingError::NonFiniteProperty { id: id.clone() });
        }
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut min_dist = vec![f64::INFINITY; values.len()];
    let mut chosen = vec![false; values.len()];

    // First pick: smallest value, id as tiebreak.
    let first = (0..values.len())
        .min_by(|&a, &b| {
            values[a]
                .1
                .partial_cmp(&values[b].1)
                .unwrap()
                .then_with(|| values[a].0.cmp(&values[b].0))
        })
        .unwrap();
    selected.push(first);
    chosen[first] = true;

    while selected.len() < k {
        let last = *selected.last().unwrap();
        for i in 0..values.len() {
            if !chosen[i] {
                let d = (values[i].1 - values[last].1).abs();
                if d < min_dist[i] {
                    min_dist[i] = d;
                }
            }
        }
        // Higher min-distance wins; ties go to the smaller value, then the
        // smaller id.
        let mut best: Option<usize> = None;
        for i in 0..values.len() {
            if chosen[i] {
                continue;
            }
            let replace = match best {
                None => true,
                Some(b) => {
                    min_dist[i] > min_dist[b]
                        || (min_dist[i] == min_dist[b]
                            && (values[i].1 < values[b].1
                                || (values[i].1 == values[b].1 && values[i].0 < values[b].0)))
                }
            };
            if replace {
                best = Some(i);
            }
        }
        let pick = best.unwrap();
        selected.push(pick);
        chosen[pick] = true;
    }

    Ok(selected
        .into_iter()
        .map(|i| values[i].0.clone())
        .collect())
}

/// Property values for each record; parses SMILES when a descriptor is
/// requested, tagging failures with the offending id.
pub fn property_values(
    ds: &Dataset,
    property: SplitProperty,
) -> Result<Vec<(String, f64)>, SamplingError> {
    ds.records
        .iter()
        .map(|rec| {
            let value = match property {
                SplitProperty::Endpoint => rec.target,
                SplitProperty::Random => 0.0,
                _ => {
                    let mol = parse_smiles(&rec.smiles).map_err(|source| {
                        SamplingError::Parse {
                            id: rec.id.clone(),
                            source,
                        }
                    })?;
                    let d = compute_descriptors(&mol);
                    match property {
                        SplitProperty::MolecularWeight => d.molecular_weight,
                        SplitProperty::AromaticRings => d.aromatic_rings as f64,
                        SplitProperty::RotatableBonds => d.rotatable_bonds as f64,
                        SplitProperty::Hba => d.hba as f64,
                        SplitProperty::Hbd => d.hbd as f64,
                        SplitProperty::Heterocycles => d.heterocycles as f64,
                        SplitProperty::Tpsa => d.tpsa,
                        SplitProperty::Endpoint | SplitProperty::Random => unreachable!(),
                    }
                }
            };
            Ok((rec.id.clone(), value))
        })
        .collect()
}

/// Train/test split with the max-min diverse subset as the training set.
/// `seed` only matters for [`SplitProperty::Random`].
pub fn diversity_split(
    ds: &Dataset,
    property: SplitProperty,
    k: usize,
    seed: u64,
) -> Result<SplitResult, SamplingError> {
    if k > ds.len() {
        return Err(SamplingError::KTooLarge { k, n: ds.len() });
    }
    let train_ids: Vec<String> = match property {
        SplitProperty::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut indices: Vec<usize> = (0..ds.len()).collect();
            indices.shuffle(&mut rng);
            indices
                .into_iter()
                .take(k)
                .map(|i| ds.records[i].id.clone())
                .collect()
        }
        _ => maxmin_select(&property_values(ds, property)?, k)?,
    };
    let train_set: std::collections::BTreeSet<&str> =
        train_ids.iter().map(String::as_str).collect();
    let test_ids = ds
        .records
        .iter()
        .filter(|r| !train_set.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    Ok(SplitResult {
        train_ids,
        test_ids,
        split_property: property,
        train_size: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PositiveWhen {
    #[serde(rename = "le")]
    LessOrEqual,
    #[serde(rename = "ge")]
    GreaterOrEqual,
}

/// Threshold a regression endpoint into {0,1} labels; the threshold and
/// direction are recorded in the dataset name.
pub fn binarize_endpoint(
    ds: &Dataset,
    threshold: f64,
    positive_when: PositiveWhen,
) -> Result<Dataset, SamplingError> {
    if ds.task != crate::task::Task::Regression {
        return Err(SamplingError::NotRegression);
    }
    let records = ds
        .records
        .iter()
        .map(|rec| {
            let hit = match positive_when {
                PositiveWhen::LessOrEqual => rec.target <= threshold,
                PositiveWhen::GreaterOrEqual => rec.target >= threshold,
            };
            Record {
                id: rec.id.clone(),
                smiles: rec.smiles.clone(),
                target: if hit { 1.0 } else { 0.0 },
            }
        })
        .collect();
    let op = match positive_when {
        PositiveWhen::LessOrEqual => "le",
        PositiveWhen::GreaterOrEqual => "ge",
    };
    Dataset::new(
        records,
        crate::task::Task::BinaryClassification,
        &format!("{}_bin_{op}_{threshold}", ds.name),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaBox {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl PcaBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }
}

/// Records whose projection lies in the closed box, subsampled uniformly to
/// at most `max_n` (seeded, order-preserving).
pub fn filter_by_pca_box(
    ds: &Dataset,
    projections: &[(String, f64, f64)],
    bounds: PcaBox,
    max_n: usize,
    seed: u64,
) -> Result<Dataset, SamplingError> {
    let lookup: std::collections::BTreeMap<&str, (f64, f64)> = projections
        .iter()
        .map(|(id, x, y)| (id.as_str(), (*x, *y)))
        .collect();
    let mut inside = Vec::new();
    for rec in &ds.records {
        let &(x, y) = lookup
            .get(rec.id.as_str())
            .ok_or_else(|| SamplingError::MissingProjection { id: rec.id.clone() })?;
        if bounds.contains(x, y) {
            inside.push(rec.clone());
        }
    }
    if inside.is_empty() {
        return Err(SamplingError::EmptyRegion);
    }
    if inside.len() > max_n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..inside.len()).collect();
        indices.shuffle(&mut rng);
        let mut keep: Vec<usize> = indices.into_iter().take(max_n).collect();
        keep.sort_unstable();
        inside = keep.into_iter().map(|i| inside[i].clone()).collect();
    }
    Dataset::new(inside, ds.task, &format!("{}_box", ds.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Task;

    fn values(xs: &[f64]) -> Vec<(String, f64)> {
        xs.iter()
            .enumerate()
            .map(|(i, &v)| (format!("r{i:02}"), v))
            .collect()
    }

    #[test]
    fn maxmin_seeds_with_extremes() {
        let vals = values(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let picked = maxmin_select(&vals, 2).unwrap();
        assert_eq!(picked, vec!["r00", "r09"]);
    }

    #[test]
    fn maxmin_third_pick_prefers_smaller_value_on_tie() {
        let vals = values(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let picked = maxmin_select(&vals, 3).unwrap();
        // 4 and 5 both have min-distance 4; smaller value wins.
        assert_eq!(picked, vec!["r00", "r09", "r04"]);
    }

    #[test]
    fn maxmin_k_equals_n_returns_everything() {
        let vals = values(&[3.0, 1.0, 2.0]);
        let picked = maxmin_select(&vals, 3).unwrap();
        let mut sorted = picked.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["r00", "r01", "r02"]);
    }

    #[test]
    fn maxmin_prefix_property() {
        let vals = values(&[0.3, 2.9, 7.1, 4.4, 9.0, 5.5, 1.2, 8.8, 0.0, 6.6]);
        let mut previous: Vec<String> = Vec::new();
        for k in 1..=vals.len() {
            let picked = maxmin_select(&vals, k).unwrap();
            assert_eq!(&picked[..k - 1], previous.as_slice(), "k = {k}");
            previous = picked;
        }
    }

    #[test]
    fn maxmin_k_too_large() {
        let vals = values(&[1.0]);
        assert!(matches!(
            maxmin_select(&vals, 2),
            Err(SamplingError::KTooLarge { k: 2, n: 1 })
        ));
    }

    #[test]
    fn maxmin_matches_exhaustive_greedy_oracle() {
        // Brute-force oracle: at each step, score every remaining candidate
        // by its distance to the selected set with full enumeration.
        let vals = values(&[0.77, 0.12, 0.55, 0.91, 0.33, 0.48, 0.02, 0.69, 0.21, 0.84, 0.40, 0.60]);
        for k in 1..=vals.len() {
            let fast = maxmin_select(&vals, k).unwrap();
            let oracle = oracle_greedy(&vals, k);
            assert_eq!(fast, oracle, "k = {k}");
        }
    }

    fn oracle_greedy(vals: &[(String, f64)], k: usize) -> Vec<String> {
        let mut selected: Vec<usize> = Vec::new();
        let n = vals.len();
        let first = (0..n)
            .min_by(|&a, &b| {
                vals[a]
                    .1
                    .partial_cmp(&vals[b].1)
                    .unwrap()
                    .then_with(|| vals[a].0.cmp(&vals[b].0))
            })
            .unwrap();
        selected.push(first);
        while selected.len() < k {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..n {
                if selected.contains(&i) {
                    continue;
                }
                let d = selected
                    .iter()
                    .map(|&s| (vals[i].1 - vals[s].1).abs())
                    .fold(f64::INFINITY, f64::min);
                let replace = match best {
                    None => true,
                    Some((b, bd)) => {
                        d > bd
                            || (d == bd
                                && (vals[i].1 < vals[b].1
                                    || (vals[i].1 == vals[b].1 && vals[i].0 < vals[b].0)))
                    }
                };
                if replace {
                    best = Some((i, d));
                }
            }
            selected.push(best.unwrap().0);
        }
        selected.into_iter().map(|i| vals[i].0.clone()).collect()
    }

    fn toy_dataset() -> Dataset {
        let records = (0..10)
            .map(|i| Record {
                id: format!("r{i:02}"),
                smiles: "C".repeat(i + 1),
                target: i as f64,
            })
            .collect();
        Dataset::new(records, Task::Regression, "toy").unwrap()
    }

    #[test]
    fn diversity_split_endpoint() {
        let ds = toy_dataset();
        let split = diversity_split(&ds, SplitProperty::Endpoint, 3, 0).unwrap();
        assert_eq!(split.train_ids, vec!["r00", "r09", "r04"]);
        assert_eq!(split.test_ids.len(), 7);
        assert_eq!(split.train_size, 3);
        // Exact partition.
        let mut all: Vec<&String> = split.train_ids.iter().chain(&split.test_ids).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn diversity_split_random_reproducible() {
        let ds = toy_dataset();
        let a = diversity_split(&ds, SplitProperty::Random, 4, 42).unwrap();
        let b = diversity_split(&ds, SplitProperty::Random, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = diversity_split(&ds, SplitProperty::Random, 4, 43).unwrap();
        assert_ne!(a.train_ids, c.train_ids);
    }

    #[test]
    fn diversity_split_parse_error_names_record() {
        let mut ds = toy_dataset();
        ds.records[3].smiles = "C1CC".into();
        let err = diversity_split(&ds, SplitProperty::MolecularWeight, 2, 0).unwrap_err();
        match err {
            SamplingError::Parse { id, .. } => assert_eq!(id, "r03"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn binarize_thresholds() {
        let ds = Dataset::new(
            vec![
                Record {
                    id: "x".into(),
                    smiles: "C".into(),
                    target: -1.0,
                },
                Record {
                    id: "y".into(),
                    smiles: "CC".into(),
                    target: 3.0,
                },
                Record {
                    id: "z".into(),
                    smiles: "CCC".into(),
                    target: 7.0,
                },
            ],
            Task::Regression,
            "t",
        )
        .unwrap();
        let out = binarize_endpoint(&ds, 5.0, PositiveWhen::LessOrEqual).unwrap();
        assert_eq!(out.targets(), vec![1.0, 1.0, 0.0]);
        assert_eq!(out.task, Task::BinaryClassification);
        assert!(out.name.contains("5"));

        // Threshold below the minimum: all ones under the ≥ rule.
        let all_ones = binarize_endpoint(&ds, -10.0, PositiveWhen::GreaterOrEqual).unwrap();
        assert!(all_ones.targets().iter().all(|&t| t == 1.0));
    }

    #[test]
    fn binarize_binary_dataset_idempotent_via_half_threshold() {
        let ds = Dataset::new(
            vec![
                Record {
                    id: "x".into(),
                    smiles: "C".into(),
                    target: 0.0,
                },
                Record {
                    id: "y".into(),
                    smiles: "CC".into(),
                    target: 1.0,
                },
            ],
            Task::Regression,
            "already",
        )
        .unwrap();
        let out = binarize_endpoint(&ds, 0.5, PositiveWhen::GreaterOrEqual).unwrap();
        assert_eq!(out.targets(), ds.targets());
    }

    #[test]
    fn pca_box_filter() {
        let ds = toy_dataset();
        let projections: Vec<(String, f64, f64)> = ds
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i as f64, -(i as f64)))
            .collect();

        // Box covering everything, max_n large: identity.
        let all = filter_by_pca_box(
            &ds,
            &projections,
            PcaBox {
                xmin: -1.0,
                xmax: 100.0,
                ymin: -100.0,
                ymax: 1.0,
            },
            100,
            0,
        )
        .unwrap();
        assert_eq!(all.len(), ds.len());

        // Box excluding everything errors.
        let err = filter_by_pca_box(
            &ds,
            &projections,
            PcaBox {
                xmin: 50.0,
                xmax: 60.0,
                ymin: 0.0,
                ymax: 1.0,
            },
            10,
            0,
        );
        assert!(matches!(err, Err(SamplingError::EmptyRegion)));

        // Subsampling is reproducible and respects max_n.
        let a = filter_by_pca_box(
            &ds,
            &projections,
            PcaBox {
                xmin: -1.0,
                xmax: 100.0,
                ymin: -100.0,
                ymax: 1.0,
            },
            4,
            7,
        )
        .unwrap();
        let b = filter_by_pca_box(
            &ds,
            &projections,
            PcaBox {
                xmin: -1.0,
                xmax: 100.0,
                ymin: -100.0,
                ymax: 1.0,
            },
            4,
            7,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn split_property_round_trips_names() {
        for p in [
            SplitProperty::Endpoint,
            SplitProperty::MolecularWeight,
            SplitProperty::AromaticRings,
            SplitProperty::RotatableBonds,
            SplitProperty::Hba,
            SplitProperty::Hbd,
            SplitProperty::Heterocycles,
            SplitProperty::Tpsa,
            SplitProperty::Random,
        ] {
            let text = p.to_string();
            let back: SplitProperty = text.parse().unwrap();
            assert_eq!(back, p);
        }
    }
}

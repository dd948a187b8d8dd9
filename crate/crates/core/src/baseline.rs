//! Random-forest baseline over radius-3 circular fingerprints.
//!
//! Trees are CART on binary features: a split tests one fingerprint bit, so
//! no threshold search is needed. Regression trees minimize child variance,
//! classification trees Gini impurity. Per-tree seeds derive from the master
//! seed, so trees can be grown in parallel without changing results.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fingerprint::{ecfp, Fingerprint, DEFAULT_N_BITS, RADIUS_ECFP6};
use crate::hash::derive_seed;
use crate::molgraph::{parse_smiles, MolecularGraph, SmilesError};
use crate::sampling::Dataset;
use crate::task::Task;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("need at least 2 training records, got {0}")]
    TooFewRecords(usize),
    #[error("record {id:?}: {source}")]
    Parse { id: String, source: SmilesError },
    #[error("invalid forest configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRule {
    /// √(n_features) candidate bits per split.
    Sqrt,
    /// Every bit is a candidate.
    All,
}

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeatureRule,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: FeatureRule::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        bit: usize,
        /// Child index for samples with the bit unset.
        left: usize,
        /// Child index for samples with the bit set.
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, fp: &Fingerprint) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { bit, left, right } => {
                    at = if fp.bit(*bit) { *right } else { *left };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    pub task: Task,
    pub n_bits: usize,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Fits the forest on the dataset's radius-3 fingerprints.
pub fn fit_forest(ds: &Dataset, config: &ForestConfig) -> Result<Forest, ForestError> {
    if ds.len() < 2 {
        return Err(ForestError::TooFewRecords(ds.len()));
    }
    if config.n_trees == 0 {
        return Err(ForestError::BadConfig("n_trees must be at least 1".into()));
    }
    if config.min_samples_leaf == 0 {
        return Err(ForestError::BadConfig(
            "min_samples_leaf must be at least 1".into(),
        ));
    }
    let fps: Vec<Fingerprint> = ds
        .records
        .iter()
        .map(|rec| {
            parse_smiles(&rec.smiles)
                .map(|mol| ecfp(&mol, RADIUS_ECFP6, DEFAULT_N_BITS).expect("fixed parameters"))
                .map_err(|source| ForestError::Parse {
                    id: rec.id.clone(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    let targets = ds.targets();
    Ok(fit_forest_from_fps(&fps, &targets, ds.task, config))
}

/// Fits from precomputed fingerprints; used by tests with synthetic bits.
pub fn fit_forest_from_fps(
    fps: &[Fingerprint],
    targets: &[f64],
    task: Task,
    config: &ForestConfig,
) -> Forest {
    let n_bits = fps.first().map_or(DEFAULT_N_BITS, Fingerprint::len);
    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(config.seed, &format!("tree/{t}"));
            grow_tree(fps, targets, task, config, n_bits, seed)
        })
        .collect();
    Forest {
        trees,
        task,
        n_bits,
    }
}

fn grow_tree(
    fps: &[Fingerprint],
    targets: &[f64],
    task: Task,
    config: &ForestConfig,
    n_bits: usize,
    seed: u64,
) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = fps.len();
    let sample: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut tree = Tree { nodes: Vec::new() };
    build_node(
        &mut tree, fps, targets, task, config, n_bits, sample, 0, &mut rng,
    );
    tree
}

fn leaf_value(indices: &[usize], targets: &[f64]) -> f64 {
    indices.iter().map(|&i| targets[i]).sum::<f64>() / indices.len() as f64
}

/// Sum of squared deviations (regression) or Gini·n (classification); both
/// are additive over children, so "impurity decrease" is parent − children.
fn impurity(indices: &[usize], targets: &[f64], task: Task) -> f64 {
    let n = indices.len() as f64;
    match task {
        Task::Regression => {
            let mean = leaf_value(indices, targets);
            indices.iter().map(|&i| (targets[i] - mean).powi(2)).sum()
        }
        Task::BinaryClassification => {
            let pos = indices.iter().filter(|&&i| targets[i] == 1.0).count() as f64;
            let p = pos / n;
            n * 2.0 * p * (1.0 - p)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    tree: &mut Tree,
    fps: &[Fingerprint],
    targets: &[f64],
    task: Task,
    config: &ForestConfig,
    n_bits: usize,
    indices: Vec<usize>,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let node_impurity = impurity(&indices, targets, task);
    let depth_capped = config.max_depth.is_some_and(|d| depth >= d);
    let too_small = indices.len() < 2 * config.min_samples_leaf;
    if node_impurity <= 1e-12 || depth_capped || too_small {
        let idx = tree.nodes.len();
        tree.nodes.push(Node::Leaf {
            value: leaf_value(&indices, targets),
        });
        return idx;
    }

    let limit = match config.features_per_split {
        FeatureRule::Sqrt => (n_bits as f64).sqrt().round().max(1.0) as usize,
        FeatureRule::All => n_bits,
    };
    let mut candidate_bits: Vec<usize> = (0..n_bits).collect();
    candidate_bits.shuffle(rng);

    // Scan the shuffled bits; non-constant candidates count toward the
    // budget, but keep scanning past it until one valid split is found so a
    // separable node is never forced into a mixed leaf.
    let mut best: Option<(f64, usize)> = None;
    let mut examined = 0usize;
    for &bit in &candidate_bits {
        if examined >= limit && best.is_some() {
            break;
        }
        let on_count = indices.iter().filter(|&&i| fps[i].bit(bit)).count();
        if on_count == 0 || on_count == indices.len() {
            continue;
        }
        examined += 1;
        if on_count < config.min_samples_leaf
            || indices.len() - on_count < config.min_samples_leaf
        {
            continue;
        }
        let (left, right): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| !fps[i].bit(bit));
        let decrease =
            node_impurity - impurity(&left, targets, task) - impurity(&right, targets, task);
        if decrease > 1e-12 && best.is_none_or(|(bd, _)| decrease > bd) {
            best = Some((decrease, bit));
        }
    }

    match best {
        None => {
            let idx = tree.nodes.len();
            tree.nodes.push(Node::Leaf {
                value: leaf_value(&indices, targets),
            });
            idx
        }
        Some((_, bit)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                indices.iter().partition(|&&i| !fps[i].bit(bit));
            let idx = tree.nodes.len();
            tree.nodes.push(Node::Leaf { value: 0.0 }); // placeholder
            let left = build_node(
                tree, fps, targets, task, config, n_bits, left_idx, depth + 1, rng,
            );
            let right = build_node(
                tree, fps, targets, task, config, n_bits, right_idx, depth + 1, rng,
            );
            tree.nodes[idx] = Node::Split { bit, left, right };
            idx
        }
    }
}

/// Mean of tree outputs: a regression value, or a positive-class score in
/// [0,1] for classification.
pub fn predict_forest(forest: &Forest, mol: &MolecularGraph) -> f64 {
    let fp = ecfp(mol, RADIUS_ECFP6, forest.n_bits).expect("fixed parameters");
    predict_forest_fp(forest, &fp)
}

pub fn predict_forest_fp(forest: &Forest, fp: &Fingerprint) -> f64 {
    forest.trees.iter().map(|t| t.predict(fp)).sum::<f64>() / forest.trees.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Record;

    fn dataset(rows: &[(&str, f64)]) -> Dataset {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (smiles, target))| Record {
                id: format!("r{i:03}"),
                smiles: (*smiles).to_string(),
                target: *target,
            })
            .collect();
        Dataset::new(records, Task::Regression, "rf-test").unwrap()
    }

    #[test]
    fn constant_targets_give_single_leaf_trees() {
        let ds = dataset(&[("CCO", 2.5), ("CCC", 2.5), ("c1ccccc1", 2.5), ("CCN", 2.5)]);
        let config = ForestConfig {
            n_trees: 10,
            ..ForestConfig::default()
        };
        let forest = fit_forest(&ds, &config).unwrap();
        for tree in &forest.trees {
            assert_eq!(tree.nodes.len(), 1);
            assert!(matches!(tree.nodes[0], Node::Leaf { value } if value == 2.5));
        }
    }

    #[test]
    fn memorizes_distinct_fingerprints_without_bootstrap() {
        let rows = [
            ("CCO", 1.0),
            ("CCC", 2.0),
            ("c1ccccc1", 3.0),
            ("CCN", 4.0),
            ("CC(=O)O", 5.0),
            ("C1CCOC1", 6.0),
        ];
        let ds = dataset(&rows);
        let config = ForestConfig {
            n_trees: 5,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let forest = fit_forest(&ds, &config).unwrap();
        for (smiles, target) in rows {
            let mol = parse_smiles(smiles).unwrap();
            let pred = predict_forest(&forest, &mol);
            assert!(
                (pred - target).abs() < 1e-12,
                "{smiles}: {pred} vs {target}"
            );
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let ds = dataset(&[
            ("CCO", 1.0),
            ("CCC", 2.0),
            ("c1ccccc1", 3.0),
            ("CCN", 4.0),
            ("CCCC", 2.2),
            ("COC", 1.4),
        ]);
        let config = ForestConfig {
            n_trees: 20,
            seed: 99,
            ..ForestConfig::default()
        };
        let f1 = fit_forest(&ds, &config).unwrap();
        let f2 = fit_forest(&ds, &config).unwrap();
        for probe in ["CC(C)O", "c1ccncc1", "CCCCO"] {
            let mol = parse_smiles(probe).unwrap();
            assert_eq!(predict_forest(&f1, &mol), predict_forest(&f2, &mol));
        }
    }

    #[test]
    fn regression_predictions_within_target_range() {
        let ds = dataset(&[
            ("CCO", -3.0),
            ("CCC", 2.0),
            ("c1ccccc1", 7.5),
            ("CCN", 4.0),
            ("CCCC", 0.0),
        ]);
        let forest = fit_forest(&ds, &ForestConfig::default()).unwrap();
        for probe in ["CC(C)O", "c1ccncc1", "CCCCO", "C"] {
            let mol = parse_smiles(probe).unwrap();
            let pred = predict_forest(&forest, &mol);
            assert!((-3.0..=7.5).contains(&pred), "{probe}: {pred}");
        }
    }

    #[test]
    fn classification_scores_in_unit_interval() {
        let records = vec![
            ("CCO", 0.0),
            ("CCC", 0.0),
            ("CCN", 0.0),
            ("c1ccccc1", 1.0),
            ("c1ccncc1", 1.0),
            ("Cc1ccccc1", 1.0),
        ];
        let ds = Dataset::new(
            records
                .iter()
                .enumerate()
                .map(|(i, (s, t))| Record {
                    id: format!("c{i}"),
                    smiles: (*s).to_string(),
                    target: *t,
                })
                .collect(),
            Task::BinaryClassification,
            "cls",
        )
        .unwrap();
        let forest = fit_forest(&ds, &ForestConfig::default()).unwrap();
        for probe in ["CCCO", "c1ccc(C)cc1", "C"] {
            let mol = parse_smiles(probe).unwrap();
            let score = predict_forest(&forest, &mol);
            assert!((0.0..=1.0).contains(&score));
        }
    }

    #[test]
    fn prediction_invariant_to_tree_order() {
        let ds = dataset(&[
            ("CCO", 1.0),
            ("CCC", 2.0),
            ("c1ccccc1", 3.0),
            ("CCN", 4.0),
        ]);
        let mut forest = fit_forest(&ds, &ForestConfig::default()).unwrap();
        let mol = parse_smiles("CC(C)O").unwrap();
        let before = predict_forest(&forest, &mol);
        forest.trees.reverse();
        let after = predict_forest(&forest, &mol);
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn duplicating_a_record_does_not_hurt_its_own_prediction() {
        let base = dataset(&[
            ("CCO", 1.0),
            ("CCC", 5.0),
            ("c1ccccc1", 3.0),
            ("CCN", 4.0),
        ]);
        let config = ForestConfig {
            n_trees: 50,
            seed: 3,
            ..ForestConfig::default()
        };
        let f_base = fit_forest(&base, &config).unwrap();
        let mol = parse_smiles("CCO").unwrap();
        let err_base = (predict_forest(&f_base, &mol) - 1.0).abs();

        let mut rows = base.records.clone();
        for dup in 0..3 {
            rows.push(Record {
                id: format!("dup{dup}"),
                smiles: "CCO".into(),
                target: 1.0,
            });
        }
        let grown = Dataset::new(rows, Task::Regression, "grown").unwrap();
        let f_grown = fit_forest(&grown, &config).unwrap();
        let err_grown = (predict_forest(&f_grown, &mol) - 1.0).abs();
        assert!(err_grown <= err_base + 1e-9);
    }

    #[test]
    fn parse_errors_name_the_record() {
        let ds = dataset(&[("CCO", 1.0), ("C1CC", 2.0)]);
        match fit_forest(&ds, &ForestConfig::default()) {
            Err(ForestError::Parse { id, .. }) => assert_eq!(id, "r001"),
            other => panic!("unexpected: {other:?}"),
        }
    }
}

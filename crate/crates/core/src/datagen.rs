//! Synthetic molecule and label generation.
//!
//! Molecules are random heavy-atom trees over C/N/O/S with optional aromatic
//! six-ring attachments (benzene- or pyridine-like), built so every emitted
//! SMILES parses and respects valence. Labels come from a small registry of
//! descriptor formulas plus optional Gaussian noise, which gives the
//! donor/acceptor experiments a controllable notion of task relatedness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::molgraph::{compute_descriptors, parse_smiles, DescriptorVector};
use crate::sampling::{Dataset, Record, SamplingError};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("could not reach {target} unique molecules after {attempts} attempts")]
    GenerationExhausted { target: usize, attempts: usize },
    #[error("unknown target formula {0:?}")]
    UnknownFormula(String),
    #[error("invalid generator configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dataset(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_molecules: usize,
    pub max_heavy_atoms: usize,
    pub seed: u64,
    pub noise_sd: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_molecules: 100,
            max_heavy_atoms: 12,
            seed: 0,
            noise_sd: 0.0,
        }
    }
}

/// Label formulas over the seven descriptors. The donor and related-acceptor
/// formulas share terms, so a donor model carries information the related
/// acceptor task can reuse; the unrelated formula shares none of the donor's
/// terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFormula {
    DonorDefault,
    AcceptorRelated,
    AcceptorUnrelated,
}

impl TargetFormula {
    pub fn name(&self) -> &'static str {
        match self {
            TargetFormula::DonorDefault => "donor_default",
            TargetFormula::AcceptorRelated => "acceptor_related",
            TargetFormula::AcceptorUnrelated => "acceptor_unrelated",
        }
    }

    pub fn evaluate(&self, d: &DescriptorVector) -> f64 {
        match self {
            TargetFormula::DonorDefault => {
                0.5 * d.molecular_weight / 100.0 + 1.0 * d.aromatic_rings as f64
            }
            TargetFormula::AcceptorRelated => {
                0.4 * d.molecular_weight / 100.0
                    + 0.8 * d.aromatic_rings as f64
                    + 0.5 * d.rotatable_bonds as f64
            }
            TargetFormula::AcceptorUnrelated => d.hbd as f64 - d.hba as f64,
        }
    }
}

impl std::fmt::Display for TargetFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for TargetFormula {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "donor_default" => TargetFormula::DonorDefault,
            "acceptor_related" => TargetFormula::AcceptorRelated,
            "acceptor_unrelated" => TargetFormula::AcceptorUnrelated,
            other => return Err(GenError::UnknownFormula(other.to_string())),
        })
    }
}

/// Remaining bond capacity per element in the generated trees.
fn capacity(symbol: char) -> usize {
    match symbol {
        'C' => 4,
        'N' => 3,
        'O' | 'S' => 2,
        _ => 0,
    }
}

struct MolBuilder<'a> {
    rng: &'a mut ChaCha8Rng,
    budget: usize,
}

impl MolBuilder<'_> {
    fn pick_symbol(&mut self) -> char {
        match self.rng.random_range(0..100u32) {
            0..=59 => 'C',
            60..=74 => 'O',
            75..=89 => 'N',
            _ => 'S',
        }
    }

    /// A subtree rooted at a fresh atom; `free_parent_slots` is the valence
    /// the parent bond already consumed (1). `ring_digit` is the next unused
    /// ring-closure digit at this nesting depth.
    fn subtree(&mut self, depth: usize, ring_digit: u32) -> String {
        debug_assert!(self.budget >= 1);
        // Aromatic ring attachment when there is room.
        if self.budget >= 6 && depth <= 2 && self.rng.random_range(0..100u32) < 35 {
            return self.ring(ring_digit);
        }
        let symbol = self.pick_symbol();
        self.budget -= 1;
        let mut slots = capacity(symbol) - 1; // parent bond
        let mut out = String::new();
        out.push(symbol);

        // Terminal carbonyl oxygen spends two slots.
        if symbol == 'C' && slots >= 2 && self.budget >= 1 && self.rng.random_range(0..100u32) < 15
        {
            out.push_str("(=O)");
            self.budget -= 1;
            slots -= 2;
        }

        let mut children = Vec::new();
        while slots > 0 && self.budget > 0 && self.rng.random_range(0..100u32) < 55 {
            children.push(self.subtree(depth + 1, ring_digit));
            slots -= 1;
        }
        // Last child continues the chain; earlier ones become branches.
        if let Some(tail) = children.pop() {
            for branch in children {
                out.push('(');
                out.push_str(&branch);
                out.push(')');
            }
            out.push_str(&tail);
        }
        out
    }

    /// Aromatic six-ring rooted at its attachment atom. One position may
    /// become a pyridine-like nitrogen; middle positions may carry subtrees.
    fn ring(&mut self, digit: u32) -> String {
        self.budget -= 6;
        let nitrogen_at = if self.rng.random_range(0..100u32) < 40 {
            Some(self.rng.random_range(1..5usize))
        } else {
            None
        };
        let mut out = format!("c{digit}");
        for pos in 1..5 {
            if nitrogen_at == Some(pos) {
                out.push('n');
                continue;
            }
            out.push('c');
            if self.budget > 0 && self.rng.random_range(0..100u32) < 25 {
                // Depth 3 keeps further rings out of ring substituents, so
                // closure digits never nest.
                let sub = self.subtree(3, digit + 1);
                out.push('(');
                out.push_str(&sub);
                out.push(')');
            }
        }
        out.push_str(&format!("c{digit}"));
        out
    }

    fn molecule(&mut self, max_heavy: usize) -> String {
        self.budget = self.rng.random_range(1..=max_heavy);
        if self.budget >= 6 && self.rng.random_range(0..100u32) < 30 {
            return self.ring(1);
        }
        // Root atom gets all its valence for children.
        let symbol = self.pick_symbol();
        self.budget -= 1;
        let mut slots = capacity(symbol);
        let mut out = String::new();
        out.push(symbol);
        let mut children = Vec::new();
        while slots > 0 && self.budget > 0 && self.rng.random_range(0..100u32) < 65 {
            children.push(self.subtree(1, 1));
            slots -= 1;
        }
        if let Some(tail) = children.pop() {
            for branch in children {
                out.push('(');
                out.push_str(&branch);
                out.push(')');
            }
            out.push_str(&tail);
        }
        out
    }
}

/// Generates `cfg.n_molecules` unique SMILES, deterministic per seed. Every
/// output is guaranteed to parse.
pub fn generate_molecules(cfg: &GenConfig) -> Result<Vec<String>, GenError> {
    if cfg.n_molecules == 0 {
        return Err(GenError::BadConfig("n_molecules must be at least 1".into()));
    }
    if cfg.max_heavy_atoms == 0 {
        return Err(GenError::BadConfig(
            "max_heavy_atoms must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.n_molecules);
    let max_attempts = cfg.n_molecules.saturating_mul(200).max(1000);
    let mut attempts = 0;
    while out.len() < cfg.n_molecules {
        attempts += 1;
        if attempts > max_attempts {
            return Err(GenError::GenerationExhausted {
                target: cfg.n_molecules,
                attempts,
            });
        }
        let smiles = MolBuilder {
            rng: &mut rng,
            budget: 0,
        }
        .molecule(cfg.max_heavy_atoms);
        debug_assert!(
            parse_smiles(&smiles).is_ok(),
            "generated SMILES must parse: {smiles}"
        );
        if seen.insert(smiles.clone()) {
            out.push(smiles);
        }
    }
    Ok(out)
}

/// Labels molecules with `formula(descriptors) + N(0, noise_sd)`, seeded.
/// Ids are `m00000`-style; the dataset name is the formula name.
pub fn label_dataset(
    smiles: &[String],
    formula: TargetFormula,
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset, GenError> {
    if noise_sd < 0.0 {
        return Err(GenError::BadConfig("noise_sd must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).expect("validated sd"))
    } else {
        None
    };
    let records = smiles
        .iter()
        .enumerate()
        .map(|(i, smi)| {
            let mol = parse_smiles(smi).map_err(|source| {
                GenError::Dataset(SamplingError::Parse {
                    id: format!("m{i:05}"),
                    source,
                })
            })?;
            let base = formula.evaluate(&compute_descriptors(&mol));
            let eps = noise.map_or(0.0, |n| n.sample(&mut rng));
            Ok(Record {
                id: format!("m{i:05}"),
                smiles: smi.clone(),
                target: base + eps,
            })
        })
        .collect::<Result<Vec<_>, GenError>>()?;
    Ok(Dataset::new(records, Task::Regression, formula.name())?)
}

//! Hashed circular (extended-connectivity) fingerprints.
//!
//! Identifiers come from the fixed mixing hash in [`crate::hash`], so bit
//! vectors are reproducible across machines but will not bit-match other
//! toolkits' implementations. Tests therefore compare structure (counts and
//! invariances), not external bit positions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hash::hash_words;
use crate::molgraph::MolecularGraph;

/// Radius used wherever the toolkit needs "diameter 4" fingerprints
/// (similarity analysis, applicability domain).
pub const RADIUS_ECFP4: u32 = 2;
/// Radius for the "diameter 6" fingerprints used by the forest baseline.
pub const RADIUS_ECFP6: u32 = 3;
pub const DEFAULT_N_BITS: usize = 2048;

const MAX_RADIUS: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum FingerprintError {
    #[error("fingerprint lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("radius {0} outside supported range 0..={MAX_RADIUS}")]
    InvalidRadius(u32),
    #[error("width {0} must be a power of two of at least 64")]
    InvalidWidth(usize),
}

/// Fixed-width bit vector with its generation radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    blocks: Vec<u64>,
    n_bits: usize,
    radius: u32,
    n_set: usize,
}

impl Fingerprint {
    fn empty(n_bits: usize, radius: u32) -> Self {
        Fingerprint {
            blocks: vec![0; n_bits / 64],
            n_bits,
            radius,
            n_set: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.n_bits
    }

    pub fn is_empty(&self) -> bool {
        self.n_set == 0
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Population count; kept in sync with the bit blocks.
    pub fn n_set(&self) -> usize {
        self.n_set
    }

    pub fn bit(&self, idx: usize) -> bool {
        self.blocks[idx / 64] >> (idx % 64) & 1 == 1
    }

    fn set_bit(&mut self, idx: usize) {
        let (block, shift) = (idx / 64, idx % 64);
        if self.blocks[block] >> shift & 1 == 0 {
            self.blocks[block] |= 1 << shift;
            self.n_set += 1;
        }
    }

    pub fn set_bits(&self) -> Vec<usize> {
        (0..self.n_bits).filter(|&i| self.bit(i)).collect()
    }

    /// Dense 0/1 view, used by the PCA front end.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.n_bits)
            .map(|i| if self.bit(i) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn intersection_count(&self, other: &Fingerprint) -> usize {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_count(&self, other: &Fingerprint) -> usize {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }
}

/// Circular fingerprint by iterative neighborhood hashing.
///
/// The initial atom identifier hashes (element, degree, hydrogen count,
/// charge, aromatic flag). Each round rehashes an atom's identifier with the
/// sorted (bond-order, neighbor-identifier) pairs. A feature is one
/// (identifier, covered atom/bond set); duplicate coverages are emitted once
/// — the smallest radius wins, and within a round the smallest identifier
/// represents the group, which keeps the result independent of atom order.
pub fn ecfp(
    mol: &MolecularGraph,
    radius: u32,
    n_bits: usize,
) -> Result<Fingerprint, FingerprintError> {
    if radius > MAX_RADIUS {
        return Err(FingerprintError::InvalidRadius(radius));
    }
    if n_bits < 64 || !n_bits.is_power_of_two() {
        return Err(FingerprintError::InvalidWidth(n_bits));
    }

    let n = mol.atom_count();
    let mut fp = Fingerprint::empty(n_bits, radius);

    let mut ids: Vec<u64> = mol
        .atoms
        .iter()
        .map(|a| {
            hash_words(&[
                a.element.index() as u64,
                u64::from(a.degree),
                u64::from(a.total_h()),
                a.formal_charge as u64,
                u64::from(a.is_aromatic),
            ])
        })
        .collect();

    // Coverage key: (sorted atoms, sorted bonds) of the environment.
    type Coverage = (Vec<usize>, Vec<usize>);
    let mut seen: std::collections::BTreeSet<Coverage> = std::collections::BTreeSet::new();

    for (atom, &id) in ids.iter().enumerate() {
        seen.insert((vec![atom], Vec::new()));
        fp.set_bit((id % n_bits as u64) as usize);
    }

    // env_bonds[v] = bond set within the current radius of atom v.
    let mut env_bonds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 1..=radius {
        // Grow environments by one shell: bonds incident to any atom at
        // distance ≤ r-1, i.e. the previous environment plus the bonds of its
        // boundary atoms.
        let mut next_env: Vec<Vec<usize>> = Vec::with_capacity(n);
        for v in 0..n {
            let mut bonds: std::collections::BTreeSet<usize> =
                env_bonds[v].iter().copied().collect();
            let mut atoms_in: std::collections::BTreeSet<usize> = [v].into();
            for &b in &env_bonds[v] {
                atoms_in.insert(mol.bonds[b].a);
                atoms_in.insert(mol.bonds[b].b);
            }
            // Atoms at distance ≤ r-1 are exactly those touched by the
            // (r-1)-environment; add all their incident bonds.
            let frontier: Vec<usize> = atoms_in.iter().copied().collect();
            for a in frontier {
                for &(_, bond_idx) in mol.neighbors(a) {
                    bonds.insert(bond_idx);
                }
            }
            next_env.push(bonds.into_iter().collect());
        }
        env_bonds = next_env;

        let mut new_ids = vec![0u64; n];
        for v in 0..n {
            let mut pairs: Vec<(u64, u64)> = mol
                .neighbors(v)
                .iter()
                .map(|&(u, b)| (mol.bonds[b].order.code(), ids[u]))
                .collect();
            pairs.sort_unstable();
            let mut words = vec![u64::from(r), ids[v]];
            for (code, nid) in pairs {
                words.push(code);
                words.push(nid);
            }
            new_ids[v] = hash_words(&words);
        }
        ids = new_ids;

        // Group this round's features by coverage; keep the smallest
        // identifier per group so emission is order-independent.
        let mut groups: BTreeMap<Coverage, u64> = BTreeMap::new();
        for v in 0..n {
            let mut atoms_in: std::collections::BTreeSet<usize> = [v].into();
            for &b in &env_bonds[v] {
                atoms_in.insert(mol.bonds[b].a);
                atoms_in.insert(mol.bonds[b].b);
            }
            let key: Coverage = (
                atoms_in.into_iter().collect(),
                env_bonds[v].clone(),
            );
            groups
                .entry(key)
                .and_modify(|best| *best = (*best).min(ids[v]))
                .or_insert(ids[v]);
        }
        for (coverage, id) in groups {
            if seen.insert(coverage) {
                fp.set_bit((id % n_bits as u64) as usize);
            }
        }
    }

    Ok(fp)
}

/// 1 − |a∧b| / |a∨b|; zero when both fingerprints are empty.
pub fn tanimoto_distance(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.n_bits != b.n_bits {
        return Err(FingerprintError::LengthMismatch {
            a: a.n_bits,
            b: b.n_bits,
        });
    }
    let union = a.union_count(b);
    if union == 0 {
        return Ok(0.0);
    }
    let inter = a.intersection_count(b);
    Ok(1.0 - inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;
    use crate::testutil::permute_graph;

    #[test]
    fn single_atom_sets_exactly_one_bit() {
        let mol = parse_smiles("C").unwrap();
        let fp = ecfp(&mol, 2, 2048).unwrap();
        assert_eq!(fp.n_set(), 1);
    }

    #[test]
    fn atom_order_does_not_change_bits() {
        let a = ecfp(&parse_smiles("CCO").unwrap(), 2, 2048).unwrap();
        let b = ecfp(&parse_smiles("OCC").unwrap(), 2, 2048).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn graph_relabeling_does_not_change_bits() {
        let mol = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let n = mol.atom_count();
        let perm: Vec<usize> = (0..n).map(|i| (i + 5) % n).collect();
        let permuted = permute_graph(&mol, &perm);
        for radius in 0..=3 {
            let a = ecfp(&mol, radius, 512).unwrap();
            let b = ecfp(&permuted, radius, 512).unwrap();
            assert_eq!(a, b, "radius {radius}");
        }
    }

    #[test]
    fn benzene_distinct_environments() {
        // All six atoms are symmetry-equivalent, so there is one environment
        // class per radius 0, 1, 2.
        let mol = parse_smiles("c1ccccc1").unwrap();
        let fp = ecfp(&mol, 2, 2048).unwrap();
        assert_eq!(fp.n_set(), 3);
    }

    #[test]
    fn two_carbon_dedup() {
        // Both r=1 environments of ethane cover the whole molecule: one
        // feature, plus the shared r=0 atom feature.
        let mol = parse_smiles("CC").unwrap();
        let fp = ecfp(&mol, 2, 2048).unwrap();
        assert_eq!(fp.n_set(), 2);
    }

    #[test]
    fn radius_grows_bit_set_monotonically() {
        for smi in ["CCO", "c1ccncc1", "CC(=O)Oc1ccccc1C(=O)O", "C1CN1C"] {
            let mol = parse_smiles(smi).unwrap();
            let mut previous: Option<Fingerprint> = None;
            for radius in 0..=4 {
                let fp = ecfp(&mol, radius, 1024).unwrap();
                if let Some(prev) = &previous {
                    for idx in prev.set_bits() {
                        assert!(fp.bit(idx), "{smi}: bit {idx} lost at radius {radius}");
                    }
                }
                previous = Some(fp);
            }
        }
    }

    #[test]
    fn tanimoto_basics() {
        let mol_a = parse_smiles("CCO").unwrap();
        let fp_a = ecfp(&mol_a, 2, 2048).unwrap();
        assert_eq!(tanimoto_distance(&fp_a, &fp_a).unwrap(), 0.0);

        // Disjoint non-empty fingerprints are at distance one.
        let mut x = Fingerprint::empty(64, 0);
        let mut y = Fingerprint::empty(64, 0);
        x.set_bit(0);
        y.set_bit(1);
        assert_eq!(tanimoto_distance(&x, &y).unwrap(), 1.0);

        // Hand enumeration: a=1100, b=1010 → 1 − 1/3.
        let mut a = Fingerprint::empty(64, 0);
        a.set_bit(0);
        a.set_bit(1);
        let mut b = Fingerprint::empty(64, 0);
        b.set_bit(0);
        b.set_bit(2);
        let d = tanimoto_distance(&a, &b).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);

        // Both empty: distance zero by definition.
        let e1 = Fingerprint::empty(64, 0);
        let e2 = Fingerprint::empty(64, 0);
        assert_eq!(tanimoto_distance(&e1, &e2).unwrap(), 0.0);

        let wide = Fingerprint::empty(128, 0);
        assert!(matches!(
            tanimoto_distance(&e1, &wide),
            Err(FingerprintError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mol = parse_smiles("C").unwrap();
        assert!(matches!(
            ecfp(&mol, 5, 2048),
            Err(FingerprintError::InvalidRadius(5))
        ));
        assert!(matches!(
            ecfp(&mol, 2, 100),
            Err(FingerprintError::InvalidWidth(100))
        ));
        assert!(matches!(
            ecfp(&mol, 2, 32),
            Err(FingerprintError::InvalidWidth(32))
        ));
    }

    #[test]
    fn n_set_matches_popcount() {
        for smi in ["CCO", "c1ccccc1", "CC(=O)Oc1ccccc1C(=O)O"] {
            let fp = ecfp(&parse_smiles(smi).unwrap(), 3, 256).unwrap();
            assert_eq!(fp.n_set(), fp.set_bits().len());
        }
    }
}

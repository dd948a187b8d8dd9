//! The seven splitting-property descriptors.
//!
//! Definitions (documented deviations from common toolkits):
//! - ring counts use the spanning-tree cycle basis, not SSSR;
//! - rotatable bond: acyclic single bond whose endpoints both have heavy
//!   degree ≥ 2, with no amide exclusion;
//! - HBD: N/O atoms carrying at least one hydrogen; HBA: all N/O atoms;
//! - polar surface area: Ertl-style topological PSA from the N/O
//!   contribution table only (S and P contribute zero).

use super::{BondOrder, Element, MolecularGraph, HYDROGEN_WEIGHT};

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub molecular_weight: f64,
    pub aromatic_rings: usize,
    pub rotatable_bonds: usize,
    pub hba: usize,
    pub hbd: usize,
    pub heterocycles: usize,
    pub tpsa: f64,
}

/// Computes all seven descriptors. Total on valid graphs; deterministic.
pub fn compute_descriptors(mol: &MolecularGraph) -> DescriptorVector {
    let molecular_weight = mol
        .atoms
        .iter()
        .map(|a| a.element.atomic_weight() + f64::from(a.total_h()) * HYDROGEN_WEIGHT)
        .sum();

    let aromatic_rings = mol
        .rings
        .iter()
        .filter(|ring| ring.iter().all(|&i| mol.atoms[i].is_aromatic))
        .count();
    let heterocycles = mol
        .rings
        .iter()
        .filter(|ring| ring.iter().any(|&i| mol.atoms[i].is_heteroatom()))
        .count();

    let rotatable_bonds = mol
        .bonds
        .iter()
        .filter(|b| {
            b.order == BondOrder::Single
                && !b.in_ring
                && mol.atoms[b.a].degree >= 2
                && mol.atoms[b.b].degree >= 2
        })
        .count();

    let mut hba = 0;
    let mut hbd = 0;
    for atom in &mol.atoms {
        if matches!(atom.element, Element::N | Element::O) {
            hba += 1;
            if atom.total_h() >= 1 {
                hbd += 1;
            }
        }
    }

    let tpsa = (0..mol.atom_count()).map(|i| psa_contribution(mol, i)).sum();

    DescriptorVector {
        molecular_weight,
        aromatic_rings,
        rotatable_bonds,
        hba,
        hbd,
        heterocycles,
        tpsa,
    }
}

/// Per-atom polar-surface contribution, Å². Patterns are keyed on element,
/// aromaticity, charge, hydrogen count, incident bond orders and
/// three-ring membership; anything unmatched contributes zero.
fn psa_contribution(mol: &MolecularGraph, idx: usize) -> f64 {
    let atom = &mol.atoms[idx];
    if !matches!(atom.element, Element::N | Element::O) {
        return 0.0;
    }
    let mut single = 0u8;
    let mut double = 0u8;
    let mut triple = 0u8;
    let mut aromatic = 0u8;
    for &(_, bond_idx) in mol.neighbors(idx) {
        match mol.bonds[bond_idx].order {
            BondOrder::Single => single += 1,
            BondOrder::Double => double += 1,
            BondOrder::Triple => triple += 1,
            BondOrder::Aromatic => aromatic += 1,
        }
    }
    let h = atom.total_h();
    let charge = atom.formal_charge;
    let ring3 = mol.atom_in_three_ring(idx);

    match (atom.element, atom.is_aromatic, charge) {
        (Element::N, false, 0) => match (h, single, double, triple) {
            (0, 3, 0, 0) if ring3 => 3.01,
            (0, 3, 0, 0) => 3.24,
            (0, 1, 1, 0) => 12.36,
            (0, 0, 0, 1) => 23.79,
            (0, 1, 2, 0) => 11.68,
            (0, 0, 1, 1) => 13.60,
            (1, 2, 0, 0) if ring3 => 21.94,
            (1, 2, 0, 0) => 12.03,
            (1, 0, 1, 0) => 23.85,
            (2, 1, 0, 0) => 26.02,
            _ => 0.0,
        },
        (Element::N, false, 1) => match (h, single, double, triple) {
            (0, 4, 0, 0) => 0.00,
            (0, 2, 1, 0) => 3.01,
            (0, 1, 0, 1) => 4.36,
            (1, 3, 0, 0) => 4.44,
            (1, 1, 1, 0) => 13.97,
            (2, 2, 0, 0) => 16.61,
            (2, 0, 1, 0) => 25.59,
            (3, 1, 0, 0) => 27.64,
            _ => 0.0,
        },
        (Element::N, true, 0) => match (h, aromatic, single, double) {
            (0, 2, 0, 0) => 12.89,
            (0, 3, 0, 0) => 4.41,
            (0, 2, 1, 0) => 4.93,
            (0, 2, 0, 1) => 8.39,
            (1, 2, 0, 0) => 15.79,
            _ => 0.0,
        },
        (Element::N, true, 1) => match (h, aromatic, single) {
            (0, 3, 0) => 4.10,
            (0, 2, 1) => 3.88,
            (1, 2, 0) => 14.14,
            _ => 0.0,
        },
        (Element::O, false, 0) => match (h, single, double) {
            (0, 2, 0) if ring3 => 12.53,
            (0, 2, 0) => 9.23,
            (0, 0, 1) => 17.07,
            (1, 1, 0) => 20.23,
            _ => 0.0,
        },
        (Element::O, false, -1) => match (h, single, double) {
            (0, 1, 0) => 23.06,
            _ => 0.0,
        },
        (Element::O, true, 0) => {
            if h == 0 && aromatic == 2 {
                13.14
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

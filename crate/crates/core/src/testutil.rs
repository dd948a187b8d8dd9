//! Helpers shared by the unit tests.

use crate::molgraph::{Atom, Bond, MolecularGraph};

/// Relabels atoms of a molecule with `perm[old] = new`; adjacency, degrees
/// and ring data are rebuilt by graph assembly.
pub fn permute_graph(mol: &MolecularGraph, perm: &[usize]) -> MolecularGraph {
    let mut atoms: Vec<Atom> = vec![mol.atoms[0].clone(); mol.atom_count()];
    for (old, &new) in perm.iter().enumerate() {
        atoms[new] = mol.atoms[old].clone();
    }
    let bonds: Vec<Bond> = mol
        .bonds
        .iter()
        .map(|b| Bond {
            a: perm[b.a],
            b: perm[b.b],
            order: b.order,
            in_ring: false,
        })
        .collect();
    MolecularGraph::assemble(atoms, bonds, format!("{}#permuted", mol.source_smiles))
        .expect("permutation preserves validity")
}

//! Molecular graphs parsed from SMILES, plus the descriptors computed on them.
//!
//! The parser covers the organic subset (B C N O P S F Cl Br I), bracket
//! atoms with charge and explicit hydrogens, branches, ring closures
//! (including `%nn` and digit reuse), and the bond symbols `- = # :`.
//! Stereo markers and isotopes are accepted and ignored; dot-disconnected
//! inputs are rejected. Aromaticity is trusted from lowercase notation —
//! there is no perception pass.

mod descriptors;
mod features;
mod parser;

pub use descriptors::{compute_descriptors, DescriptorVector};
pub use features::{atom_feature_matrix, FeatureError, ATOM_FEATURE_DIM, ELEMENT_ORDER};
pub use parser::parse_smiles;

use thiserror::Error;

/// Heavy-atom elements the toolkit understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(sym: &str) -> Option<Element> {
        Some(match sym {
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => return None,
        })
    }

    /// Elements that may appear lowercase (aromatic) in the supported subset.
    pub fn supports_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    /// Normal valence list, ascending. Implicit hydrogens fill up to the
    /// smallest entry that covers the bond-order sum.
    pub fn default_valences(self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }

    /// Largest entry of the valence table; bond-order sums beyond this are a
    /// `ValenceError` (neutral atoms).
    pub fn max_valence(self) -> u8 {
        *self.default_valences().last().unwrap()
    }

    /// Conventional IUPAC atomic weight, g/mol.
    pub fn atomic_weight(self) -> f64 {
        match self {
            Element::B => 10.81,
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::P => 30.974,
            Element::S => 32.06,
            Element::F => 18.998,
            Element::Cl => 35.45,
            Element::Br => 79.904,
            Element::I => 126.904,
        }
    }

    /// Index into the fixed element ordering used by one-hot featurization
    /// and fingerprint invariants.
    pub fn index(self) -> usize {
        self as usize
    }
}

pub const HYDROGEN_WEIGHT: f64 = 1.008;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer contribution to an atom's bond-order sum. Aromatic bonds count
    /// one here; the aromatic-system correction is handled per atom.
    pub fn valence_units(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable small code used in fingerprint hashing.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: Element,
    pub is_aromatic: bool,
    pub formal_charge: i8,
    /// `Some` only for bracket atoms, which state their hydrogen count.
    pub explicit_h: Option<u8>,
    /// Computed for non-bracket atoms; zero for bracket atoms.
    pub implicit_h: u8,
    /// Heavy-atom neighbor count.
    pub degree: u8,
}

impl Atom {
    pub fn total_h(&self) -> u8 {
        self.implicit_h + self.explicit_h.unwrap_or(0)
    }

    pub fn is_heteroatom(&self) -> bool {
        self.element != Element::C
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A parsed, validated molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Fundamental cycle basis from a spanning-tree construction, one atom
    /// cycle per non-tree bond, in closing-bond order. Not SSSR.
    pub rings: Vec<Vec<usize>>,
    pub source_smiles: String,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    /// Assembles and validates a graph from parsed parts. Used by the parser
    /// and by the test suite for synthetic graphs.
    pub(crate) fn assemble(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source_smiles: String,
    ) -> Result<Self, SmilesError> {
        let mut graph = MolecularGraph {
            atoms,
            bonds,
            rings: Vec::new(),
            source_smiles,
            adjacency: Vec::new(),
        };
        graph.build_adjacency();
        graph.find_rings();
        for (idx, atom) in graph.atoms.iter().enumerate() {
            if atom.is_aromatic && !graph.atom_in_ring(idx) {
                return Err(SmilesError::AromaticAtomOutsideRing { atom_index: idx });
            }
        }
        Ok(graph)
    }

    fn build_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.atoms.len()];
        for (bond_idx, bond) in self.bonds.iter().enumerate() {
            self.adjacency[bond.a].push((bond.b, bond_idx));
            self.adjacency[bond.b].push((bond.a, bond_idx));
        }
        for (idx, adj) in self.adjacency.iter().enumerate() {
            self.atoms[idx].degree = adj.len() as u8;
        }
    }

    /// Neighbors of an atom as `(neighbor_index, bond_index)` pairs, in bond
    /// insertion order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// Cycle-basis rank: bonds − atoms + 1 for a connected graph.
    pub fn cycle_rank(&self) -> usize {
        self.bonds.len() + 1 - self.atoms.len()
    }

    pub fn atom_in_ring(&self, atom: usize) -> bool {
        self.neighbors(atom)
            .iter()
            .any(|&(_, b)| self.bonds[b].in_ring)
    }

    /// True if the atom lies on a three-membered basis cycle (the TPSA table
    /// distinguishes these).
    pub fn atom_in_three_ring(&self, atom: usize) -> bool {
        self.rings
            .iter()
            .any(|ring| ring.len() == 3 && ring.contains(&atom))
    }

    /// Spanning-tree fundamental cycles; marks ring bonds along the way.
    fn find_rings(&mut self) {
        let n = self.atoms.len();
        if n == 0 {
            return;
        }
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut parent_bond: Vec<usize> = vec![usize::MAX; n];
        let mut visited = vec![false; n];
        let mut tree_bond = vec![false; self.bonds.len()];
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(v) = stack.pop() {
            order.push(v);
            // Reverse so lower-indexed neighbors are explored first.
            for &(u, b) in self.adjacency[v].iter().rev() {
                if !visited[u] {
                    visited[u] = true;
                    parent[u] = Some(v);
                    parent_bond[u] = b;
                    tree_bond[b] = true;
                    stack.push(u);
                }
            }
        }

        let mut rings = Vec::new();
        for (bond_idx, bond) in self.bonds.iter().enumerate() {
            if tree_bond[bond_idx] {
                continue;
            }
            rings.push(cycle_through(bond.a, bond.b, &parent));
        }
        // Mark every bond that lies on a basis cycle.
        let mut ring_bonds = vec![false; self.bonds.len()];
        for ring in &rings {
            for w in 0..ring.len() {
                let a = ring[w];
                let b = ring[(w + 1) % ring.len()];
                let bond_idx = self.adjacency[a]
                    .iter()
                    .find(|&&(u, _)| u == b)
                    .map(|&(_, idx)| idx)
                    .expect("cycle edge must exist");
                ring_bonds[bond_idx] = true;
            }
        }
        for (idx, bond) in self.bonds.iter_mut().enumerate() {
            bond.in_ring = ring_bonds[idx];
        }
        self.rings = rings;
    }
}

/// Atom cycle for the non-tree edge (a, b): path a→lca, then lca→b.
fn cycle_through(a: usize, b: usize, parent: &[Option<usize>]) -> Vec<usize> {
    let path_to_root = |mut v: usize| {
        let mut path = vec![v];
        while let Some(p) = parent[v] {
            path.push(p);
            v = p;
        }
        path
    };
    let pa = path_to_root(a);
    let pb = path_to_root(b);
    let in_pb: std::collections::BTreeSet<usize> = pb.iter().copied().collect();
    let lca = *pa.iter().find(|v| in_pb.contains(v)).expect("connected");
    let mut cycle: Vec<usize> = pa.iter().take_while(|&&v| v != lca).copied().collect();
    cycle.push(lca);
    let tail: Vec<usize> = pb.iter().take_while(|&&v| v != lca).copied().collect();
    cycle.extend(tail.into_iter().rev());
    cycle
}

#[derive(Debug, Error, PartialEq)]
pub enum SmilesError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("multi-fragment SMILES (dot at position {position}) not supported")]
    MultiFragment { position: usize },
    #[error("unbalanced parenthesis at position {position}")]
    UnbalancedParenthesis { position: usize },
    #[error("ring-bond digit {digit} never paired")]
    UnclosedRing { digit: u32 },
    #[error("unsupported element {symbol:?} at position {position}")]
    UnsupportedElement { symbol: String, position: usize },
    #[error(
        "valence error on atom {atom_index} ({element}): bond-order sum {valence} exceeds {max}"
    )]
    ValenceError {
        atom_index: usize,
        element: &'static str,
        valence: u8,
        max: u8,
    },
    #[error("unclosed bracket atom starting at position {position}")]
    UnclosedBracket { position: usize },
    #[error("unexpected character {ch:?} at position {position}")]
    UnexpectedCharacter { ch: char, position: usize },
    #[error("invalid ring bond at position {position}: {reason}")]
    InvalidRingBond { position: usize, reason: String },
    #[error("bond symbol at position {position} has no following atom")]
    DanglingBond { position: usize },
    #[error("aromatic atom {atom_index} is not in any ring")]
    AromaticAtomOutsideRing { atom_index: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_rank_matches_ring_count() {
        for smi in ["C", "CCO", "c1ccccc1", "c1ccc2ccccc2c1", "C1CC1C2CC2"] {
            let mol = parse_smiles(smi).unwrap();
            assert_eq!(mol.rings.len(), mol.cycle_rank(), "{smi}");
        }
    }

    #[test]
    fn naphthalene_has_two_rings_and_ring_bonds_marked() {
        let mol = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert_eq!(mol.rings.len(), 2);
        assert!(mol.bonds.iter().all(|b| b.in_ring));
    }

    #[test]
    fn biphenyl_linker_bond_not_in_ring() {
        let mol = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        let linker = mol.bonds.iter().filter(|b| !b.in_ring).count();
        assert_eq!(linker, 1);
        assert_eq!(mol.rings.len(), 2);
    }
}

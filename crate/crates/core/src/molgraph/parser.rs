//! SMILES → molecular graph.
//!
//! Single pass over the character stream with a branch stack and a
//! ring-closure table. Implicit hydrogens and valence checks follow the
//! integer rule documented on [`parse_smiles`].

use std::collections::BTreeMap;

use super::{Atom, Bond, BondOrder, Element, MolecularGraph, SmilesError};

/// Two-letter symbols recognized for diagnostics only; parsing them yields
/// `UnsupportedElement` instead of a confusing single-letter split.
const KNOWN_UNSUPPORTED_PAIRS: &[&str] = &[
    "Si", "Se", "Na", "Li", "Mg", "Ca", "Al", "Fe", "Zn", "Cu", "Mn", "Sn", "As", "Te", "He",
    "Ne", "Ar", "Kr", "Xe", "Ag", "Au", "Pt", "Pb", "Hg", "Ti", "Ni", "Co", "Cr",
];

struct AtomDraft {
    element: Element,
    aromatic: bool,
    charge: i8,
    explicit_h: Option<u8>,
}

struct BondDraft {
    a: usize,
    b: usize,
    order: Option<BondOrder>,
}

#[derive(Default)]
struct Parser {
    atoms: Vec<AtomDraft>,
    bonds: Vec<BondDraft>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branch_stack: Vec<usize>,
    open_rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)>,
}

impl Parser {
    fn push_atom(&mut self, draft: AtomDraft) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(draft);
        if let Some(prev) = self.prev {
            let order = self.pending.take().map(|(o, _)| o);
            self.bonds.push(BondDraft {
                a: prev,
                b: idx,
                order,
            });
        } else if let Some((_, pos)) = self.pending.take() {
            return Err(SmilesError::DanglingBond { position: pos });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn close_or_open_ring(&mut self, digit: u32, position: usize) -> Result<(), SmilesError> {
        let Some(current) = self.prev else {
            return Err(SmilesError::InvalidRingBond {
                position,
                reason: "ring digit before any atom".into(),
            });
        };
        let pending = self.pending.take().map(|(o, _)| o);
        if let Some((open_atom, open_order, _)) = self.open_rings.remove(&digit) {
            if open_atom == current {
                return Err(SmilesError::InvalidRingBond {
                    position,
                    reason: "ring closure to the same atom".into(),
                });
            }
            let order = match (open_order, pending) {
                (Some(a), Some(b)) if a != b => {
                    return Err(SmilesError::InvalidRingBond {
                        position,
                        reason: "conflicting bond symbols on ring closure".into(),
                    })
                }
                (a, b) => a.or(b),
            };
            if self
                .bonds
                .iter()
                .any(|bd| (bd.a, bd.b) == (open_atom, current) || (bd.b, bd.a) == (open_atom, current))
            {
                return Err(SmilesError::InvalidRingBond {
                    position,
                    reason: "duplicate bond between atom pair".into(),
                });
            }
            self.bonds.push(BondDraft {
                a: open_atom,
                b: current,
                order,
            });
        } else {
            self.open_rings.insert(digit, (current, pending, position));
        }
        Ok(())
    }
}

/// Parse a SMILES string into a validated [`MolecularGraph`].
///
/// Implicit-hydrogen and valence rule (integer arithmetic): each bond
/// contributes its order with aromatic bonds counting one; lowercase
/// (aromatic) C, N and P additionally count one for their delocalized bond.
/// Non-bracket atoms fill hydrogens up to the smallest default valence that
/// covers the sum; bracket atoms take their hydrogen count literally. The
/// sum (plus explicit hydrogens for bracket atoms) must not exceed the
/// element's maximum valence, widened by |formal charge| for ions.
pub fn parse_smiles(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    let trimmed = smiles.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let chars: Vec<char> = trimmed.chars().collect();
    let mut p = Parser::default();
    let mut i = 0usize;

    while i < chars.len() {
        let c = chars[i];
        match c {
            '.' => return Err(SmilesError::MultiFragment { position: i }),
            '(' => {
                let Some(prev) = p.prev else {
                    return Err(SmilesError::UnexpectedCharacter { ch: c, position: i });
                };
                p.branch_stack.push(prev);
                i += 1;
            }
            ')' => {
                let Some(prev) = p.branch_stack.pop() else {
                    return Err(SmilesError::UnbalancedParenthesis { position: i });
                };
                if p.pending.is_some() {
                    return Err(SmilesError::DanglingBond { position: i });
                }
                p.prev = Some(prev);
                i += 1;
            }
            '-' | '=' | '#' | ':' | '/' | '\\' => {
                if p.pending.is_some() {
                    return Err(SmilesError::UnexpectedCharacter { ch: c, position: i });
                }
                let order = match c {
                    '=' => BondOrder::Double,
                    '#' => BondOrder::Triple,
                    ':' => BondOrder::Aromatic,
                    _ => BondOrder::Single, // '-' and ignored stereo slashes
                };
                p.pending = Some((order, i));
                i += 1;
            }
            '0'..='9' => {
                p.close_or_open_ring(c.to_digit(10).unwrap(), i)?;
                i += 1;
            }
            '%' => {
                if i + 2 >= chars.len() {
                    return Err(SmilesError::UnexpectedCharacter { ch: c, position: i });
                }
                let (d1, d2) = (chars[i + 1], chars[i + 2]);
                if !d1.is_ascii_digit() || !d2.is_ascii_digit() {
                    return Err(SmilesError::UnexpectedCharacter { ch: c, position: i });
                }
                let digit = d1.to_digit(10).unwrap() * 10 + d2.to_digit(10).unwrap();
                p.close_or_open_ring(digit, i)?;
                i += 3;
            }
            '[' => {
                let (draft, consumed) = parse_bracket(&chars, i)?;
                p.push_atom(draft)?;
                i += consumed;
            }
            '*' => {
                return Err(SmilesError::UnsupportedElement {
                    symbol: "*".into(),
                    position: i,
                })
            }
            c if c.is_ascii_uppercase() => {
                let pair: Option<String> = chars.get(i + 1).and_then(|&n| {
                    n.is_ascii_lowercase().then(|| format!("{c}{n}"))
                });
                if let Some(ref two) = pair {
                    if let Some(el) = Element::from_symbol(two) {
                        p.push_atom(organic_atom(el, false))?;
                        i += 2;
                        continue;
                    }
                    if KNOWN_UNSUPPORTED_PAIRS.contains(&two.as_str()) {
                        return Err(SmilesError::UnsupportedElement {
                            symbol: two.clone(),
                            position: i,
                        });
                    }
                }
                match Element::from_symbol(&c.to_string()) {
                    Some(el) => {
                        p.push_atom(organic_atom(el, false))?;
                        i += 1;
                    }
                    None => {
                        return Err(SmilesError::UnsupportedElement {
                            symbol: c.to_string(),
                            position: i,
                        })
                    }
                }
            }
            'b' | 'c' | 'n' | 'o' | 'p' | 's' => {
                // 'se'/'as' style two-letter aromatics are outside the subset.
                if c == 's' && chars.get(i + 1) == Some(&'e') {
                    return Err(SmilesError::UnsupportedElement {
                        symbol: "se".into(),
                        position: i,
                    });
                }
                let el = Element::from_symbol(&c.to_ascii_uppercase().to_string()).unwrap();
                p.push_atom(organic_atom(el, true))?;
                i += 1;
            }
            _ => return Err(SmilesError::UnexpectedCharacter { ch: c, position: i }),
        }
    }

    if let Some((_, pos)) = p.pending {
        return Err(SmilesError::DanglingBond { position: pos });
    }
    if !p.branch_stack.is_empty() {
        return Err(SmilesError::UnbalancedParenthesis {
            position: chars.len(),
        });
    }
    if let Some((&digit, _)) = p.open_rings.iter().next() {
        return Err(SmilesError::UnclosedRing { digit });
    }
    if p.atoms.is_empty() {
        return Err(SmilesError::EmptyInput);
    }

    finish(p, trimmed.to_string())
}

fn organic_atom(element: Element, aromatic: bool) -> AtomDraft {
    AtomDraft {
        element,
        aromatic,
        charge: 0,
        explicit_h: None,
    }
}

/// Parses `[isotope? symbol chirality? Hcount? charge? :class?]` starting at
/// the opening bracket. Returns the draft and the number of chars consumed.
fn parse_bracket(chars: &[char], start: usize) -> Result<(AtomDraft, usize), SmilesError> {
    let mut j = start + 1;
    let err_unclosed = || SmilesError::UnclosedBracket { position: start };

    // Isotope digits: accepted, ignored.
    while j < chars.len() && chars[j].is_ascii_digit() {
        j += 1;
    }
    let sym_start = j;
    if j >= chars.len() {
        return Err(err_unclosed());
    }
    let first = chars[j];
    let (element, aromatic) = if first.is_ascii_uppercase() {
        j += 1;
        let two = chars
            .get(j)
            .filter(|n| n.is_ascii_lowercase())
            .map(|&n| format!("{first}{n}"));
        if let Some(ref twos) = two {
            if let Some(el) = Element::from_symbol(twos) {
                j += 1;
                (el, false)
            } else if KNOWN_UNSUPPORTED_PAIRS.contains(&twos.as_str()) {
                return Err(SmilesError::UnsupportedElement {
                    symbol: twos.clone(),
                    position: sym_start,
                });
            } else {
                match Element::from_symbol(&first.to_string()) {
                    Some(el) => (el, false),
                    None => {
                        return Err(SmilesError::UnsupportedElement {
                            symbol: first.to_string(),
                            position: sym_start,
                        })
                    }
                }
            }
        } else {
            match Element::from_symbol(&first.to_string()) {
                Some(el) => (el, false),
                None => {
                    return Err(SmilesError::UnsupportedElement {
                        symbol: first.to_string(),
                        position: sym_start,
                    })
                }
            }
        }
    } else if first.is_ascii_lowercase() {
        let el = Element::from_symbol(&first.to_ascii_uppercase().to_string()).ok_or(
            SmilesError::UnsupportedElement {
                symbol: first.to_string(),
                position: sym_start,
            },
        )?;
        if !el.supports_aromatic() {
            return Err(SmilesError::UnsupportedElement {
                symbol: first.to_string(),
                position: sym_start,
            });
        }
        j += 1;
        (el, true)
    } else {
        return Err(SmilesError::UnexpectedCharacter {
            ch: first,
            position: sym_start,
        });
    };

    // Chirality: accepted, ignored.
    while j < chars.len() && chars[j] == '@' {
        j += 1;
    }

    let mut explicit_h = 0u8;
    if j < chars.len() && chars[j] == 'H' {
        j += 1;
        let mut count = String::new();
        while j < chars.len() && chars[j].is_ascii_digit() {
            count.push(chars[j]);
            j += 1;
        }
        explicit_h = if count.is_empty() {
            1
        } else {
            count.parse::<u8>().map_err(|_| SmilesError::UnexpectedCharacter {
                ch: 'H',
                position: j,
            })?
        };
    }

    let mut charge = 0i8;
    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
        let sign: i8 = if chars[j] == '+' { 1 } else { -1 };
        let sym = chars[j];
        let mut magnitude = 1i8;
        j += 1;
        if j < chars.len() && chars[j].is_ascii_digit() {
            let mut num = String::new();
            while j < chars.len() && chars[j].is_ascii_digit() {
                num.push(chars[j]);
                j += 1;
            }
            magnitude = num.parse::<i8>().map_err(|_| SmilesError::UnexpectedCharacter {
                ch: sym,
                position: j,
            })?;
        } else {
            while j < chars.len() && chars[j] == sym {
                magnitude += 1;
                j += 1;
            }
        }
        charge = sign * magnitude;
    }

    // Atom class: accepted, ignored.
    if j < chars.len() && chars[j] == ':' {
        j += 1;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
    }

    if j >= chars.len() || chars[j] != ']' {
        return Err(err_unclosed());
    }
    j += 1;

    Ok((
        AtomDraft {
            element,
            aromatic,
            charge,
            explicit_h: Some(explicit_h),
        },
        j - start,
    ))
}

/// Resolves default bond orders, assigns implicit hydrogens, runs the valence
/// check, and hands over to graph assembly.
fn finish(p: Parser, source: String) -> Result<MolecularGraph, SmilesError> {
    let drafts = p.atoms;
    let bonds: Vec<Bond> = p
        .bonds
        .into_iter()
        .map(|bd| {
            let order = bd.order.unwrap_or_else(|| {
                if drafts[bd.a].aromatic && drafts[bd.b].aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                }
            });
            Bond {
                a: bd.a,
                b: bd.b,
                order,
                in_ring: false,
            }
        })
        .collect();

    let mut order_sums = vec![0u8; drafts.len()];
    for bond in &bonds {
        order_sums[bond.a] = order_sums[bond.a].saturating_add(bond.order.valence_units());
        order_sums[bond.b] = order_sums[bond.b].saturating_add(bond.order.valence_units());
    }

    let mut atoms = Vec::with_capacity(drafts.len());
    for (idx, draft) in drafts.into_iter().enumerate() {
        let is_bracket = draft.explicit_h.is_some();
        let mut valence = order_sums[idx];
        if draft.aromatic
            && !is_bracket
            && matches!(draft.element, Element::C | Element::N | Element::P)
        {
            // Delocalized-bond correction for bare aromatic C/N/P.
            valence += 1;
        }
        if is_bracket {
            valence = valence.saturating_add(draft.explicit_h.unwrap());
        }
        let max = draft.element.max_valence() + draft.charge.unsigned_abs();
        if valence > max {
            return Err(SmilesError::ValenceError {
                atom_index: idx,
                element: draft.element.symbol(),
                valence,
                max,
            });
        }
        let implicit_h = if is_bracket {
            0
        } else {
            draft
                .element
                .default_valences()
                .iter()
                .find(|&&v| v >= valence)
                .map(|&v| v - valence)
                .unwrap_or(0)
        };
        atoms.push(Atom {
            element: draft.element,
            is_aromatic: draft.aromatic,
            formal_charge: draft.charge,
            explicit_h: draft.explicit_h,
            implicit_h,
            degree: 0,
        });
    }

    MolecularGraph::assemble(atoms, bonds, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methane_has_four_implicit_hydrogens() {
        let mol = parse_smiles("C").unwrap();
        assert_eq!(mol.atom_count(), 1);
        assert_eq!(mol.bond_count(), 0);
        assert_eq!(mol.atoms[0].implicit_h, 4);
        assert_eq!(mol.atoms[0].element, Element::C);
    }

    #[test]
    fn acetic_acid_shape() {
        let mol = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(mol.atom_count(), 4);
        assert_eq!(mol.bond_count(), 3);
        let doubles = mol
            .bonds
            .iter()
            .filter(|b| b.order == BondOrder::Double)
            .count();
        assert_eq!(doubles, 1);
        assert_eq!(mol.rings.len(), 0);
    }

    #[test]
    fn benzene_aromatic_ring() {
        let mol = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(mol.atom_count(), 6);
        assert_eq!(mol.bond_count(), 6);
        assert_eq!(mol.rings.len(), 1);
        for atom in &mol.atoms {
            assert!(atom.is_aromatic);
            assert_eq!(atom.implicit_h, 1);
        }
        assert!(mol.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
    }

    #[test]
    fn unclosed_ring_is_an_error() {
        assert_eq!(
            parse_smiles("C1CC"),
            Err(SmilesError::UnclosedRing { digit: 1 })
        );
    }

    #[test]
    fn unbalanced_parens() {
        assert!(matches!(
            parse_smiles("CC(C"),
            Err(SmilesError::UnbalancedParenthesis { .. })
        ));
        assert!(matches!(
            parse_smiles("CC)C"),
            Err(SmilesError::UnbalancedParenthesis { .. })
        ));
    }

    #[test]
    fn dot_disconnection_rejected() {
        assert_eq!(
            parse_smiles("CC.O"),
            Err(SmilesError::MultiFragment { position: 2 })
        );
    }

    #[test]
    fn unsupported_elements_rejected() {
        assert!(matches!(
            parse_smiles("C[Si](C)C"),
            Err(SmilesError::UnsupportedElement { .. })
        ));
        assert!(matches!(
            parse_smiles("CK"),
            Err(SmilesError::UnsupportedElement { .. })
        ));
    }

    #[test]
    fn pentavalent_carbon_rejected() {
        assert!(matches!(
            parse_smiles("C(C)(C)(C)(C)C"),
            Err(SmilesError::ValenceError { .. })
        ));
        assert!(matches!(
            parse_smiles("C#C=C"),
            Err(SmilesError::ValenceError { atom_index: 1, .. })
        ));
    }

    #[test]
    fn bracket_atoms_charge_and_hydrogens() {
        let mol = parse_smiles("[NH4+]").unwrap();
        assert_eq!(mol.atoms[0].formal_charge, 1);
        assert_eq!(mol.atoms[0].explicit_h, Some(4));
        assert_eq!(mol.atoms[0].implicit_h, 0);
        assert_eq!(mol.atoms[0].total_h(), 4);

        let mol = parse_smiles("CC(=O)[O-]").unwrap();
        assert_eq!(mol.atoms[3].formal_charge, -1);

        let mol = parse_smiles("[O--]").unwrap();
        assert_eq!(mol.atoms[0].formal_charge, -2);
        let mol = parse_smiles("[O-2]").unwrap();
        assert_eq!(mol.atoms[0].formal_charge, -2);
    }

    #[test]
    fn isotopes_and_stereo_accepted_and_ignored() {
        let mol = parse_smiles("[13CH4]").unwrap();
        assert_eq!(mol.atoms[0].element, Element::C);
        assert_eq!(mol.atoms[0].total_h(), 4);

        let with_stereo = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        let without = parse_smiles("N[CH](C)C(=O)O").unwrap();
        assert_eq!(with_stereo.atom_count(), without.atom_count());
        assert_eq!(with_stereo.bond_count(), without.bond_count());

        let cis = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(cis.bond_count(), 3);
        assert_eq!(
            cis.bonds
                .iter()
                .filter(|b| b.order == BondOrder::Double)
                .count(),
            1
        );
    }

    #[test]
    fn pyridine_and_furan_hydrogens() {
        let pyridine = parse_smiles("c1ccncc1").unwrap();
        let n = pyridine
            .atoms
            .iter()
            .find(|a| a.element == Element::N)
            .unwrap();
        assert_eq!(n.implicit_h, 0);

        let furan = parse_smiles("c1ccoc1").unwrap();
        let o = furan.atoms.iter().find(|a| a.element == Element::O).unwrap();
        assert_eq!(o.implicit_h, 0);

        let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
        let n = pyrrole
            .atoms
            .iter()
            .find(|a| a.element == Element::N)
            .unwrap();
        assert_eq!(n.total_h(), 1);
    }

    #[test]
    fn naphthalene_bridgeheads_have_no_hydrogens() {
        let mol = parse_smiles("c1ccc2ccccc2c1").unwrap();
        let h: Vec<u8> = mol.atoms.iter().map(|a| a.implicit_h).collect();
        assert_eq!(h.iter().map(|&x| x as usize).sum::<usize>(), 8);
        let bridgeheads = mol.atoms.iter().filter(|a| a.degree == 3).count();
        assert_eq!(bridgeheads, 2);
    }

    #[test]
    fn percent_ring_closures() {
        let mol = parse_smiles("C%10CCCCC%10").unwrap();
        assert_eq!(mol.rings.len(), 1);
        assert_eq!(mol.rings[0].len(), 6);
    }

    #[test]
    fn ring_digit_reuse_after_pairing() {
        let mol = parse_smiles("C1CC1C1CC1").unwrap();
        assert_eq!(mol.rings.len(), 2);
    }

    #[test]
    fn aromatic_atom_outside_ring_rejected() {
        assert!(matches!(
            parse_smiles("cc"),
            Err(SmilesError::AromaticAtomOutsideRing { .. })
        ));
    }

    #[test]
    fn ring_bond_order_conflicts_rejected() {
        assert!(matches!(
            parse_smiles("C=1CCCCC-1"),
            Err(SmilesError::InvalidRingBond { .. })
        ));
        // Agreeing symbols are fine.
        let mol = parse_smiles("C=1CCCCC=1").unwrap();
        assert_eq!(
            mol.bonds
                .iter()
                .filter(|b| b.order == BondOrder::Double)
                .count(),
            1
        );
    }

    #[test]
    fn empty_and_whitespace_inputs() {
        assert_eq!(parse_smiles(""), Err(SmilesError::EmptyInput));
        assert_eq!(parse_smiles("   "), Err(SmilesError::EmptyInput));
    }

    #[test]
    fn dangling_bond_rejected() {
        assert!(matches!(
            parse_smiles("C="),
            Err(SmilesError::DanglingBond { .. })
        ));
        assert!(matches!(
            parse_smiles("=C"),
            Err(SmilesError::DanglingBond { .. })
        ));
        assert!(matches!(
            parse_smiles("C(=)C"),
            Err(SmilesError::DanglingBond { .. })
        ));
    }

    #[test]
    fn parse_is_deterministic() {
        let a = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let b = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        assert_eq!(a, b);
    }
}

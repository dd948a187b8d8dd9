//! Per-atom input features for the graph network.

use thiserror::Error;

use super::{Element, MolecularGraph};
use crate::linalg::Matrix;

/// Fixed element ordering for the one-hot block.
pub const ELEMENT_ORDER: [Element; 10] = [
    Element::B,
    Element::C,
    Element::N,
    Element::O,
    Element::P,
    Element::S,
    Element::F,
    Element::Cl,
    Element::Br,
    Element::I,
];

/// 10 element one-hot + 5 degree one-hot + hydrogen count + aromatic flag +
/// formal charge.
pub const ATOM_FEATURE_DIM: usize = 18;

const MAX_DEGREE: u8 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("atom {atom_index} has degree {degree}, above the supported maximum {max}")]
    DegreeOverflow {
        atom_index: usize,
        degree: u8,
        max: u8,
    },
}

/// One row per atom, in atom-index order.
pub fn atom_feature_matrix(mol: &MolecularGraph) -> Result<Matrix, FeatureError> {
    let mut out = Matrix::zeros(mol.atom_count(), ATOM_FEATURE_DIM);
    for (idx, atom) in mol.atoms.iter().enumerate() {
        if atom.degree > MAX_DEGREE {
            return Err(FeatureError::DegreeOverflow {
                atom_index: idx,
                degree: atom.degree,
                max: MAX_DEGREE,
            });
        }
        let row = out.row_mut(idx);
        row[atom.element.index()] = 1.0;
        row[10 + atom.degree as usize] = 1.0;
        row[15] = f64::from(atom.total_h());
        row[16] = if atom.is_aromatic { 1.0 } else { 0.0 };
        row[17] = f64::from(atom.formal_charge);
    }
    Ok(out)
}

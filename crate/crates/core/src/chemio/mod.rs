//! Molecule ingestion: SDF and JSON-lines readers, node featurization and
//! dataset splits.

mod elements;
mod features;
mod jsonl;
mod sdf;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::numcore::Tensor;

pub use elements::{atomic_number, symbol};
pub use features::{featurize_nodes, Featurizer};
pub use jsonl::{read_jsonl, write_jsonl, MoleculeRecord};
pub use sdf::{apply_target_csv, parse_sdf, read_sdf, RecordError, SdfOptions, SdfParse};
pub use split::{
    shuffled_indices, split_dataset, split_from_indices, DatasetSplit, SplitIndices, SplitSizes,
};

#[derive(Debug, thiserror::Error)]
pub enum ChemError {
    #[error("record {record}: {message}")]
    Record { record: usize, message: String },
    #[error("unknown element symbol {0:?}")]
    UnknownElement(String),
    #[error("atom {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("bond ({0}, {1}) references an atom outside 0..{2}")]
    BondOutOfRange(usize, usize, usize),
    #[error("bond ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("bond ({0}, {1}) appears more than once")]
    DuplicateBond(usize, usize),
    #[error("split sizes {requested} exceed the {available} molecules available")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("split index {index} out of range for {available} molecules")]
    SplitIndex { index: usize, available: usize },
    #[error("molecule {0} is assigned to more than one partition")]
    SplitOverlap(usize),
    #[error("node feature matrix has {rows} rows for {atoms} atoms")]
    FeatureRows { rows: usize, atoms: usize },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub atomic_number: u32,
    /// Cartesian coordinates in Ångström.
    pub position: [f64; 3],
}

impl Atom {
    pub fn new(element: &str, position: [f64; 3]) -> Result<Self, ChemError> {
        let z = atomic_number(element).ok_or_else(|| ChemError::UnknownElement(element.into()))?;
        Ok(Self {
            element: symbol(z).unwrap_or(element).to_string(),
            atomic_number: z,
            position,
        })
    }
}

/// Molecular graph with 3D coordinates.
///
/// Bonds are undirected; each unordered pair appears once. `node_features`
/// has one row per atom and starts with zero columns until
/// [`featurize_nodes`] fills it.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph3D {
    pub name: String,
    atoms: Vec<Atom>,
    bonds: Vec<(usize, usize)>,
    node_features: Tensor,
    pub target: Option<f64>,
}

impl Graph3D {
    pub fn new(
        name: impl Into<String>,
        atoms: Vec<Atom>,
        bonds: Vec<(usize, usize)>,
        target: Option<f64>,
    ) -> Result<Self, ChemError> {
        let n = atoms.len();
        for (i, a) in atoms.iter().enumerate() {
            if a.position.iter().any(|c| !c.is_finite()) {
                return Err(ChemError::NonFiniteCoordinate { index: i });
            }
        }
        let mut seen = HashSet::with_capacity(bonds.len());
        for &(i, j) in &bonds {
            if i >= n || j >= n {
                return Err(ChemError::BondOutOfRange(i, j, n));
            }
            if i == j {
                return Err(ChemError::SelfLoop(i));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(ChemError::DuplicateBond(i, j));
            }
        }
        Ok(Self {
            name: name.into(),
            atoms,
            bonds,
            node_features: Tensor::zeros(n, 0),
            target,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn set_node_features(&mut self, x: Tensor) -> Result<(), ChemError> {
        if x.rows() != self.atoms.len() {
            return Err(ChemError::FeatureRows {
                rows: x.rows(),
                atoms: self.atoms.len(),
            });
        }
        self.node_features = x;
        Ok(())
    }

    /// Number of bonds incident to each atom.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.atoms.len()];
        for &(i, j) in &self.bonds {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Copy with every position mapped through `f`.
    pub fn map_positions(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut g = self.clone();
        for a in &mut g.atoms {
            a.position = f(a.position);
        }
        g
    }

    /// Copy with atoms reordered so that new atom `k` is old atom `perm[k]`.
    pub fn permute_atoms(&self, perm: &[usize]) -> Self {
        let n = self.atoms.len();
        assert_eq!(perm.len(), n, "permutation length");
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let atoms = perm.iter().map(|&old| self.atoms[old].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|&(i, j)| (inverse[i], inverse[j]))
            .collect();
        let cols = self.node_features.cols();
        let mut x = Tensor::zeros(n, cols);
        for (new, &old) in perm.iter().enumerate() {
            x.row_mut(new).copy_from_slice(self.node_features.row(old));
        }
        Self {
            name: self.name.clone(),
            atoms,
            bonds,
            node_features: x,
            target: self.target,
        }
    }
}

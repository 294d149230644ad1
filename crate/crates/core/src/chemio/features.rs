use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{atomic_number, Graph3D};
use crate::numcore::Tensor;

/// Element one-hot plus bond degree.
///
/// Row layout for a vocabulary of `V` elements:
/// `[one-hot over vocab (V) | unknown element (1) | degree (1)]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    vocab: Vec<String>,
}

impl Featurizer {
    /// Vocabulary given explicitly, kept in the given order.
    pub fn new(vocab: Vec<String>) -> Self {
        Self { vocab }
    }

    /// Elements present in `graphs`, ordered by atomic number.
    pub fn fit<'a>(graphs: impl IntoIterator<Item = &'a Graph3D>) -> Self {
        let mut zs = BTreeSet::new();
        for g in graphs {
            for a in g.atoms() {
                zs.insert((a.atomic_number, a.element.clone()));
            }
        }
        Self {
            vocab: zs.into_iter().map(|(_, e)| e).collect(),
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.vocab.len() + 2
    }

    pub fn unknown_slot(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, g: &Graph3D) -> Tensor {
        let d = self.dim();
        let mut x = Tensor::zeros(g.num_atoms(), d);
        let degrees = g.degrees();
        let mut unknown = Vec::new();
        for (i, a) in g.atoms().iter().enumerate() {
            let slot = self
                .vocab
                .iter()
                .position(|e| atomic_number(e) == Some(a.atomic_number))
                .unwrap_or_else(|| {
                    unknown.push(a.element.as_str());
                    self.unknown_slot()
                });
            x.set(i, slot, 1.0);
            x.set(i, d - 1, degrees[i] as f64);
        }
        if !unknown.is_empty() {
            log::warn!(
                "molecule {}: elements {:?} outside the fitted vocabulary mapped to the unknown slot",
                g.name,
                unknown
            );
        }
        x
    }
}

/// Copy of `g` with node features from `featurizer`.
pub fn featurize_nodes(g: &Graph3D, featurizer: &Featurizer) -> Graph3D {
    let mut out = g.clone();
    out.set_node_features(featurizer.encode(g))
        .expect("encoder emits one row per atom");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemio::Atom;

    fn methane_like(center: &str) -> Graph3D {
        let mut atoms = vec![Atom::new(center, [0.0; 3]).unwrap()];
        for k in 0..4 {
            atoms.push(Atom::new("H", [k as f64 + 1.0, 0.0, 0.0]).unwrap());
        }
        Graph3D::new("m", atoms, vec![(0, 1), (0, 2), (0, 3), (0, 4)], None).unwrap()
    }

    fn vocab() -> Featurizer {
        Featurizer::new(["H", "C", "N", "O"].map(String::from).to_vec())
    }

    #[test]
    fn carbon_with_four_bonds() {
        let x = vocab().encode(&methane_like("C"));
        assert_eq!(x.row(0), &[0.0, 1.0, 0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn hydrogen_with_one_bond() {
        let x = vocab().encode(&methane_like("C"));
        assert_eq!(x.row(1), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unseen_element_uses_unknown_slot() {
        let x = vocab().encode(&methane_like("S"));
        assert_eq!(x.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0, 4.0]);
    }

    #[test]
    fn fit_orders_by_atomic_number_and_keeps_dimension() {
        let f = Featurizer::fit([&methane_like("O"), &methane_like("C")]);
        assert_eq!(f.vocab(), &["H", "C", "O"]);
        let g = featurize_nodes(&methane_like("N"), &f);
        assert_eq!(g.node_features().shape(), [5, f.dim()]);
    }
}

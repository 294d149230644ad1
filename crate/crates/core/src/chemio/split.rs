use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChemError, Graph3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const ESOL: SplitSizes = SplitSizes {
        train: 901,
        val: 113,
        test: 113,
    };
    pub const FREESOLV: SplitSizes = SplitSizes {
        train: 510,
        val: 64,
        test: 65,
    };

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Dataset positions per partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<Graph3D>,
    pub val: Vec<Graph3D>,
    pub test: Vec<Graph3D>,
    pub indices: SplitIndices,
}

/// Seeded shuffle of `0..n` cut into the requested sizes.
pub fn shuffled_indices(n: usize, sizes: SplitSizes, seed: u64) -> Result<SplitIndices, ChemError> {
    if sizes.total() > n {
        return Err(ChemError::SplitTooLarge {
            requested: sizes.total(),
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = order.split_at(sizes.train);
    let (val, rest) = rest.split_at(sizes.val);
    let test = &rest[..sizes.test];
    Ok(SplitIndices {
        train: train.to_vec(),
        val: val.to_vec(),
        test: test.to_vec(),
    })
}

pub fn split_dataset(
    graphs: &[Graph3D],
    sizes: SplitSizes,
    seed: u64,
) -> Result<DatasetSplit, ChemError> {
    let idx = shuffled_indices(graphs.len(), sizes, seed)?;
    split_from_indices(graphs, idx)
}

/// Partition by explicit indices; overlaps and out-of-range entries fail.
pub fn split_from_indices(
    graphs: &[Graph3D],
    indices: SplitIndices,
) -> Result<DatasetSplit, ChemError> {
    let mut used = vec![false; graphs.len()];
    for &i in indices.train.iter().chain(&indices.val).chain(&indices.test) {
        if i >= graphs.len() {
            return Err(ChemError::SplitIndex {
                index: i,
                available: graphs.len(),
            });
        }
        if std::mem::replace(&mut used[i], true) {
            return Err(ChemError::SplitOverlap(i));
        }
    }
    let pick = |ix: &[usize]| ix.iter().map(|&i| graphs[i].clone()).collect();
    Ok(DatasetSplit {
        train: pick(&indices.train),
        val: pick(&indices.val),
        test: pick(&indices.test),
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemio::Atom;
    use proptest::prelude::*;

    fn dataset(n: usize) -> Vec<Graph3D> {
        (0..n)
            .map(|i| {
                let atoms = vec![Atom::new("C", [0.0; 3]).unwrap()];
                Graph3D::new(format!("m{i}"), atoms, vec![], Some(i as f64)).unwrap()
            })
            .collect()
    }

    #[test]
    fn esol_and_freesolv_sizes() {
        let s = split_dataset(&dataset(1127), SplitSizes::ESOL, 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (901, 113, 113));
        let s = split_dataset(&dataset(639), SplitSizes::FREESOLV, 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (510, 64, 65));
    }

    #[test]
    fn oversized_request_fails() {
        let sizes = SplitSizes {
            train: 10,
            val: 0,
            test: 0,
        };
        assert!(matches!(
            split_dataset(&dataset(5), sizes, 0),
            Err(ChemError::SplitTooLarge { requested: 10, available: 5 })
        ));
    }

    #[test]
    fn explicit_indices_override_and_validate() {
        let data = dataset(6);
        let idx = SplitIndices {
            train: vec![5, 4],
            val: vec![0],
            test: vec![2],
        };
        let s = split_from_indices(&data, idx).unwrap();
        assert_eq!(s.train[0].name, "m5");
        assert_eq!(s.test[0].name, "m2");
        let overlap = SplitIndices {
            train: vec![1],
            val: vec![1],
            test: vec![],
        };
        assert!(matches!(split_from_indices(&data, overlap), Err(ChemError::SplitOverlap(1))));
        let oob = SplitIndices {
            train: vec![6],
            val: vec![],
            test: vec![],
        };
        assert!(split_from_indices(&data, oob).is_err());
    }

    proptest! {
        #[test]
        fn split_is_deterministic_and_disjoint(
            n in 0usize..200,
            fr in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
            seed in any::<u64>(),
        ) {
            let train = (n as f64 * fr.0 * 0.5) as usize;
            let val = ((n - train) as f64 * fr.1 * 0.5) as usize;
            let test = ((n - train - val) as f64 * fr.2) as usize;
            let sizes = SplitSizes { train, val, test };
            let a = shuffled_indices(n, sizes, seed).unwrap();
            let b = shuffled_indices(n, sizes, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
            let len = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), len);
            prop_assert_eq!(len, sizes.total());
        }
    }
}

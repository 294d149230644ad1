//! Random molecules and rigid motions for property tests and diagnostics.

use rand::Rng;

use crate::chemio::{Atom, Graph3D};
use crate::numcore::Tensor;

const ELEMENTS: [&str; 5] = ["C", "N", "O", "S", "F"];

/// Connected random graph on `n` atoms (random spanning tree plus a few ring
/// closures) with coordinates at least 0.9 Å apart and uniform random node
/// features of width `in_features`.
pub fn random_molecule(rng: &mut impl Rng, n: usize, in_features: usize) -> Graph3D {
    assert!(n >= 1);
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(n);
    while positions.len() < n {
        let p = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        if positions
            .iter()
            .all(|q| crate::distgeo::pair_distance(p, *q) > 0.9)
        {
            positions.push(p);
        }
    }
    let atoms = positions
        .iter()
        .map(|&p| Atom::new(ELEMENTS[rng.gen_range(0..ELEMENTS.len())], p).expect("known element"))
        .collect();
    let bonds = random_connected_bonds(rng, n);
    let mut g = Graph3D::new("random", atoms, bonds, None).expect("valid by construction");
    let x = Tensor::from_vec(
        n,
        in_features,
        (0..n * in_features).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .expect("sized");
    g.set_node_features(x).expect("one row per atom");
    g
}

/// Spanning tree over `0..n` plus up to `n / 3` extra non-duplicate bonds.
pub fn random_connected_bonds(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let mut bonds: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for _ in 0..n / 3 {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let key = (i.min(j), i.max(j));
        if i != j && !bonds.iter().any(|&(a, b)| (a.min(b), a.max(b)) == key) {
            bonds.push((i, j));
        }
    }
    bonds
}

/// Uniformly random rotation matrix from a unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let (w, x, y, z) = loop {
        let q: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            let n = n2.sqrt();
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `p ↦ R p + t`.
pub fn rigid_motion(r: [[f64; 3]; 3], t: [f64; 3]) -> impl Fn([f64; 3]) -> [f64; 3] {
    move |p| {
        let mut out = t;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
        }
        out
    }
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

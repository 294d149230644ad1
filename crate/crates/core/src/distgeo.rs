//! Distance-geometric graph representation.
//!
//! Besides bonded pairs (edge distances), every pair of atoms two bonds apart
//! gets an angle edge and every pair three bonds apart a dihedral edge, each
//! labelled with the Euclidean distance between its end atoms. A pair belongs
//! to exactly one order: its shortest-path hop count in the bond graph.
//! Angles and dihedrals themselves are never computed.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::chemio::Graph3D;
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("atoms {0} and {1} coincide (zero distance)")]
    CoincidentAtoms(usize, usize),
    #[error("max order must be 1, 2 or 3, got {0}")]
    InvalidOrder(u8),
}

/// Hop distance class of a geometric edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Order {
    /// Bonded neighbours.
    First = 1,
    /// End atoms of an angle.
    Second = 2,
    /// End atoms of a dihedral.
    Third = 3,
}

impl Order {
    pub fn hops(self) -> u8 {
        self as u8
    }

    pub fn from_hops(h: u8) -> Option<Self> {
        match h {
            1 => Some(Order::First),
            2 => Some(Order::Second),
            3 => Some(Order::Third),
            _ => None,
        }
    }
}

/// Largest neighbour order included in a representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MaxOrder(Order);

impl MaxOrder {
    pub const FIRST: MaxOrder = MaxOrder(Order::First);
    pub const SECOND: MaxOrder = MaxOrder(Order::Second);
    pub const THIRD: MaxOrder = MaxOrder(Order::Third);

    pub fn hops(self) -> u8 {
        self.0.hops()
    }
}

impl TryFrom<u8> for MaxOrder {
    type Error = GeoError;

    fn try_from(h: u8) -> Result<Self, GeoError> {
        Order::from_hops(h).map(MaxOrder).ok_or(GeoError::InvalidOrder(h))
    }
}

impl From<MaxOrder> for u8 {
    fn from(m: MaxOrder) -> u8 {
        m.hops()
    }
}

impl std::fmt::Display for MaxOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.hops())
    }
}

/// Directed edge `src → dst`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoEdge {
    pub src: usize,
    pub dst: usize,
    pub order: Order,
    /// Ångström.
    pub distance: f64,
}

/// Unordered pair counts per order: `(U, U^θ, U^φ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub first: usize,
    pub second: usize,
    pub third: usize,
}

impl EdgeCounts {
    pub fn total(&self) -> usize {
        self.first + self.second + self.third
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistGeoGraph {
    pub name: String,
    pub num_nodes: usize,
    pub x: Tensor,
    /// Both directions of every pair, pairs in ascending `(i, j)` order.
    pub edges: Vec<GeoEdge>,
    pub counts: EdgeCounts,
    pub target: Option<f64>,
}

impl DistGeoGraph {
    pub fn edges_of_order(&self, order: Order) -> impl Iterator<Item = &GeoEdge> {
        self.edges.iter().filter(move |e| e.order == order)
    }
}

pub fn pair_distance(p: [f64; 3], q: [f64; 3]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Unordered pairs `(i, j)`, `i < j`, whose shortest bond path has
/// `1..=max_order` hops, mapped to that hop count.
pub fn khop_pairs(
    bonds: &[(usize, usize)],
    num_nodes: usize,
    max_order: MaxOrder,
) -> BTreeMap<(usize, usize), Order> {
    let mut adj = vec![Vec::new(); num_nodes];
    for &(i, j) in bonds {
        adj[i].push(j);
        adj[j].push(i);
    }
    let limit = max_order.hops();
    let mut pairs = BTreeMap::new();
    let mut hops = vec![u8::MAX; num_nodes];
    let mut queue = VecDeque::new();
    for root in 0..num_nodes {
        hops.fill(u8::MAX);
        hops[root] = 0;
        queue.clear();
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            if hops[u] == limit {
                continue;
            }
            for &v in &adj[u] {
                if hops[v] == u8::MAX {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                    if v > root {
                        let order = Order::from_hops(hops[v]).expect("hop count in 1..=3");
                        pairs.insert((root, v), order);
                    }
                }
            }
        }
    }
    pairs
}

/// Geometric edges of `g` up to `max_order`, node features copied from `g`.
pub fn build_distgeo(g: &Graph3D, max_order: MaxOrder) -> Result<DistGeoGraph, GeoError> {
    let pairs = khop_pairs(g.bonds(), g.num_atoms(), max_order);
    let atoms = g.atoms();
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    let mut counts = EdgeCounts::default();
    for (&(i, j), &order) in &pairs {
        let d = pair_distance(atoms[i].position, atoms[j].position);
        if !(d > 0.0) {
            return Err(GeoError::CoincidentAtoms(i, j));
        }
        match order {
            Order::First => counts.first += 1,
            Order::Second => counts.second += 1,
            Order::Third => counts.third += 1,
        }
        edges.push(GeoEdge {
            src: i,
            dst: j,
            order,
            distance: d,
        });
        edges.push(GeoEdge {
            src: j,
            dst: i,
            order,
            distance: d,
        });
    }
    Ok(DistGeoGraph {
        name: g.name.clone(),
        num_nodes: g.num_atoms(),
        x: g.node_features().clone(),
        edges,
        counts,
        target: g.target,
    })
}

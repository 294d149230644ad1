use std::collections::HashMap;

use super::{cutoff_weight, powerlaw_weight, Model, ModelKind, Normalization, Pooling};
use crate::distgeo::DistGeoGraph;
use crate::numcore::Tensor;
use crate::{Error, Result};

/// Per-molecule inputs for one model: edges within the model's max order and
/// every quantity that depends only on geometry (basis expansion, edge and
/// self coefficients), computed once.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub num_nodes: usize,
    pub x: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `P × num_gaussians`, one row per unordered atom pair; learned-filter
    /// models only. Both directions of a pair share a distance, so the
    /// filter is evaluated once per pair.
    pub rbf: Option<Tensor>,
    /// Row of `rbf` for each directed edge; empty without learned filters.
    pub edge_pair: Vec<usize>,
    /// Multiplies message `src → dst`; includes normalisation.
    pub edge_coef: Vec<f64>,
    /// Multiplies the node's own state.
    pub self_coef: Vec<f64>,
    pub target: Option<f64>,
}

/// Disjoint union of prepared molecules.
#[derive(Clone, Debug)]
pub struct Batch {
    pub num_nodes: usize,
    pub num_graphs: usize,
    pub x: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub rbf: Option<Tensor>,
    pub edge_pair: Vec<usize>,
    pub edge_coef: Tensor,
    pub self_coef: Tensor,
    pub node_graph: Vec<usize>,
    /// `1 / n_g` per graph under mean pooling.
    pub pool_scale: Option<Tensor>,
}

impl Batch {
    pub fn num_messages(&self) -> usize {
        self.src.len()
    }

    pub fn from_prepared(graphs: &[&PreparedGraph], pooling: Pooling) -> Batch {
        let num_nodes: usize = graphs.iter().map(|g| g.num_nodes).sum();
        let num_edges: usize = graphs.iter().map(|g| g.src.len()).sum();
        let cols = graphs.first().map_or(0, |g| g.x.cols());
        let mut x = Vec::with_capacity(num_nodes * cols);
        let mut src = Vec::with_capacity(num_edges);
        let mut dst = Vec::with_capacity(num_edges);
        let mut edge_coef = Vec::with_capacity(num_edges);
        let mut self_coef = Vec::with_capacity(num_nodes);
        let mut node_graph = Vec::with_capacity(num_nodes);
        let num_pairs: usize = graphs.iter().filter_map(|g| g.rbf.as_ref().map(Tensor::rows)).sum();
        let rbf_cols = graphs.iter().find_map(|g| g.rbf.as_ref().map(Tensor::cols));
        let mut rbf = rbf_cols.map(|c| Vec::with_capacity(num_pairs * c));
        let mut edge_pair = Vec::with_capacity(if rbf.is_some() { num_edges } else { 0 });
        let mut offset = 0;
        let mut pair_offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            x.extend_from_slice(g.x.data());
            src.extend(g.src.iter().map(|s| s + offset));
            dst.extend(g.dst.iter().map(|d| d + offset));
            edge_coef.extend_from_slice(&g.edge_coef);
            self_coef.extend_from_slice(&g.self_coef);
            node_graph.extend(std::iter::repeat(gi).take(g.num_nodes));
            if let (Some(buf), Some(r)) = (rbf.as_mut(), g.rbf.as_ref()) {
                buf.extend_from_slice(r.data());
                edge_pair.extend(g.edge_pair.iter().map(|p| p + pair_offset));
                pair_offset += r.rows();
            }
            offset += g.num_nodes;
        }
        let pool_scale = (pooling == Pooling::Mean).then(|| {
            Tensor::column(graphs.iter().map(|g| 1.0 / g.num_nodes as f64).collect())
        });
        Batch {
            num_nodes,
            num_graphs: graphs.len(),
            x: Tensor::from_vec(num_nodes, cols, x).expect("uniform feature width"),
            src,
            dst,
            rbf: rbf.map(|buf| {
                let c = rbf_cols.unwrap_or(0);
                Tensor::from_vec(num_pairs, c, buf).expect("uniform basis size")
            }),
            edge_pair,
            edge_coef: Tensor::column(edge_coef),
            self_coef: Tensor::column(self_coef),
            node_graph,
            pool_scale,
        }
    }
}

impl Model {
    pub fn prepare_graph(&self, g: &DistGeoGraph) -> Result<PreparedGraph> {
        let spec = self.spec();
        let n = g.num_nodes;
        if n == 0 {
            return Err(Error::Config(format!("molecule {} has no atoms", g.name)));
        }
        if g.x.rows() != n || g.x.cols() != spec.in_features {
            return Err(Error::Config(format!(
                "molecule {}: node features {:?}, model expects {} x {}",
                g.name,
                g.x.shape(),
                n,
                spec.in_features
            )));
        }
        let limit = spec.max_order.hops();
        let edges: Vec<_> = g.edges.iter().filter(|e| e.order.hops() <= limit).collect();
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Config(format!(
                    "molecule {}: edge {} -> {} out of range for {n} nodes",
                    g.name, e.src, e.dst
                )));
            }
        }
        let weights = edges
            .iter()
            .map(|e| match spec.kind {
                ModelKind::Standard => Ok(1.0),
                ModelKind::Geometric => {
                    powerlaw_weight(e.distance, spec.power_law.r0, spec.power_law.exponent)
                }
                ModelKind::DgGcn => cutoff_weight(e.distance, self.basis().cutoff()),
            })
            .collect::<Result<Vec<f64>>>()?;

        let mut count = vec![1.0; n];
        let mut weighted = vec![1.0; n];
        for (e, w) in edges.iter().zip(&weights) {
            count[e.dst] += 1.0;
            weighted[e.dst] += w;
        }
        let (edge_coef, self_coef) = match spec.normalization() {
            Normalization::SelfInclusiveCount => (
                edges.iter().zip(&weights).map(|(e, w)| w / count[e.dst]).collect(),
                count.iter().map(|c| 1.0 / c).collect(),
            ),
            Normalization::WeightedDegree => (
                edges.iter().zip(&weights).map(|(e, w)| w / weighted[e.dst]).collect(),
                weighted.iter().map(|c| 1.0 / c).collect(),
            ),
            Normalization::Symmetric => (
                edges
                    .iter()
                    .zip(&weights)
                    .map(|(e, w)| w / (weighted[e.dst] * weighted[e.src]).sqrt())
                    .collect(),
                weighted.iter().map(|c| 1.0 / c).collect(),
            ),
        };

        let mut edge_pair = Vec::new();
        let rbf = (spec.kind == ModelKind::DgGcn).then(|| {
            let mut pair_of = HashMap::with_capacity(edges.len() / 2);
            let mut distances = Vec::with_capacity(edges.len() / 2);
            for e in &edges {
                let key = (e.src.min(e.dst), e.src.max(e.dst), e.distance.to_bits());
                let next = distances.len();
                let p = *pair_of.entry(key).or_insert(next);
                if p == next {
                    distances.push(e.distance);
                }
                edge_pair.push(p);
            }
            let basis = self.basis();
            let mut t = Tensor::zeros(distances.len(), basis.len());
            for (r, &d) in distances.iter().enumerate() {
                basis.expand_into(d, t.row_mut(r));
            }
            t
        });

        Ok(PreparedGraph {
            num_nodes: n,
            x: g.x.clone(),
            src: edges.iter().map(|e| e.src).collect(),
            dst: edges.iter().map(|e| e.dst).collect(),
            rbf,
            edge_pair,
            edge_coef,
            self_coef,
            target: g.target,
        })
    }

    pub fn prepare_batch(&self, graphs: &[&DistGeoGraph]) -> Result<Batch> {
        let prepared = graphs
            .iter()
            .map(|g| self.prepare_graph(g))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&PreparedGraph> = prepared.iter().collect();
        Ok(Batch::from_prepared(&refs, self.spec().pooling))
    }
}

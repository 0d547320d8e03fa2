use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{prec_to_pcor, SymMatrix};
use crate::sparsify::{Edge, SparsifiedNetwork};

/// Undirected conditional-independence graph.
///
/// `nodes` index into the source precision matrix; edge endpoints index
/// into `nodes`. Edge weights are partial correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    labels: Vec<String>,
    nodes: Vec<usize>,
    edges: Vec<Edge>,
    source_precision: SymMatrix,
}

impl Network {
    /// Graph from nonzero off-diagonal partial correlations. With `prune`,
    /// nodes without edges are dropped.
    pub fn from_sparsified(net: &SparsifiedNetwork, prune: bool) -> Self {
        Self::build(&net.sparse_parcor, net.sparse_precision.clone(), prune)
    }

    /// Graph of a (sparsified) precision matrix.
    pub fn from_precision(precision: &SymMatrix, prune: bool) -> Result<Self> {
        let pcor = prec_to_pcor(precision)?;
        Ok(Self::build(&pcor, precision.clone(), prune))
    }

    fn build(pcor: &SymMatrix, source_precision: SymMatrix, prune: bool) -> Self {
        let p = pcor.dim();
        let connected: Vec<bool> = (0..p)
            .map(|i| (0..p).any(|j| j != i && pcor.get(i, j) != 0.0))
            .collect();
        let nodes: Vec<usize> = (0..p).filter(|&i| !prune || connected[i]).collect();
        let mut position = vec![usize::MAX; p];
        for (k, &i) in nodes.iter().enumerate() {
            position[i] = k;
        }
        let mut edges = Vec::new();
        for i in 0..p {
            for j in i + 1..p {
                let w = pcor.get(i, j);
                if w != 0.0 {
                    edges.push(Edge {
                        i: position[i],
                        j: position[j],
                        weight: w,
                    });
                }
            }
        }
        Self {
            labels: nodes.iter().map(|&i| pcor.names()[i].clone()).collect(),
            nodes,
            edges,
            source_precision,
        }
    }

    /// Direct construction from labels and edges, without a precision
    /// matrix behind it (for topology-only analyses).
    pub fn from_edges(labels: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let n = labels.len();
        let mut cleaned: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(crate::error::invalid(format!("edge ({}, {}) out of range", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(crate::error::invalid(format!("self-loop at node {}", e.i)));
            }
            if !(e.weight.is_finite() && e.weight != 0.0) {
                return Err(crate::error::invalid(format!("edge ({}, {}) has weight {}", e.i, e.j, e.weight)));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            cleaned.push(Edge { i, j, weight: e.weight });
        }
        cleaned.sort_by_key(|e| (e.i, e.j));
        if cleaned.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(crate::error::invalid("duplicate edge"));
        }
        let mut omega = nalgebra::DMatrix::identity(n, n);
        for e in &cleaned {
            omega[(e.i, e.j)] = -e.weight;
            omega[(e.j, e.i)] = -e.weight;
        }
        Ok(Self {
            nodes: (0..n).collect(),
            source_precision: SymMatrix::new(omega, labels.clone())?,
            labels,
            edges: cleaned,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Index of each node in the source precision matrix.
    pub fn source_indices(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source_precision(&self) -> &SymMatrix {
        &self.source_precision
    }

    /// Neighbour lists with edge weights, neighbours ascending.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        for list in &mut adj {
            list.sort_by_key(|x| x.0);
        }
        adj
    }
}

/// Serializable edge-list form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl From<&Network> for EdgeList {
    fn from(net: &Network) -> Self {
        Self {
            nodes: net.labels.clone(),
            edges: net.edges.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::default_names;
    use nalgebra::dmatrix;

    #[test]
    fn empty_pruned_network() {
        let net = Network::from_precision(&SymMatrix::identity(default_names(4)), true).unwrap();
        assert_eq!(net.node_count(), 0);
        assert!(net.edges().is_empty());
        let net = Network::from_precision(&SymMatrix::identity(default_names(4)), false).unwrap();
        assert_eq!(net.node_count(), 4);
    }

    #[test]
    fn chain_has_two_edges() {
        let omega = SymMatrix::from_values(dmatrix![1.0, -0.3, 0.0; -0.3, 1.0, 0.4; 0.0, 0.4, 1.0]).unwrap();
        let net = Network::from_precision(&omega, true).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edges().len(), 2);
        assert!(net.edges()[0].weight > 0.0 && net.edges()[1].weight < 0.0);
    }

    #[test]
    fn pruning_keeps_connected_subgraph() {
        let omega = SymMatrix::from_values(dmatrix![
            1.0, 0.0, -0.2, 0.0;
            0.0, 1.0, 0.0, 0.0;
            -0.2, 0.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 1.0
        ])
        .unwrap();
        let net = Network::from_precision(&omega, true).unwrap();
        assert_eq!(net.labels(), &["V1".to_string(), "V3".to_string()]);
        assert_eq!(net.source_indices(), &[0, 2]);
        assert_eq!((net.edges()[0].i, net.edges()[0].j), (0, 1));
    }

    #[test]
    fn from_edges_validates() {
        let e = |i, j, w| Edge { i, j, weight: w };
        assert!(Network::from_edges(default_names(3), vec![e(0, 0, 1.0)]).is_err());
        assert!(Network::from_edges(default_names(3), vec![e(0, 5, 1.0)]).is_err());
        assert!(Network::from_edges(default_names(3), vec![e(0, 1, 0.0)]).is_err());
        assert!(Network::from_edges(default_names(3), vec![e(0, 1, 0.2), e(1, 0, 0.3)]).is_err());
        let net = Network::from_edges(default_names(3), vec![e(2, 1, 0.2)]).unwrap();
        assert_eq!((net.edges()[0].i, net.edges()[0].j), (1, 2));
    }
}

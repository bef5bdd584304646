//! Attributed directed multigraphs.
//!
//! `N(v)` is the multiset of sources of edges pointing *into* `v`; every
//! aggregation in the crate sums over it. Undirected graphs are stored as
//! pairs of antiparallel edges with equal attributes.

mod generate;
mod io;

use std::collections::VecDeque;
use std::sync::Arc;

pub use generate::{
    edge_task_label, fixtures, gen_chain, gen_edge_task, random_graph, RandomGraphSpec,
};
pub use io::{load_graphs, parse_graphs, save_graphs, write_graphs};

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub attr: Vec<f64>,
}

impl Edge {
    pub fn new(src: usize, dst: usize, attr: Vec<f64>) -> Self {
        Self { src, dst, attr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_features: Tensor<f64>,
    edges: Vec<Edge>,
    edge_dim: usize,
    label: Option<usize>,
    incoming: Vec<Vec<(usize, usize)>>,
    sources: Arc<[usize]>,
    targets: Arc<[usize]>,
}

impl Graph {
    /// `node_features` is `[n × d_in]`; every edge attribute must have length `edge_dim`.
    pub fn new(
        node_features: Tensor<f64>,
        edges: Vec<Edge>,
        edge_dim: usize,
        label: Option<usize>,
    ) -> Result<Self> {
        if node_features.rank() != 2 || node_features.rows() == 0 || node_features.cols() == 0 {
            return Err(invalid(format!(
                "node features must be a non-empty n x d matrix, got {:?}",
                node_features.shape()
            )));
        }
        if edge_dim == 0 {
            return Err(invalid("edge attribute width must be positive"));
        }
        let n = node_features.rows();
        let mut incoming = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            for endpoint in [e.src, e.dst] {
                if endpoint >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "edge endpoint",
                        index: endpoint,
                        len: n,
                    });
                }
            }
            if e.attr.len() != edge_dim {
                return Err(invalid(format!(
                    "edge {i} has attribute width {}, expected {edge_dim}",
                    e.attr.len()
                )));
            }
            incoming[e.dst].push((e.src, i));
        }
        let sources = edges.iter().map(|e| e.src).collect();
        let targets = edges.iter().map(|e| e.dst).collect();
        Ok(Self {
            node_features,
            edges,
            edge_dim,
            label,
            incoming,
            sources,
            targets,
        })
    }

    /// Builds a graph from per-node feature rows.
    pub fn from_rows(
        features: &[Vec<f64>],
        edges: Vec<Edge>,
        edge_dim: usize,
        label: Option<usize>,
    ) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        Self::new(Tensor::from_rows(features, d)?, edges, edge_dim, label)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    pub fn node_features(&self) -> &Tensor<f64> {
        &self.node_features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Source node of every edge, in edge-list order.
    pub fn edge_sources(&self) -> Arc<[usize]> {
        Arc::clone(&self.sources)
    }

    /// Target node of every edge, in edge-list order.
    pub fn edge_targets(&self) -> Arc<[usize]> {
        Arc::clone(&self.targets)
    }

    /// `[m × d_e]` edge attribute matrix.
    pub fn edge_attr_matrix(&self) -> Tensor<f64> {
        let data = self.edges.iter().flat_map(|e| e.attr.iter().copied()).collect();
        Tensor::matrix(self.edges.len(), self.edge_dim, data).expect("attr widths validated")
    }

    /// `(neighbor, edge index)` for every edge `(u, v)`, in edge-list order.
    pub fn incoming_neighbors(&self, v: usize) -> Result<&[(usize, usize)]> {
        self.incoming
            .get(v)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                what: "node",
                index: v,
                len: self.num_nodes(),
            })
    }

    /// Moves node `v` to `pi[v]`; edge order and attributes are kept.
    pub fn permute(&self, pi: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if pi.len() != n {
            return Err(invalid(format!("permutation has length {}, graph has {n} nodes", pi.len())));
        }
        let mut seen = vec![false; n];
        for &p in pi {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(invalid("permutation is not a bijection"));
            }
        }
        let d = self.feature_dim();
        let mut features = Tensor::zeros(&[n, d]);
        for (v, &p) in pi.iter().enumerate() {
            features.row_mut(p).copy_from_slice(self.node_features.row(v));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(pi[e.src], pi[e.dst], e.attr.clone()))
            .collect();
        Self::new(features, edges, self.edge_dim, self.label)
    }

    /// Same structure and features, new edge attributes (one per edge, in order).
    pub fn with_edge_attrs(&self, attrs: Vec<Vec<f64>>) -> Result<Self> {
        if attrs.len() != self.num_edges() {
            return Err(invalid("one attribute vector per edge required"));
        }
        let edge_dim = attrs.first().map_or(self.edge_dim, Vec::len);
        let edges = self
            .edges
            .iter()
            .zip(attrs)
            .map(|(e, a)| Edge::new(e.src, e.dst, a))
            .collect();
        Self::new(self.node_features.clone(), edges, edge_dim, self.label)
    }

    /// Same structure, new node features.
    pub fn with_node_features(&self, features: Tensor<f64>) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(invalid("one feature row per node required"));
        }
        Self::new(features, self.edges.clone(), self.edge_dim, self.label)
    }

    /// Directed hop distance from `source` along edge direction; `None` if unreachable.
    pub fn hop_distances(&self, source: usize) -> Result<Vec<Option<usize>>> {
        let n = self.num_nodes();
        if source >= n {
            return Err(Error::IndexOutOfRange {
                what: "node",
                index: source,
                len: n,
            });
        }
        let mut outgoing = vec![Vec::new(); n];
        for e in &self.edges {
            outgoing[e.src].push(e.dst);
        }
        let mut dist = vec![None; n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &v in &outgoing[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(invalid("num_classes must be positive"));
        }
        for (i, g) in graphs.iter().enumerate() {
            if let Some(l) = g.label() {
                if l >= num_classes {
                    return Err(Error::InvalidGraph {
                        graph: i,
                        message: format!("label {l} outside [0, {num_classes})"),
                    });
                }
            }
        }
        Ok(Self { graphs, num_classes })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.graphs.first().map(Graph::feature_dim)
    }

    pub fn edge_dim(&self) -> Option<usize> {
        self.graphs.first().map(Graph::edge_dim)
    }
}

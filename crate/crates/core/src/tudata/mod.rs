//! TU benchmark ingestion, node-feature synthesis and fold planning.

mod features;
mod folds;
mod parse;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::Matrix;

pub use features::{build_features, FeaturePolicy};
pub use folds::{make_folds, FoldPlan, FoldSplit};
pub use parse::{parse_tu, parse_tu_with, write_tu};

#[derive(Debug, Error)]
pub enum TuError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{file}:{line}: edge ({u}, {v}) leaves graph {graph} (nodes {first}..={last})")]
    EdgeOutOfRange {
        file: String,
        line: usize,
        u: usize,
        v: usize,
        graph: usize,
        first: usize,
        last: usize,
    },
    #[error("graph {0} has no nodes")]
    EmptyGraph(usize),
    #[error("feature policy {policy} needs node labels, but none were loaded")]
    MissingNodeLabels { policy: &'static str },
    #[error("dataset has {graphs} graphs, need at least {needed} for {needed}-fold planning")]
    TooSmall { graphs: usize, needed: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single labelled graph. Edges are undirected, stored once as `(u, v)`
/// with `u < v`, sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: Matrix,
    pub label: usize,
    /// Raw node labels as read from `_node_labels.txt`, when present.
    pub node_labels: Option<Vec<i64>>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list, dropping self-loops and
    /// duplicate pairs in either direction.
    pub fn new(num_nodes: usize, edges: &[(usize, usize)], features: Matrix, label: usize) -> Self {
        let mut canon: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        canon.sort_unstable();
        canon.dedup();
        debug_assert!(canon.iter().all(|&(_, v)| v < num_nodes));
        debug_assert_eq!(features.rows(), num_nodes);
        Self {
            num_nodes,
            edges: canon,
            features,
            label,
            node_labels: None,
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Relabels node `n` as `perm[n]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut features = Matrix::zeros(self.num_nodes, self.features.cols());
        for (n, &p) in perm.iter().enumerate() {
            features.row_mut(p).copy_from_slice(self.features.row(n));
        }
        let edges: Vec<_> = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut g = Graph::new(self.num_nodes, &edges, features, self.label);
        g.node_labels = self.node_labels.as_ref().map(|labels| {
            let mut out = vec![0; labels.len()];
            for (n, &p) in perm.iter().enumerate() {
                out[p] = labels[n];
            }
            out
        });
        g
    }

    /// Subgraph induced by `keep` (node indices, in the order they will be
    /// renumbered).
    pub fn induced(&self, keep: &[usize]) -> Graph {
        let mut index = vec![usize::MAX; self.num_nodes];
        for (new, &old) in keep.iter().enumerate() {
            index[old] = new;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(u, v)| index[u] != usize::MAX && index[v] != usize::MAX)
            .map(|&(u, v)| (index[u], index[v]))
            .collect();
        let mut g = Graph::new(keep.len(), &edges, self.features.select_rows(keep), self.label);
        g.node_labels = self
            .node_labels
            .as_ref()
            .map(|labels| keep.iter().map(|&k| labels[k]).collect());
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Original graph-label values, sorted; class `c` was `label_values[c]`.
    pub label_values: Vec<i64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn mean_nodes(&self) -> f64 {
        self.graphs.iter().map(|g| g.num_nodes as f64).sum::<f64>() / self.len() as f64
    }

    pub fn mean_edges(&self) -> f64 {
        self.graphs.iter().map(|g| g.edges.len() as f64).sum::<f64>() / self.len() as f64
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label] += 1;
        }
        counts
    }

    /// Rebuilds every graph's feature matrix under `policy`.
    pub fn with_features(mut self, policy: FeaturePolicy) -> Result<Self, TuError> {
        let feats = build_features(&self.graphs, policy)?;
        self.feature_dim = feats.first().map_or(0, Matrix::cols);
        for (g, f) in self.graphs.iter_mut().zip(feats) {
            g.features = f;
        }
        Ok(self)
    }
}

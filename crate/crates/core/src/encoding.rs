//! Dense random type encoding.
//!
//! Each node type and each edge type gets a fixed vector with i.i.d.
//! `U(low, high)` components. A node's relation summary is the mean of the
//! edge-type vectors over its incoming edges; isolated nodes get zeros.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    /// Node-type vector length; defaults to the node-type count.
    pub node_dim: Option<usize>,
    /// Edge-type vector length; defaults to the edge-type count.
    pub edge_dim: Option<usize>,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
    /// Ablation: identity vectors instead of random ones.
    pub one_hot: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            node_dim: None,
            edge_dim: None,
            low: -1.0,
            high: 1.0,
            seed: 0,
            one_hot: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeCodebook {
    pub node_vectors: Vec<Vec<f64>>,
    pub edge_vectors: Vec<Vec<f64>>,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub bounds: (f64, f64),
    pub seed: u64,
}

impl TypeCodebook {
    /// `m x node_dim` matrix of node-type vectors.
    pub fn node_matrix(&self) -> Tensor {
        Tensor::new(
            vec![self.node_vectors.len(), self.node_dim],
            self.node_vectors.concat(),
        )
        .expect("codebook rows have node_dim entries")
    }
}

/// Per-node mean of incoming edge-type vectors, `node_count x edge_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborRelationSummary {
    pub vectors: Tensor,
}

pub fn build_codebook(g: &HeteroGraph, cfg: &EncodingConfig) -> Result<TypeCodebook> {
    let (low, high) = (cfg.low, cfg.high);
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "encoding bounds must satisfy low < high, got ({low}, {high})"
        )));
    }
    let m = g.num_node_types();
    let n = g.num_edge_types();
    let node_dim = cfg.node_dim.unwrap_or(m);
    let edge_dim = cfg.edge_dim.unwrap_or(n);
    if node_dim == 0 && m > 0 {
        return Err(Error::InvalidArgument("node-type vector dimension is zero".into()));
    }
    if edge_dim == 0 && n > 0 {
        return Err(Error::InvalidArgument("edge-type vector dimension is zero".into()));
    }

    let (node_vectors, edge_vectors) = if cfg.one_hot {
        if node_dim != m || edge_dim != n {
            return Err(Error::InvalidArgument(
                "one-hot encoding needs dimensions equal to the type counts".into(),
            ));
        }
        (one_hot(m), one_hot(n))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut draw = |count: usize, dim: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| (0..dim).map(|_| rng.random_range(low..=high)).collect())
                .collect()
        };
        let nodes = draw(m, node_dim);
        (nodes, draw(n, edge_dim))
    };

    Ok(TypeCodebook {
        node_vectors,
        edge_vectors,
        node_dim,
        edge_dim,
        bounds: (low, high),
        seed: cfg.seed,
    })
}

fn one_hot(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Averages, for every node, the codebook vectors of its incoming edges'
/// types. Every incoming edge contributes one term.
pub fn neighbor_relation_summary(g: &HeteroGraph, cb: &TypeCodebook) -> Result<NeighborRelationSummary> {
    if cb.edge_vectors.len() < g.num_edge_types() {
        return Err(Error::Validation(format!(
            "codebook has {} edge types, graph has {}",
            cb.edge_vectors.len(),
            g.num_edge_types()
        )));
    }
    let d = cb.edge_dim;
    let mut vectors = Tensor::zeros(&[g.node_count(), d]);
    for v in 0..g.node_count() {
        let incoming = g.in_edges(v);
        if incoming.is_empty() {
            continue;
        }
        let row = vectors.row_mut(v);
        for &e in incoming {
            for (acc, x) in row.iter_mut().zip(&cb.edge_vectors[g.edge_types()[e]]) {
                *acc += x;
            }
        }
        let inv = 1.0 / incoming.len() as f64;
        for x in row {
            *x *= inv;
        }
    }
    Ok(NeighborRelationSummary { vectors })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph::GraphBuilder;

    fn graph(types: &[usize], edges: &[(usize, usize, usize)], rels: usize) -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let max_t = types.iter().copied().max().unwrap_or(0);
        for t in 0..=max_t {
            b.node_type(&format!("t{t}"));
        }
        for r in 0..rels {
            b.edge_type(&format!("r{r}"));
        }
        for &t in types {
            b.add_node(t, BTreeMap::new());
        }
        for &(s, d, r) in edges {
            b.add_edge(s, d, r);
        }
        b.build().unwrap()
    }

    #[test]
    fn default_dims_follow_type_counts() {
        let g = graph(&[0, 1, 2], &[(0, 1, 0), (1, 2, 1)], 2);
        let cb = build_codebook(&g, &EncodingConfig::default()).unwrap();
        assert_eq!(cb.node_vectors.len(), 3);
        assert!(cb.node_vectors.iter().all(|v| v.len() == 3));
        assert!(cb.edge_vectors.iter().all(|v| v.len() == 2));
        assert_eq!(cb, build_codebook(&g, &EncodingConfig::default()).unwrap());
    }

    #[test]
    fn invalid_bounds_and_dims() {
        let g = graph(&[0], &[], 0);
        let cfg = EncodingConfig { low: 1.0, high: 1.0, ..Default::default() };
        assert!(build_codebook(&g, &cfg).is_err());
        let cfg = EncodingConfig { node_dim: Some(0), ..Default::default() };
        assert!(build_codebook(&g, &cfg).is_err());
    }

    #[test]
    fn single_and_double_in_edge_summaries() {
        let g = graph(&[0, 0, 0, 0], &[(0, 1, 0), (0, 2, 0), (3, 2, 1)], 2);
        let cb = build_codebook(&g, &EncodingConfig::default()).unwrap();
        let s = neighbor_relation_summary(&g, &cb).unwrap();
        assert_eq!(s.vectors.row(1), cb.edge_vectors[0].as_slice());
        for k in 0..2 {
            let expected = (cb.edge_vectors[0][k] + cb.edge_vectors[1][k]) / 2.0;
            assert!((s.vectors.get(2, k) - expected).abs() < 1e-15);
        }
        assert_eq!(s.vectors.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn summary_needs_full_codebook() {
        let g = graph(&[0, 0], &[(0, 1, 0)], 1);
        let mut cb = build_codebook(&g, &EncodingConfig::default()).unwrap();
        cb.edge_vectors.clear();
        assert!(neighbor_relation_summary(&g, &cb).is_err());
    }

    #[test]
    fn one_hot_ablation() {
        let g = graph(&[0, 1], &[(0, 1, 0)], 1);
        let cfg = EncodingConfig { one_hot: true, ..Default::default() };
        let cb = build_codebook(&g, &cfg).unwrap();
        assert_eq!(cb.node_vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
}

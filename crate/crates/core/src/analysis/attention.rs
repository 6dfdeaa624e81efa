use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::layers::{GraphInputs, Model};

pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Mean first-layer attention between node types, indexed
/// `[source type][destination type]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix {
    pub types: Vec<String>,
    pub real: Vec<Vec<f64>>,
    pub binary: Vec<Vec<u8>>,
    pub threshold: f64,
    /// Edges averaged into each entry.
    pub counts: Vec<Vec<usize>>,
}

impl AttentionMatrix {
    /// Groups per-edge weights of `g`'s edges (in edge order) by endpoint
    /// types and binarizes at `threshold`.
    pub fn from_edge_weights(g: &HeteroGraph, weights: &[f64], threshold: f64) -> Result<Self> {
        if weights.len() < g.edge_count() {
            return Err(Error::shape(
                "attention_matrix",
                format!("{} weights for {} edges", weights.len(), g.edge_count()),
            ));
        }
        let t = g.num_node_types();
        let mut sum = vec![vec![0.0; t]; t];
        let mut counts = vec![vec![0usize; t]; t];
        for (&(s, d), &w) in g.edges().iter().zip(weights) {
            let (a, b) = (g.node_type(s), g.node_type(d));
            sum[a][b] += w;
            counts[a][b] += 1;
        }
        let real: Vec<Vec<f64>> = sum
            .iter()
            .zip(&counts)
            .map(|(row, c)| {
                row.iter()
                    .zip(c)
                    .map(|(&s, &k)| if k == 0 { 0.0 } else { s / k as f64 })
                    .collect()
            })
            .collect();
        let binary = real
            .iter()
            .map(|row| row.iter().map(|&x| u8::from(x >= threshold)).collect())
            .collect();
        Ok(AttentionMatrix {
            types: g.node_type_names().to_vec(),
            real,
            binary,
            threshold,
            counts,
        })
    }

    pub fn size(&self) -> usize {
        self.types.len()
    }

    /// Fraction of entries where the binary matrix equals `mask`.
    pub fn agreement(&self, mask: &[Vec<u8>]) -> f64 {
        let t = self.size();
        let hits = (0..t)
            .flat_map(|i| (0..t).map(move |j| (i, j)))
            .filter(|&(i, j)| mask.get(i).and_then(|r| r.get(j)) == Some(&self.binary[i][j]))
            .count();
        hits as f64 / (t * t).max(1) as f64
    }
}

/// Head-averaged first-layer attention of a bg-hgnn model over `g`'s edges
/// (self-loops excluded), grouped by node types.
pub fn extract_attention_matrix(model: &Model, g: &HeteroGraph, threshold: f64) -> Result<AttentionMatrix> {
    if model.gat_layers().is_empty() {
        return Err(Error::InvalidArgument("model has no attention layers".into()));
    }
    let inputs = model.prepare(g)?;
    attention_from_inputs(model, g, &inputs, threshold)
}

pub fn attention_from_inputs(model: &Model, g: &HeteroGraph, inputs: &GraphInputs, threshold: f64) -> Result<AttentionMatrix> {
    let (_, _, att) = model.predict(inputs)?;
    if att.is_empty() && g.edge_count() > 0 {
        return Err(Error::InvalidArgument("model produced no attention weights".into()));
    }
    AttentionMatrix::from_edge_weights(g, &att, threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaPath {
    /// Node type names along the path.
    pub types: Vec<String>,
    pub score: f64,
}

impl MetaPath {
    pub fn hops(&self) -> usize {
        self.types.len() - 1
    }

    /// Initials of the type names, e.g. `PAP`.
    pub fn abbreviation(&self) -> String {
        self.types
            .iter()
            .filter_map(|t| t.chars().next())
            .flat_map(char::to_uppercase)
            .collect()
    }
}

/// Every type sequence of 1 to `max_hops` hops, scored by the product of
/// averaged attention along its hops, best first. Ties keep the order in
/// which sequences are enumerated (shorter first, then lexicographic by
/// type index).
pub fn top_metapaths(m: &AttentionMatrix, max_hops: usize) -> Result<Vec<MetaPath>> {
    if max_hops == 0 {
        return Err(Error::InvalidArgument("max_hops must be at least 1".into()));
    }
    let t = m.size();
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<usize>, f64)> = (0..t).map(|i| (vec![i], 1.0)).collect();
    for _ in 0..max_hops {
        let mut next = Vec::with_capacity(frontier.len() * t);
        for (path, score) in &frontier {
            let last = *path.last().expect("paths are nonempty");
            for j in 0..t {
                let mut p = path.clone();
                p.push(j);
                next.push((p, score * m.real[last][j]));
            }
        }
        out.extend(next.iter().map(|(p, s)| MetaPath {
            types: p.iter().map(|&i| m.types[i].clone()).collect(),
            score: *s,
        }));
        frontier = next;
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph::GraphBuilder;

    fn two_type_graph() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let p = b.node_type("paper");
        let a = b.node_type("author");
        let r = b.edge_type("writes");
        b.add_node(p, BTreeMap::new());
        b.add_node(a, BTreeMap::new());
        b.add_node(a, BTreeMap::new());
        b.add_edge(1, 0, r);
        b.add_edge(2, 0, r);
        b.build().unwrap()
    }

    #[test]
    fn grouping_and_missing_pairs() {
        let g = two_type_graph();
        let m = AttentionMatrix::from_edge_weights(&g, &[0.3, 0.05], 0.1).unwrap();
        assert_eq!(m.size(), 2);
        assert!((m.real[1][0] - 0.175).abs() < 1e-15);
        assert_eq!(m.real[0][1], 0.0);
        assert_eq!(m.binary, vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn metapaths_are_sorted_and_single_type_is_closed() {
        let m = AttentionMatrix {
            types: vec!["n".into()],
            real: vec![vec![0.5]],
            binary: vec![vec![1]],
            threshold: 0.1,
            counts: vec![vec![1]],
        };
        let paths = top_metapaths(&m, 3).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.types.iter().all(|t| t == "n")));
        assert!(paths.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(top_metapaths(&m, 0).is_err());
    }

    #[test]
    fn abbreviation_uses_initials() {
        let p = MetaPath {
            types: vec!["paper".into(), "author".into(), "paper".into()],
            score: 1.0,
        };
        assert_eq!(p.abbreviation(), "PAP");
        assert_eq!(p.hops(), 2);
    }
}

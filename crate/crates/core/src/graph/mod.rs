//! Typed-node, typed-edge graphs with per-type feature tables.

mod io;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_graph, load_graph_with, write_graph, LoadOptions};
pub use synth::{synth_graph, EdgeTypeSpec, LabelRule, NodeTypeSpec, SchemaSpec};

/// Suffix given to edge types created by [`HeteroGraph::with_inverse_edges`].
pub const INVERSE_SUFFIX: &str = "__inv";

/// Feature table of one node type: one row per node of that type, one
/// column per channel. Channel names are sorted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub channels: Vec<String>,
    /// Global node ids, in row order.
    pub nodes: Vec<usize>,
    /// Row-major `nodes.len() x channels.len()` values.
    pub values: Vec<f64>,
}

impl FeatureTable {
    pub fn row(&self, local: usize) -> &[f64] {
        let w = self.channels.len();
        &self.values[local * w..(local + 1) * w]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }
}

/// Train/validation/test node id sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// A heterogeneous graph. Immutable once built; construct with
/// [`GraphBuilder`], the loaders or [`synth_graph`].
///
/// Edges are directed `(src, dst)`; neighborhoods are in-neighborhoods.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
    node_types: Vec<usize>,
    edges: Vec<(usize, usize)>,
    edge_types: Vec<usize>,
    features: Vec<FeatureTable>,
    labels: Option<BTreeMap<usize, usize>>,
    splits: Option<Splits>,
    local_index: Vec<usize>,
    in_offsets: Vec<usize>,
    in_edges: Vec<usize>,
}

impl HeteroGraph {
    pub fn empty() -> Self {
        GraphBuilder::new().build().expect("empty graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `m`, the number of node types.
    pub fn num_node_types(&self) -> usize {
        self.node_type_names.len()
    }

    /// `n = |R|`, the number of edge types (relations).
    pub fn num_edge_types(&self) -> usize {
        self.edge_type_names.len()
    }

    pub fn node_type_names(&self) -> &[String] {
        &self.node_type_names
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn node_type_id(&self, name: &str) -> Option<usize> {
        self.node_type_names.iter().position(|n| n == name)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<usize> {
        self.edge_type_names.iter().position(|n| n == name)
    }

    /// Node type of every node, indexed by node id.
    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.node_types[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edge type of every edge, indexed like [`Self::edges`].
    pub fn edge_types(&self) -> &[usize] {
        &self.edge_types
    }

    pub fn features(&self) -> &[FeatureTable] {
        &self.features
    }

    /// Feature row of node `v` inside its type's table.
    pub fn node_features(&self, v: usize) -> &[f64] {
        self.features[self.node_types[v]].row(self.local_index[v])
    }

    /// Row of `v` inside the feature table of its type.
    pub fn local_index(&self, v: usize) -> usize {
        self.local_index[v]
    }

    pub fn nodes_of_type(&self, t: usize) -> &[usize] {
        &self.features[t].nodes
    }

    pub fn labels(&self) -> Option<&BTreeMap<usize, usize>> {
        self.labels.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.values().max())
            .map_or(0, |m| m + 1)
    }

    pub fn splits(&self) -> Option<&Splits> {
        self.splits.as_ref()
    }

    /// Indices into [`Self::edges`] of the edges entering `v`.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Sorted, deduplicated in-neighbors of `v`, optionally restricted to
    /// one relation.
    pub fn neighbors(&self, v: usize, rel: Option<usize>) -> Result<Vec<usize>> {
        if v >= self.node_count() {
            return Err(Error::InvalidNode(v));
        }
        let set: BTreeSet<usize> = self
            .in_edges(v)
            .iter()
            .filter(|&&e| rel.is_none_or(|r| self.edge_types[e] == r))
            .map(|&e| self.edges[e].0)
            .collect();
        Ok(set.into_iter().collect())
    }

    /// Copy with labels and splits replaced.
    pub fn with_labels(&self, labels: Option<BTreeMap<usize, usize>>, splits: Option<Splits>) -> Result<Self> {
        let mut b = GraphBuilder::from_graph(self);
        b.labels = labels;
        b.splits = splits;
        b.build()
    }

    /// Copy with one extra edge type `<name>__inv` per relation holding the
    /// reversed edges.
    pub fn with_inverse_edges(&self) -> Result<Self> {
        let mut b = GraphBuilder::from_graph(self);
        let n = self.num_edge_types();
        for name in &self.edge_type_names {
            b.edge_type(&format!("{name}{INVERSE_SUFFIX}"));
        }
        for (&(s, d), &t) in self.edges.iter().zip(&self.edge_types) {
            b.add_edge(d, s, t + n);
        }
        b.build()
    }

    /// Copy with the given edges removed (indices into [`Self::edges`]).
    pub fn without_edges(&self, remove: &HashSet<usize>) -> Result<Self> {
        let mut b = GraphBuilder::from_graph(self);
        b.edges.clear();
        b.edge_types.clear();
        for (i, (&e, &t)) in self.edges.iter().zip(&self.edge_types).enumerate() {
            if !remove.contains(&i) {
                b.add_edge(e.0, e.1, t);
            }
        }
        b.build()
    }
}

/// Incremental construction of a [`HeteroGraph`]; [`GraphBuilder::build`]
/// validates every invariant.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
    node_types: Vec<usize>,
    node_features: Vec<BTreeMap<String, f64>>,
    edges: Vec<(usize, usize)>,
    edge_types: Vec<usize>,
    labels: Option<BTreeMap<usize, usize>>,
    splits: Option<Splits>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_graph(g: &HeteroGraph) -> Self {
        let node_features = (0..g.node_count())
            .map(|v| {
                let table = &g.features[g.node_types[v]];
                table
                    .channels
                    .iter()
                    .cloned()
                    .zip(table.row(g.local_index[v]).iter().copied())
                    .collect()
            })
            .collect();
        GraphBuilder {
            node_type_names: g.node_type_names.clone(),
            edge_type_names: g.edge_type_names.clone(),
            node_types: g.node_types.clone(),
            node_features,
            edges: g.edges.clone(),
            edge_types: g.edge_types.clone(),
            labels: g.labels.clone(),
            splits: g.splits.clone(),
        }
    }

    /// Id of the node type `name`, declaring it if new.
    pub fn node_type(&mut self, name: &str) -> usize {
        intern(&mut self.node_type_names, name)
    }

    /// Id of the edge type `name`, declaring it if new.
    pub fn edge_type(&mut self, name: &str) -> usize {
        intern(&mut self.edge_type_names, name)
    }

    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn add_node(&mut self, node_type: usize, features: BTreeMap<String, f64>) -> usize {
        self.node_types.push(node_type);
        self.node_features.push(features);
        self.node_types.len() - 1
    }

    pub fn add_edge(&mut self, src: usize, dst: usize, edge_type: usize) {
        self.edges.push((src, dst));
        self.edge_types.push(edge_type);
    }

    pub fn set_label(&mut self, node: usize, class: usize) {
        self.labels.get_or_insert_with(BTreeMap::new).insert(node, class);
    }

    pub fn set_labels(&mut self, labels: Option<BTreeMap<usize, usize>>) {
        self.labels = labels;
    }

    pub fn set_splits(&mut self, splits: Option<Splits>) {
        self.splits = splits;
    }

    pub fn build(self) -> Result<HeteroGraph> {
        let n = self.node_types.len();
        let m = self.node_type_names.len();
        let r = self.edge_type_names.len();
        if let Some(v) = self.node_types.iter().position(|&t| t >= m) {
            return Err(Error::Validation(format!("node {v} has undeclared type")));
        }

        let mut features: Vec<FeatureTable> = vec![FeatureTable::default(); m];
        let mut channel_sets: Vec<Option<Vec<String>>> = vec![None; m];
        let mut local_index = vec![0; n];
        for (v, (&t, feats)) in self.node_types.iter().zip(&self.node_features).enumerate() {
            if let Some((k, _)) = feats.iter().find(|(_, x)| !x.is_finite()) {
                return Err(Error::Validation(format!("node {v}: feature {k} is not finite")));
            }
            let keys: Vec<String> = feats.keys().cloned().collect();
            match &channel_sets[t] {
                None => {
                    features[t].channels = keys.clone();
                    channel_sets[t] = Some(keys);
                }
                Some(expected) if *expected != keys => {
                    return Err(Error::Validation(format!(
                        "node {v}: channels {keys:?} differ from type '{}' channels {expected:?}",
                        self.node_type_names[t]
                    )));
                }
                Some(_) => {}
            }
            let table = &mut features[t];
            local_index[v] = table.nodes.len();
            table.nodes.push(v);
            table.values.extend(feats.values().copied());
        }

        if self.edges.len() != self.edge_types.len() {
            return Err(Error::Validation("edge/type length mismatch".into()));
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (i, (&(s, d), &t)) in self.edges.iter().zip(&self.edge_types).enumerate() {
            if s >= n || d >= n {
                return Err(Error::Validation(format!(
                    "edge {i} ({s} -> {d}) references a missing node"
                )));
            }
            if t >= r {
                return Err(Error::Validation(format!("edge {i} has undeclared type")));
            }
            if !seen.insert((s, d, t)) {
                return Err(Error::Validation(format!(
                    "duplicate edge {s} -> {d} of type '{}'",
                    self.edge_type_names[t]
                )));
            }
        }

        if let Some(labels) = &self.labels {
            if let Some(&v) = labels.keys().find(|&&v| v >= n) {
                return Err(Error::Validation(format!("label for missing node {v}")));
            }
        }
        if let Some(splits) = &self.splits {
            for &v in splits.train.iter().chain(&splits.val).chain(&splits.test) {
                if v >= n {
                    return Err(Error::Validation(format!("split references missing node {v}")));
                }
            }
        }

        let mut in_offsets = vec![0usize; n + 1];
        for &(_, d) in &self.edges {
            in_offsets[d + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut cursor = in_offsets.clone();
        let mut in_edges = vec![0; self.edges.len()];
        for (i, &(_, d)) in self.edges.iter().enumerate() {
            in_edges[cursor[d]] = i;
            cursor[d] += 1;
        }

        Ok(HeteroGraph {
            node_type_names: self.node_type_names,
            edge_type_names: self.edge_type_names,
            node_types: self.node_types,
            edges: self.edges,
            edge_types: self.edge_types,
            features,
            labels: self.labels,
            splits: self.splits,
            local_index,
            in_offsets,
            in_edges,
        })
    }
}

fn intern(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|n| n == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

/// Gives every node type without feature channels `dim` synthetic channels
/// (`rand_000`, ...) filled with seeded `U(0, 1)` values. Typed node types are
/// left untouched.
pub fn init_featureless(g: &HeteroGraph, dim: usize, seed: u64) -> Result<HeteroGraph> {
    if dim == 0 {
        return Err(Error::InvalidArgument("featureless init dimension must be positive".into()));
    }
    let width = dim.saturating_sub(1).to_string().len().max(3);
    let names: Vec<String> = (0..dim).map(|i| format!("rand_{i:0width$}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::from_graph(g);
    for v in 0..g.node_count() {
        if g.features[g.node_types[v]].channels.is_empty() {
            b.node_features[v] = names.iter().map(|n| (n.clone(), rng.random::<f64>())).collect();
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn star() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let t = b.node_type("n");
        let r0 = b.edge_type("r0");
        let center = b.add_node(t, BTreeMap::new());
        for _ in 0..3 {
            let leaf = b.add_node(t, BTreeMap::new());
            b.add_edge(leaf, center, r0);
        }
        b.add_node(t, BTreeMap::new());
        b.build().unwrap()
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let g = star();
        assert!(g.neighbors(4, None).unwrap().is_empty());
    }

    #[test]
    fn star_center_neighbors() {
        let g = star();
        assert_eq!(g.neighbors(0, Some(0)).unwrap(), vec![1, 2, 3]);
        assert!(matches!(g.neighbors(9, None), Err(Error::InvalidNode(9))));
    }

    #[test]
    fn rejects_dangling_and_duplicate_edges() {
        let mut b = GraphBuilder::new();
        let t = b.node_type("a");
        let r = b.edge_type("r");
        b.add_node(t, BTreeMap::new());
        b.add_node(t, BTreeMap::new());
        let mut dangling = b.clone();
        dangling.add_edge(0, 5, r);
        assert!(matches!(dangling.build(), Err(Error::Validation(_))));
        b.add_edge(0, 1, r);
        b.add_edge(0, 1, r);
        assert!(matches!(b.build(), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_inconsistent_channels_within_type() {
        let mut b = GraphBuilder::new();
        let t = b.node_type("a");
        b.add_node(t, feats(&[("x", 1.0)]));
        b.add_node(t, feats(&[("y", 1.0)]));
        assert!(b.build().is_err());
    }

    #[test]
    fn inverse_edges_get_their_own_type() {
        let g = star().with_inverse_edges().unwrap();
        assert_eq!(g.num_edge_types(), 2);
        assert_eq!(g.edge_type_names()[1], "r0__inv");
        assert_eq!(g.neighbors(1, Some(1)).unwrap(), vec![0]);
    }

    #[test]
    fn featureless_init() {
        let mut b = GraphBuilder::new();
        let a = b.node_type("a");
        let z = b.node_type("z");
        b.add_node(a, feats(&[("x", 2.0)]));
        b.add_node(z, BTreeMap::new());
        let g = b.build().unwrap();
        let g2 = init_featureless(&g, 256, 3).unwrap();
        assert_eq!(g2.features()[z].channels.len(), 256);
        assert_eq!(g2.features()[a], g.features()[a]);
        assert_eq!(g2, init_featureless(&g, 256, 3).unwrap());
        assert!(g2.node_features(1).iter().all(|x| (0.0..1.0).contains(x)));
        assert!(init_featureless(&g, 0, 3).is_err());

        let typed = init_featureless(&g2, 8, 1).unwrap();
        assert_eq!(typed, g2);
    }
}

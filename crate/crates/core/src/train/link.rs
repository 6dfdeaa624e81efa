//! Held-out edge splits and negative sampling for link prediction.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, INVERSE_SUFFIX};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Pairs exactly two hops apart, ignoring edge direction and type.
    #[default]
    TwoHop,
    /// Uniform pairs at any distance.
    RandomHop,
}

impl std::str::FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-hop" => Ok(NegativeMode::TwoHop),
            "random-hop" => Ok(NegativeMode::RandomHop),
            _ => Err(Error::InvalidArgument(format!("unknown negative mode '{s}'"))),
        }
    }
}

/// Node pairs with 0/1 labels, positives first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkPairs {
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<bool>,
}

impl LinkPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn from_parts(positives: &[(usize, usize)], negatives: &[(usize, usize)]) -> Self {
        let mut pairs = positives.to_vec();
        pairs.extend_from_slice(negatives);
        let mut labels = vec![true; positives.len()];
        labels.resize(pairs.len(), false);
        LinkPairs { pairs, labels }
    }
}

/// Resolves a relation name, or picks the relation with the most edges.
pub fn resolve_relation(g: &HeteroGraph, name: Option<&str>) -> Result<usize> {
    match name {
        Some(n) => g
            .edge_type_id(n)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown relation '{n}'"))),
        None => {
            let mut counts = vec![0usize; g.num_edge_types()];
            for &t in g.edge_types() {
                counts[t] += 1;
            }
            (0..counts.len())
                .max_by_key(|&r| (counts[r], std::cmp::Reverse(r)))
                .filter(|&r| counts[r] > 0)
                .ok_or_else(|| Error::InvalidArgument("graph has no edges to predict".into()))
        }
    }
}

fn relation_edges(g: &HeteroGraph, rel: usize) -> Vec<(usize, usize)> {
    g.edges()
        .iter()
        .zip(g.edge_types())
        .filter(|(_, &t)| t == rel)
        .map(|(&e, _)| e)
        .collect()
}

/// Source and destination node types of a relation, from its first edge.
fn endpoint_types(g: &HeteroGraph, rel: usize) -> Result<(usize, usize)> {
    relation_edges(g, rel)
        .first()
        .map(|&(s, d)| (g.node_type(s), g.node_type(d)))
        .ok_or_else(|| Error::InvalidArgument(format!("relation '{}' has no edges", g.edge_type_names()[rel])))
}

/// Samples `count` negatives for relation `rel`. Negatives never coincide
/// with an existing `rel` edge and respect the relation's endpoint types.
/// For relations within one node type, two-hop pairs are taken with
/// `u < w`.
pub fn sample_negatives(g: &HeteroGraph, rel: usize, mode: NegativeMode, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if rel >= g.num_edge_types() {
        return Err(Error::InvalidArgument(format!("relation {rel} does not exist")));
    }
    let (st, dt) = endpoint_types(g, rel)?;
    let existing: HashSet<(usize, usize)> = relation_edges(g, rel).into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        NegativeMode::TwoHop => {
            let adj = undirected_adjacency(g);
            let mut candidates = Vec::new();
            for &u in g.nodes_of_type(st) {
                let mut two_hop = BTreeSet::new();
                for &m in &adj[u] {
                    for &w in &adj[m] {
                        if w != u && g.node_type(w) == dt && !adj[u].contains(&w) {
                            two_hop.insert(w);
                        }
                    }
                }
                candidates.extend(
                    two_hop
                        .into_iter()
                        .filter(|&w| !(st == dt && w < u) && !existing.contains(&(u, w)))
                        .map(|w| (u, w)),
                );
            }
            if candidates.len() < count {
                return Err(Error::InsufficientNegatives {
                    needed: count,
                    found: candidates.len(),
                });
            }
            candidates.shuffle(&mut rng);
            candidates.truncate(count);
            Ok(candidates)
        }
        NegativeMode::RandomHop => {
            let srcs = g.nodes_of_type(st);
            let dsts = g.nodes_of_type(dt);
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(count);
            let budget = count.saturating_mul(100).max(1000);
            for _ in 0..budget {
                if out.len() == count {
                    break;
                }
                let u = srcs[rng.random_range(0..srcs.len())];
                let w = dsts[rng.random_range(0..dsts.len())];
                if u != w && !existing.contains(&(u, w)) && seen.insert((u, w)) {
                    out.push((u, w));
                }
            }
            if out.len() < count {
                return Err(Error::InsufficientNegatives {
                    needed: count,
                    found: out.len(),
                });
            }
            Ok(out)
        }
    }
}

/// Every edge of relation `rel` as a positive, with as many negatives.
pub fn sample_link_pairs(g: &HeteroGraph, mode: NegativeMode, rel: usize, seed: u64) -> Result<LinkPairs> {
    if rel >= g.num_edge_types() {
        return Err(Error::InvalidArgument(format!("relation {rel} does not exist")));
    }
    let positives = relation_edges(g, rel);
    let negatives = sample_negatives(g, rel, mode, positives.len(), seed)?;
    Ok(LinkPairs::from_parts(&positives, &negatives))
}

fn undirected_adjacency(g: &HeteroGraph) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); g.node_count()];
    for &(s, d) in g.edges() {
        if s != d {
            adj[s].insert(d);
            adj[d].insert(s);
        }
    }
    adj
}

/// Target-relation edges split into train/val/test, plus the graph with
/// val and test edges (and their inverse-relation mirrors) removed.
#[derive(Clone, Debug)]
pub struct LinkSplit {
    pub relation: usize,
    pub train_graph: HeteroGraph,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

pub fn split_link_edges(g: &HeteroGraph, rel: usize, fractions: [f64; 3], seed: u64) -> Result<LinkSplit> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || fractions.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument(format!("invalid split fractions {fractions:?}")));
    }
    let mut ids: Vec<usize> = (0..g.edge_count()).filter(|&e| g.edge_types()[e] == rel).collect();
    if ids.is_empty() {
        return Err(Error::InvalidArgument("target relation has no edges".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let total: f64 = fractions.iter().sum();
    let n = ids.len();
    let n_train = ((fractions[0] / total) * n as f64).round() as usize;
    let n_val = (((fractions[1] / total) * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let edges = g.edges();
    let pick = |s: &[usize]| s.iter().map(|&e| edges[e]).collect::<Vec<_>>();
    let train = pick(&ids[..n_train]);
    let val = pick(&ids[n_train..n_train + n_val]);
    let test = pick(&ids[n_train + n_val..]);

    let held: HashSet<(usize, usize)> = val.iter().chain(&test).copied().collect();
    let inverse = g.edge_type_id(&format!("{}{INVERSE_SUFFIX}", g.edge_type_names()[rel]));
    let remove: HashSet<usize> = (0..g.edge_count())
        .filter(|&e| {
            let (s, d) = edges[e];
            let t = g.edge_types()[e];
            (t == rel && held.contains(&(s, d))) || (Some(t) == inverse && held.contains(&(d, s)))
        })
        .collect();
    Ok(LinkSplit {
        relation: rel,
        train_graph: g.without_edges(&remove)?,
        train,
        val,
        test,
    })
}

//! Seeded synthetic heterogeneous graphs with a planted class signal.
//!
//! Every node draws a latent class. Labeled nodes expose it as their label,
//! feature channels carry `signal * centroid[class] + N(0, 1)`, and each
//! relation links a source to a same-class destination with probability
//! `homophily` (uniformly otherwise).

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GraphBuilder, HeteroGraph, Splits};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTypeSpec {
    pub name: String,
    pub count: usize,
    #[serde(default)]
    pub channels: Vec<String>,
    /// Scale of the class centroid added to this type's features.
    #[serde(default)]
    pub signal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeTypeSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
    /// Expected out-degree of every source node.
    #[serde(default)]
    pub degree: f64,
    /// Probability that an edge joins nodes of the same latent class.
    #[serde(default)]
    pub homophily: f64,
    /// When set, this relation is the reverse of an earlier one and `degree`
    /// and `homophily` are ignored.
    #[serde(default)]
    pub inverse_of: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub node_type: String,
    pub classes: usize,
    /// Train/val/test fractions of the labeled nodes.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub seed: u64,
    pub node_types: Vec<NodeTypeSpec>,
    #[serde(default)]
    pub edge_types: Vec<EdgeTypeSpec>,
    #[serde(default)]
    pub labels: Option<LabelRule>,
    /// Number of latent classes when no label rule is given.
    #[serde(default)]
    pub latent_classes: Option<usize>,
}

impl SchemaSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        let names: Vec<&str> = self.node_types.iter().map(|t| t.name.as_str()).collect();
        for (i, t) in self.node_types.iter().enumerate() {
            if t.count == 0 {
                return bad(format!("node type '{}' has zero nodes", t.name));
            }
            if names[..i].contains(&t.name.as_str()) {
                return bad(format!("node type '{}' declared twice", t.name));
            }
        }
        for (i, e) in self.edge_types.iter().enumerate() {
            for end in [&e.src, &e.dst] {
                if !names.contains(&end.as_str()) {
                    return bad(format!("edge type '{}' references absent node type '{end}'", e.name));
                }
            }
            if !(e.degree >= 0.0 && e.degree.is_finite()) || !(0.0..=1.0).contains(&e.homophily) {
                return bad(format!("edge type '{}' has invalid degree or homophily", e.name));
            }
            if let Some(base) = &e.inverse_of {
                let Some(b) = self.edge_types[..i].iter().find(|x| &x.name == base) else {
                    return bad(format!("'{}' inverts unknown or later relation '{base}'", e.name));
                };
                if b.src != e.dst || b.dst != e.src {
                    return bad(format!("'{}' endpoints do not reverse '{base}'", e.name));
                }
            }
            if self.edge_types[..i].iter().any(|x| x.name == e.name) {
                return bad(format!("edge type '{}' declared twice", e.name));
            }
        }
        if let Some(l) = &self.labels {
            if !names.contains(&l.node_type.as_str()) {
                return bad(format!("label rule references absent node type '{}'", l.node_type));
            }
            if l.classes == 0 {
                return bad("label rule needs at least one class".into());
            }
        }
        Ok(())
    }

    fn classes(&self) -> usize {
        self.labels
            .as_ref()
            .map(|l| l.classes)
            .or(self.latent_classes)
            .unwrap_or(1)
            .max(1)
    }

    /// Four-type citation schema (paper, author, subject, term) with eight
    /// relations. Papers are labeled. Subjects always share their papers'
    /// class and authors usually do; terms and citations are noise.
    pub fn acm_like(seed: u64) -> Self {
        SchemaSpec {
            seed,
            node_types: vec![
                node("paper", 240, channels("kw", 8), 1.0),
                node("author", 120, channels("org", 6), 2.0),
                node("subject", 80, channels("field", 4), 2.0),
                node("term", 12, channels("t", 4), 2.0),
            ],
            // Citations and terms join unrelated classes.
            edge_types: vec![
                edge("paper_cite_paper", "paper", "paper", 1.0, 0.0),
                edge("paper_ref_paper", "paper", "paper", 1.0, 0.0),
                edge("paper_author", "paper", "author", 2.0, 0.7),
                inverse("author_paper", "paper_author", "author", "paper"),
                edge("paper_subject", "paper", "subject", 1.0, 1.0),
                inverse("subject_paper", "paper_subject", "subject", "paper"),
                edge("paper_term", "paper", "term", 2.0, 0.0),
                inverse("term_paper", "paper_term", "term", "paper"),
            ],
            labels: Some(LabelRule {
                node_type: "paper".into(),
                classes: 3,
                split: default_split(),
            }),
            latent_classes: None,
        }
    }

    /// Twenty nodes of two types with overlapping channels and three
    /// relations, small enough for finite-difference checks.
    pub fn tiny(seed: u64) -> Self {
        SchemaSpec {
            seed,
            node_types: vec![node("a", 12, channels("c", 3), 1.0), node("b", 8, channels("c", 2), 1.0)],
            edge_types: vec![
                edge("a_b", "a", "b", 1.5, 0.8),
                inverse("b_a", "a_b", "b", "a"),
                edge("a_a", "a", "a", 1.0, 0.5),
            ],
            labels: Some(LabelRule {
                node_type: "a".into(),
                classes: 3,
                split: default_split(),
            }),
            latent_classes: None,
        }
    }
}

fn channels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn node(name: &str, count: usize, channels: Vec<String>, signal: f64) -> NodeTypeSpec {
    NodeTypeSpec {
        name: name.into(),
        count,
        channels,
        signal,
    }
}

fn edge(name: &str, src: &str, dst: &str, degree: f64, homophily: f64) -> EdgeTypeSpec {
    EdgeTypeSpec {
        name: name.into(),
        src: src.into(),
        dst: dst.into(),
        degree,
        homophily,
        inverse_of: None,
    }
}

fn inverse(name: &str, base: &str, src: &str, dst: &str) -> EdgeTypeSpec {
    EdgeTypeSpec {
        name: name.into(),
        src: src.into(),
        dst: dst.into(),
        degree: 0.0,
        homophily: 0.0,
        inverse_of: Some(base.into()),
    }
}

/// Builds the graph described by `spec`. Pure in its input.
pub fn synth_graph(spec: &SchemaSpec) -> Result<HeteroGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = spec.classes();
    let mut b = GraphBuilder::new();

    // Nodes of each type are contiguous, types in declaration order.
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut by_class: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut latent: Vec<usize> = Vec::new();
    for t in &spec.node_types {
        let tid = b.node_type(&t.name);
        let centroids: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                t.channels
                    .iter()
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let mut ids = Vec::with_capacity(t.count);
        let mut groups = vec![Vec::new(); classes];
        for _ in 0..t.count {
            let c = rng.random_range(0..classes);
            let feats: BTreeMap<String, f64> = t
                .channels
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (name.clone(), t.signal * centroids[c][k] + noise)
                })
                .collect();
            let v = b.add_node(tid, feats);
            latent.push(c);
            ids.push(v);
            groups[c].push(v);
        }
        members.push(ids);
        by_class.push(groups);
    }

    let type_index = |name: &str| spec.node_types.iter().position(|t| t.name == name).unwrap();
    let mut generated: Vec<Vec<(usize, usize)>> = Vec::new();
    for e in &spec.edge_types {
        let rel = b.edge_type(&e.name);
        let pairs = match &e.inverse_of {
            Some(base) => {
                let bi = spec.edge_types.iter().position(|x| &x.name == base).unwrap();
                generated[bi].iter().map(|&(s, d)| (d, s)).collect()
            }
            None => sample_relation(
                &mut rng,
                e,
                &members[type_index(&e.src)],
                &by_class[type_index(&e.dst)],
                &members[type_index(&e.dst)],
                &latent,
            ),
        };
        for &(s, d) in &pairs {
            b.add_edge(s, d, rel);
        }
        generated.push(pairs);
    }

    if let Some(rule) = &spec.labels {
        let labeled = members[type_index(&rule.node_type)].clone();
        for &v in &labeled {
            b.set_label(v, latent[v]);
        }
        let mut order = labeled;
        order.shuffle(&mut rng);
        let total: f64 = rule.split.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let n_train = ((rule.split[0] / total) * order.len() as f64).round() as usize;
        let n_val = ((rule.split[1] / total) * order.len() as f64).round() as usize;
        let n_val = n_val.min(order.len() - n_train.min(order.len()));
        let n_train = n_train.min(order.len());
        let sorted = |s: &[usize]| {
            let mut v = s.to_vec();
            v.sort_unstable();
            v
        };
        b.set_splits(Some(Splits {
            train: sorted(&order[..n_train]),
            val: sorted(&order[n_train..n_train + n_val]),
            test: sorted(&order[n_train + n_val..]),
        }));
    }
    b.build()
}

fn sample_relation(
    rng: &mut ChaCha8Rng,
    e: &EdgeTypeSpec,
    sources: &[usize],
    dst_by_class: &[Vec<usize>],
    dsts: &[usize],
    latent: &[usize],
) -> Vec<(usize, usize)> {
    let whole = e.degree.floor() as usize;
    let frac = e.degree - whole as f64;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &s in sources {
        let k = whole + usize::from(rng.random::<f64>() < frac);
        for _ in 0..k {
            // Bounded retries keep sampling total on tiny or saturated types.
            for _ in 0..16 {
                let pool = if rng.random::<f64>() < e.homophily && !dst_by_class[latent[s]].is_empty() {
                    &dst_by_class[latent[s]]
                } else {
                    dsts
                };
                let d = pool[rng.random_range(0..pool.len())];
                if d != s && seen.insert((s, d)) {
                    out.push((s, d));
                    break;
                }
            }
        }
    }
    out
}

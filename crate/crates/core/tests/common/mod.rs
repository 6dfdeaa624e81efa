#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hetfuse::graph::{GraphBuilder, HeteroGraph, Splits};

/// Random graph with up to `max_types` node types (channel `c<t>` on type
/// `t`, plus a shared channel `s` on even types), up to `max_rels`
/// relations and no duplicate edges. Labels on roughly half the nodes.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, max_types: usize, max_rels: usize) -> HeteroGraph {
    let n = rng.random_range(1..=max_nodes);
    let types = rng.random_range(1..=max_types.min(n));
    let rels = rng.random_range(1..=max_rels);
    let mut b = GraphBuilder::new();
    for t in 0..types {
        b.node_type(&format!("t{t}"));
    }
    for r in 0..rels {
        b.edge_type(&format!("r{r}"));
    }
    for v in 0..n {
        let t = if v < types { v } else { rng.random_range(0..types) };
        let mut f = BTreeMap::from([(format!("c{t}"), rng.random_range(-3.0..3.0))]);
        if t % 2 == 0 {
            f.insert("s".into(), rng.random_range(-3.0..3.0));
        }
        b.add_node(t, f);
    }
    let mut seen = HashSet::new();
    for _ in 0..rng.random_range(0..=3 * n) {
        let e = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..rels));
        if seen.insert(e) {
            b.add_edge(e.0, e.1, e.2);
        }
    }
    let mut labeled = Vec::new();
    for v in 0..n {
        if rng.random::<bool>() {
            b.set_label(v, rng.random_range(0..3));
            labeled.push(v);
        }
    }
    if labeled.len() >= 3 {
        let k = labeled.len() / 3;
        b.set_splits(Some(Splits {
            train: labeled[..k].to_vec(),
            val: labeled[k..2 * k].to_vec(),
            test: labeled[2 * k..].to_vec(),
        }));
    }
    b.build().unwrap()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len(), "lengths differ");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

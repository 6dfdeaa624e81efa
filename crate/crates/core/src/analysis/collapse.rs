//! Relation collapse on a toy graph.
//!
//! Target nodes receive neighbors through up to three relations whose
//! one-dimensional neighbor values follow `N(0, 1)`, `N(-1, 1)` and
//! `N(1, 1)`. The task is to tell whether a node has any `r1` neighbor.
//! Averaging per-relation means into one shared channel maps a node with
//! only `r2` and `r3` neighbors onto the `r1` mean; encoding relation types
//! into separate channels keeps them apart.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::encoding::{build_codebook, neighbor_relation_summary, EncodingConfig};
use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, HeteroGraph};

pub const RELATION_MEANS: [f64; 3] = [0.0, -1.0, 1.0];
const MAX_NEIGHBORS_PER_RELATION: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub seed: u64,
    pub n_nodes: usize,
    pub relation_means: [f64; 3],
    pub relation_stds: [f64; 3],
    /// Mean of the combined statistic over nodes whose relations are
    /// exactly `{r2, r3}`.
    pub r23_statistic_mean: f64,
    pub r23_count: usize,
    pub mean_probe_accuracy: f64,
    pub channel_probe_accuracy: f64,
}

/// The toy graph and per-target bookkeeping.
pub struct CollapseGraph {
    pub graph: HeteroGraph,
    /// Ids of the target nodes.
    pub targets: Vec<usize>,
    /// Which relations each target has.
    pub relations: Vec<[bool; 3]>,
}

pub fn collapse_graph(n_nodes: usize, seed: u64) -> Result<CollapseGraph> {
    if n_nodes < 100 {
        return Err(Error::InvalidArgument(format!("collapse experiment needs at least 100 nodes, got {n_nodes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<Normal<f64>> = RELATION_MEANS
        .iter()
        .map(|&m| Normal::new(m, 1.0).expect("unit variance"))
        .collect();
    let mut b = GraphBuilder::new();
    let target_t = b.node_type("target");
    let nbr_t = b.node_type("neighbor");
    let rels: Vec<usize> = ["r1", "r2", "r3"].iter().map(|r| b.edge_type(r)).collect();
    let mut targets = Vec::with_capacity(n_nodes);
    let mut relations = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        // Uniform over the seven nonempty relation subsets.
        let mask = rng.random_range(1..8u8);
        let present = [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0];
        let v = b.add_node(target_t, BTreeMap::from([("value".to_string(), 0.0)]));
        for r in 0..3 {
            if !present[r] {
                continue;
            }
            for _ in 0..rng.random_range(1..=MAX_NEIGHBORS_PER_RELATION) {
                let x = dists[r].sample(&mut rng);
                let u = b.add_node(nbr_t, BTreeMap::from([("value".to_string(), x)]));
                b.add_edge(u, v, rels[r]);
            }
        }
        targets.push(v);
        relations.push(present);
    }
    Ok(CollapseGraph {
        graph: b.build()?,
        targets,
        relations,
    })
}

/// Per-relation mean of neighbor values, averaged over the relations a
/// node has: one scalar on a shared channel.
pub fn mean_combined_statistic(g: &HeteroGraph, v: usize) -> f64 {
    let mut sums = vec![0.0; g.num_edge_types()];
    let mut counts = vec![0usize; g.num_edge_types()];
    for &e in g.in_edges(v) {
        let (u, _) = g.edges()[e];
        let r = g.edge_types()[e];
        sums[r] += g.node_features(u)[0];
        counts[r] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    }
}

pub fn collapse_experiment(n_nodes: usize, seed: u64) -> Result<CollapseReport> {
    let cg = collapse_graph(n_nodes, seed)?;
    let g = &cg.graph;

    let mut pools: [Vec<f64>; 3] = Default::default();
    for (&(u, _), &r) in g.edges().iter().zip(g.edge_types()) {
        pools[r].push(g.node_features(u)[0]);
    }
    let stat = |p: &[f64]| {
        let m = p.iter().sum::<f64>() / p.len().max(1) as f64;
        let var = p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (p.len().max(2) - 1) as f64;
        (m, var.sqrt())
    };
    let (m0, s0) = stat(&pools[0]);
    let (m1, s1) = stat(&pools[1]);
    let (m2, s2) = stat(&pools[2]);

    let combined: Vec<f64> = cg.targets.iter().map(|&v| mean_combined_statistic(g, v)).collect();
    let r23: Vec<f64> = combined
        .iter()
        .zip(&cg.relations)
        .filter(|(_, p)| **p == [false, true, true])
        .map(|(&s, _)| s)
        .collect();

    // Both arms get four input columns.
    let cb = build_codebook(
        g,
        &EncodingConfig {
            edge_dim: Some(3),
            seed: seed ^ 0xc0de,
            ..Default::default()
        },
    )?;
    let omega = neighbor_relation_summary(g, &cb)?;
    let mean_rows: Vec<Vec<f64>> = combined.iter().map(|&s| vec![s, 0.0, 0.0, 0.0]).collect();
    let channel_rows: Vec<Vec<f64>> = cg
        .targets
        .iter()
        .zip(&combined)
        .map(|(&v, &s)| {
            let mut row = omega.vectors.row(v).to_vec();
            row.push(s);
            row
        })
        .collect();
    let labels: Vec<bool> = cg.relations.iter().map(|p| p[0]).collect();

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5911));
    let cut = order.len() * 7 / 10;
    let (train, test) = order.split_at(cut);

    Ok(CollapseReport {
        seed,
        n_nodes,
        relation_means: [m0, m1, m2],
        relation_stds: [s0, s1, s2],
        r23_statistic_mean: r23.iter().sum::<f64>() / r23.len().max(1) as f64,
        r23_count: r23.len(),
        mean_probe_accuracy: probe_accuracy(&mean_rows, &labels, train, test)?,
        channel_probe_accuracy: probe_accuracy(&channel_rows, &labels, train, test)?,
    })
}

/// Trains a logistic probe on `train` rows (features standardized with
/// training statistics) and returns its accuracy on `test` rows.
pub fn probe_accuracy(rows: &[Vec<f64>], labels: &[bool], train: &[usize], test: &[usize]) -> Result<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for &i in train {
        for k in 0..d {
            mean[k] += rows[i][k] / train.len() as f64;
        }
    }
    for &i in train {
        for k in 0..d {
            sd[k] += (rows[i][k] - mean[k]).powi(2) / train.len() as f64;
        }
    }
    let scale: Vec<f64> = sd.iter().map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    let standardize = |idx: &[usize]| -> Result<Tensor> {
        let data: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| (0..d).map(|k| (rows[i][k] - mean[k]) * scale[k]).chain([1.0]).collect())
            .collect();
        Tensor::from_rows(&data)
    };
    let x_train = standardize(train)?;
    let signs: Vec<f64> = train.iter().map(|&i| if labels[i] { -1.0 } else { 1.0 }).collect();

    let mut store = ParamStore::new();
    let w = store.add("probe.w", Tensor::zeros(&[d + 1, 1]));
    for _ in 0..500 {
        let mut tape = Tape::new();
        let x = tape.constant(x_train.clone());
        let wv = tape.param(&store, w);
        let z = tape.matmul(x, wv)?;
        let signed = tape.scale_rows(z, &signs)?;
        let sp = tape.softplus(signed)?;
        let loss = tape.mean(sp)?;
        let grads = tape.backward(loss, &store)?;
        let step = grads.get(w).clone();
        for (p, g) in store.get_mut(w).data_mut().iter_mut().zip(step.data()) {
            *p -= 1.0 * g;
        }
    }
    let x_test = standardize(test)?;
    let wt = store.get(w);
    let correct = test
        .iter()
        .enumerate()
        .filter(|(r, &i)| {
            let z: f64 = x_test.row(*r).iter().zip(wt.data()).map(|(a, b)| a * b).sum();
            (z > 0.0) == labels[i]
        })
        .count();
    Ok(correct as f64 / test.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_nodes_is_rejected() {
        assert!(collapse_experiment(50, 0).is_err());
    }

    #[test]
    fn r23_node_statistic_is_mean_of_relation_means() {
        let cg = collapse_graph(100, 4).unwrap();
        let g = &cg.graph;
        let (k, &v) = cg
            .targets
            .iter()
            .enumerate()
            .find(|(k, _)| cg.relations[*k] == [false, true, true])
            .unwrap();
        assert_eq!(cg.relations[k], [false, true, true]);
        let mut by_rel = [Vec::new(), Vec::new(), Vec::new()];
        for &e in g.in_edges(v) {
            by_rel[g.edge_types()[e]].push(g.node_features(g.edges()[e].0)[0]);
        }
        let m = |xs: &Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
        let expected = (m(&by_rel[1]) + m(&by_rel[2])) / 2.0;
        assert!((mean_combined_statistic(g, v) - expected).abs() < 1e-12);
    }

    #[test]
    fn accuracies_are_probabilities() {
        let r = collapse_experiment(300, 1).unwrap();
        for a in [r.mean_probe_accuracy, r.channel_probe_accuracy] {
            assert!((0.0..=1.0).contains(&a));
        }
    }
}

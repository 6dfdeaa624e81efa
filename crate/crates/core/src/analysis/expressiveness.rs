//! Encoding-level comparison between the relation-specific baseline and
//! the fused input encoding.
//!
//! For random pairs of small graphs over a shared schema, whenever the
//! baseline's sum-pooled outputs differ, the fused encodings must differ
//! too. Two encodings are equal when some node bijection maps the untyped
//! edge multiset onto itself and every node's `(x', o, ω)` triple onto the
//! image node's triple.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attr::{build_unified_schema, project_features};
use crate::encoding::{build_codebook, neighbor_relation_summary, EncodingConfig, TypeCodebook};
use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, HeteroGraph};
use crate::layers::{Activation, Model, ModelConfig, ModelKind};

pub const OUTPUT_TOLERANCE: f64 = 1e-6;
const ENCODING_TOLERANCE: f64 = 1e-9;
const MAX_NODES: usize = 6;
const CHANNELS: [&str; 2] = ["a", "b"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpressivenessReport {
    pub pairs: usize,
    /// Pairs whose baseline outputs differ.
    pub baseline_distinct: usize,
    /// Pairs whose fused encodings differ.
    pub encoding_distinct: usize,
    pub violations: usize,
}

/// Small graph with a fixed schema: node types `t0`, `t1`, relations
/// `r0..r2`, channel `a` on `t0` and `b` on `t1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallGraph {
    pub node_types: Vec<usize>,
    pub features: Vec<f64>,
    pub edges: Vec<(usize, usize, usize)>,
    pub num_node_types: usize,
    pub num_relations: usize,
}

impl SmallGraph {
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(2..=MAX_NODES);
        let num_node_types = rng.random_range(1..=2);
        let num_relations = rng.random_range(1..=3);
        // Every declared type keeps at least one node.
        let node_types = (0..n)
            .map(|v| if v < num_node_types { v } else { rng.random_range(0..num_node_types) })
            .collect();
        let features = (0..n).map(|_| f64::from(rng.random_range(0..3u8))).collect();
        let mut edges = Vec::new();
        for s in 0..n {
            for d in 0..n {
                for r in 0..num_relations {
                    if s != d && rng.random::<f64>() < 0.15 {
                        edges.push((s, d, r));
                    }
                }
            }
        }
        SmallGraph {
            node_types,
            features,
            edges,
            num_node_types,
            num_relations,
        }
    }

    /// One random edit: retype an edge, add or drop an edge, change a
    /// feature, change a node type, relabel all nodes, or nothing.
    pub fn mutate(&self, rng: &mut impl Rng) -> Self {
        let mut g = self.clone();
        let n = g.node_types.len();
        match rng.random_range(0..7) {
            0 if !g.edges.is_empty() && g.num_relations > 1 => {
                let i = rng.random_range(0..g.edges.len());
                let (s, d, r) = g.edges[i];
                let r2 = (r + rng.random_range(1..g.num_relations)) % g.num_relations;
                if !g.edges.contains(&(s, d, r2)) {
                    g.edges[i] = (s, d, r2);
                }
            }
            1 => {
                let s = rng.random_range(0..n);
                let d = rng.random_range(0..n);
                let r = rng.random_range(0..g.num_relations);
                if s != d && !g.edges.contains(&(s, d, r)) {
                    g.edges.push((s, d, r));
                }
            }
            2 if !g.edges.is_empty() => {
                let i = rng.random_range(0..g.edges.len());
                g.edges.remove(i);
            }
            3 => {
                let v = rng.random_range(0..n);
                g.features[v] = f64::from(rng.random_range(0..3u8));
            }
            4 if g.num_node_types > 1 => {
                let v = rng.random_range(0..n);
                let t = g.node_types[v];
                if g.node_types.iter().filter(|&&x| x == t).count() > 1 {
                    g.node_types[v] = 1 - t;
                }
            }
            5 => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(rng);
                let mut types = vec![0; n];
                let mut feats = vec![0.0; n];
                for v in 0..n {
                    types[perm[v]] = g.node_types[v];
                    feats[perm[v]] = g.features[v];
                }
                g.node_types = types;
                g.features = feats;
                g.edges = g.edges.iter().map(|&(s, d, r)| (perm[s], perm[d], r)).collect();
                g.edges.shuffle(rng);
            }
            _ => {}
        }
        g
    }

    /// Every type and relation of the schema is declared, so graphs built
    /// from the same schema share type ids.
    pub fn to_graph(&self) -> Result<HeteroGraph> {
        let mut b = GraphBuilder::new();
        let channels = CHANNELS;
        for t in 0..self.num_node_types {
            b.node_type(&format!("t{t}"));
        }
        for r in 0..self.num_relations {
            b.edge_type(&format!("r{r}"));
        }
        for (v, &t) in self.node_types.iter().enumerate() {
            b.add_node(t, BTreeMap::from([(channels[t].to_string(), self.features[v])]));
        }
        for &(s, d, r) in &self.edges {
            b.add_edge(s, d, r);
        }
        b.build()
    }
}

/// Per-node `(x', o, ω)` triples, concatenated. `x'` is laid out over
/// `channels` so graphs whose present types differ stay comparable.
pub fn encode(g: &HeteroGraph, cb: &TypeCodebook, channels: &[&str]) -> Result<Vec<Vec<f64>>> {
    let schema = build_unified_schema(g, 0.0);
    let uf = project_features(g, &schema)?;
    let nrs = neighbor_relation_summary(g, cb)?;
    Ok((0..g.node_count())
        .map(|v| {
            let mut row: Vec<f64> = channels
                .iter()
                .map(|c| schema.column(c).map_or(schema.sentinel, |i| uf.values.get(v, i)))
                .collect();
            row.extend(&cb.node_vectors[g.node_type(v)]);
            row.extend(nrs.vectors.row(v));
            row
        })
        .collect())
}

/// Whether some bijection of nodes maps one encoded graph onto the other.
pub fn encodings_equal(g1: &HeteroGraph, e1: &[Vec<f64>], g2: &HeteroGraph, e2: &[Vec<f64>]) -> bool {
    let n = e1.len();
    if n != e2.len() || g1.edge_count() != g2.edge_count() {
        return false;
    }
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= ENCODING_TOLERANCE);
    let mut count2: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &e in g2.edges() {
        *count2.entry(e).or_default() += 1;
    }
    let mut count1: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &e in g1.edges() {
        *count1.entry(e).or_default() += 1;
    }
    // Candidate images per node, then backtracking.
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|v| (0..n).filter(|&u| close(&e1[v], &e2[u])).collect())
        .collect();
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn search(
        v: usize,
        perm: &mut [usize],
        used: &mut [bool],
        candidates: &[Vec<usize>],
        count1: &BTreeMap<(usize, usize), usize>,
        count2: &BTreeMap<(usize, usize), usize>,
    ) -> bool {
        if v == perm.len() {
            return count1
                .iter()
                .all(|(&(s, d), &k)| count2.get(&(perm[s], perm[d])) == Some(&k));
        }
        for &u in &candidates[v] {
            if !used[u] {
                used[u] = true;
                perm[v] = u;
                if search(v + 1, perm, used, candidates, count1, count2) {
                    return true;
                }
                used[u] = false;
            }
        }
        perm[v] = usize::MAX;
        false
    }
    search(0, &mut perm, &mut used, &candidates, &count1, &count2)
}

/// Sum-pooled outputs of a baseline model with fixed parameters.
fn pooled(model: &Model, g: &HeteroGraph) -> Result<Vec<f64>> {
    let inputs = model.prepare(g)?;
    let (h, _, _) = model.predict(&inputs)?;
    let mut out = vec![0.0; h.cols()];
    for v in 0..h.rows() {
        for (acc, x) in out.iter_mut().zip(h.row(v)) {
            *acc += x;
        }
    }
    Ok(out)
}

/// Checks `n_pairs` random graph pairs and counts pairs whose baseline
/// outputs differ while their fused encodings coincide.
pub fn expressiveness_check(n_pairs: usize, seed: u64) -> Result<ExpressivenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ExpressivenessReport {
        pairs: n_pairs,
        ..Default::default()
    };
    for _ in 0..n_pairs {
        let a = SmallGraph::random(&mut rng);
        let b = a.mutate(&mut rng);
        let (ga, gb) = (a.to_graph()?, b.to_graph()?);
        let model_cfg = ModelConfig {
            kind: ModelKind::RgcnBaseline,
            layers: 2,
            hidden: 4,
            activation: Activation::Elu,
            seed: rng.random(),
            ..Default::default()
        };
        let model = Model::build(&ga, &model_cfg)?;
        let (pa, pb) = (pooled(&model, &ga)?, pooled(&model, &gb)?);
        let baseline_differs = pa.iter().zip(&pb).any(|(x, y)| (x - y).abs() > OUTPUT_TOLERANCE);

        let cb = build_codebook(
            &ga,
            &EncodingConfig {
                seed: rng.random(),
                ..Default::default()
            },
        )?;
        let (ea, eb) = (encode(&ga, &cb, &CHANNELS)?, encode(&gb, &cb, &CHANNELS)?);
        let encoding_differs = !encodings_equal(&ga, &ea, &gb, &eb);

        report.baseline_distinct += usize::from(baseline_differs);
        report.encoding_distinct += usize::from(encoding_differs);
        if baseline_differs && !encoding_differs {
            report.violations += 1;
        }
    }
    Ok(report)
}

impl ExpressivenessReport {
    pub fn ensure_clean(&self) -> Result<()> {
        if self.violations == 0 {
            Ok(())
        } else {
            Err(Error::Validation(format!("{} expressiveness violations", self.violations)))
        }
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::uniform_matrix;
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    #[default]
    Elu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => tape.leaky_relu(x, 0.0),
            Activation::Elu => tape.elu(x),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }
}

/// Per-relation edge lists with the reciprocal in-degree of every node
/// under that relation (0 when it has none).
#[derive(Clone, Debug, PartialEq)]
pub struct RelationIndex {
    pub num_nodes: usize,
    pub src: Vec<Vec<usize>>,
    pub dst: Vec<Vec<usize>>,
    pub inv_degree: Vec<Vec<f64>>,
}

impl RelationIndex {
    pub fn new(g: &HeteroGraph) -> Self {
        let n = g.node_count();
        let r = g.num_edge_types();
        let mut src = vec![Vec::new(); r];
        let mut dst = vec![Vec::new(); r];
        let mut deg = vec![vec![0usize; n]; r];
        for (&(s, d), &t) in g.edges().iter().zip(g.edge_types()) {
            src[t].push(s);
            dst[t].push(d);
            deg[t][d] += 1;
        }
        let inv_degree = deg
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|k| if k == 0 { 0.0 } else { 1.0 / k as f64 })
                    .collect()
            })
            .collect();
        RelationIndex {
            num_nodes: n,
            src,
            dst,
            inv_degree,
        }
    }

    pub fn num_relations(&self) -> usize {
        self.src.len()
    }
}

/// Relation-specific layer: `σ(W_0 h_v + Σ_r mean_{u ∈ N_r(v)} W_r h_u)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RgcnLayer {
    self_w: ParamId,
    rel_w: Vec<ParamId>,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgcnLayerParams {
    pub self_weight: Tensor,
    pub relation_weights: Vec<Tensor>,
    pub activation: Activation,
}

impl RgcnLayer {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        num_relations: usize,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let self_w = store.add(format!("{prefix}.self"), uniform_matrix(out_dim, in_dim, rng));
        let rel_w = (0..num_relations)
            .map(|r| store.add(format!("{prefix}.rel{r}"), uniform_matrix(out_dim, in_dim, rng)))
            .collect();
        RgcnLayer {
            self_w,
            rel_w,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.out_dim
    }

    pub fn num_relations(&self) -> usize {
        self.rel_w.len()
    }

    pub fn params(&self, store: &ParamStore) -> RgcnLayerParams {
        RgcnLayerParams {
            self_weight: store.get(self.self_w).clone(),
            relation_weights: self.rel_w.iter().map(|&id| store.get(id).clone()).collect(),
            activation: self.activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, rel: &RelationIndex, h: Var) -> Result<Var> {
        let shape = tape.shape(h);
        if shape[0] != rel.num_nodes || shape[1] != self.in_dim || rel.num_relations() != self.rel_w.len() {
            return Err(Error::shape(
                "rgcn_forward",
                format!(
                    "input {shape:?} with {} relations, layer expects {}x{} with {}",
                    rel.num_relations(),
                    rel.num_nodes,
                    self.in_dim,
                    self.rel_w.len()
                ),
            ));
        }
        let w0 = tape.param(store, self.self_w);
        let mut acc = tape.matmul_nt(h, w0)?;
        for (r, &wid) in self.rel_w.iter().enumerate() {
            if rel.src[r].is_empty() {
                continue;
            }
            let w = tape.param(store, wid);
            let msgs = tape.gather_rows(h, &rel.src[r])?;
            let msgs = tape.matmul_nt(msgs, w)?;
            let summed = tape.segment_sum(msgs, &rel.dst[r], rel.num_nodes)?;
            let mean = tape.scale_rows(summed, &rel.inv_degree[r])?;
            acc = tape.add(acc, mean)?;
        }
        self.activation.apply(tape, acc)
    }
}

/// One baseline layer evaluated on fixed parameters.
pub fn rgcn_forward(g: &HeteroGraph, h: &Tensor, p: &RgcnLayerParams) -> Result<Tensor> {
    let (out_dim, in_dim) = (p.self_weight.rows(), p.self_weight.cols());
    if p.relation_weights.len() != g.num_edge_types()
        || p.relation_weights.iter().any(|w| w.shape() != p.self_weight.shape())
    {
        return Err(Error::shape(
            "rgcn_forward",
            format!(
                "{} relation matrices for {} relations",
                p.relation_weights.len(),
                g.num_edge_types()
            ),
        ));
    }
    let mut store = ParamStore::new();
    let self_w = store.add("rgcn.self", p.self_weight.clone());
    let rel_w = p
        .relation_weights
        .iter()
        .enumerate()
        .map(|(r, w)| store.add(format!("rgcn.rel{r}"), w.clone()))
        .collect();
    let layer = RgcnLayer {
        self_w,
        rel_w,
        in_dim,
        out_dim,
        activation: p.activation,
    };
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let out = layer.forward(&mut tape, &store, &RelationIndex::new(g), hv)?;
    Ok(tape.value(out).clone())
}

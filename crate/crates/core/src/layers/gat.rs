use rand::Rng;
use serde::{Deserialize, Serialize};

use super::uniform_matrix;
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Edge list seen by attention layers: the graph's edges (types dropped)
/// followed by one self-loop per node when enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct GatEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub num_nodes: usize,
    /// Edges before this index are real graph edges.
    pub num_real: usize,
}

impl GatEdges {
    pub fn new(edges: &[(usize, usize)], num_nodes: usize, self_loops: bool) -> Result<Self> {
        let mut src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let mut dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        if let Some(&(s, d)) = edges.iter().find(|e| e.0 >= num_nodes || e.1 >= num_nodes) {
            return Err(Error::Validation(format!("edge {s} -> {d} out of range")));
        }
        if self_loops {
            src.extend(0..num_nodes);
            dst.extend(0..num_nodes);
        } else {
            let mut has_in = vec![false; num_nodes];
            for &d in &dst {
                has_in[d] = true;
            }
            if let Some(v) = has_in.iter().position(|h| !h) {
                return Err(Error::Validation(format!(
                    "node {v} has no in-edges and self-loops are disabled"
                )));
            }
        }
        Ok(GatEdges {
            src,
            dst,
            num_nodes,
            num_real: edges.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Head {
    /// `out x in`
    w: ParamId,
    /// `out x 2`: column 0 scores the source, column 1 the destination.
    a: ParamId,
}

/// Multi-head graph attention layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GatLayer {
    heads: Vec<Head>,
    in_dim: usize,
    head_dim: usize,
    /// Concatenate heads (hidden layers) or average them (output layer).
    concat: bool,
    slope: f64,
}

/// Values of one GAT layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayerParams {
    /// Per head `(W, a)` with `W: out x in` and `a` of length `2 * out`
    /// (source half first).
    pub heads: Vec<(Tensor, Vec<f64>)>,
    pub slope: f64,
}

pub struct GatOutput {
    pub h: Var,
    /// Per head, an `edges x 1` column of attention weights.
    pub attention: Vec<Var>,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        head_dim: usize,
        heads: usize,
        concat: bool,
        slope: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || in_dim == 0 || head_dim == 0 {
            return Err(Error::InvalidArgument("GAT layer needs positive heads and dims".into()));
        }
        let heads = (0..heads)
            .map(|k| {
                let w = store.add(format!("{prefix}.head{k}.w"), uniform_matrix(head_dim, in_dim, rng));
                let a = store.add(format!("{prefix}.head{k}.a"), uniform_matrix(head_dim, 2, rng));
                Head { w, a }
            })
            .collect();
        Ok(GatLayer {
            heads,
            in_dim,
            head_dim,
            concat,
            slope,
        })
    }

    pub fn output_dim(&self) -> usize {
        if self.concat {
            self.head_dim * self.heads.len()
        } else {
            self.head_dim
        }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn params(&self, store: &ParamStore) -> GatLayerParams {
        let heads = self
            .heads
            .iter()
            .map(|h| {
                let a = store.get(h.a);
                let mut flat: Vec<f64> = (0..self.head_dim).map(|i| a.get(i, 0)).collect();
                flat.extend((0..self.head_dim).map(|i| a.get(i, 1)));
                (store.get(h.w).clone(), flat)
            })
            .collect();
        GatLayerParams {
            heads,
            slope: self.slope,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, edges: &GatEdges, h: Var) -> Result<GatOutput> {
        let (n, d_in) = (tape.shape(h)[0], tape.shape(h)[1]);
        if n != edges.num_nodes || d_in != self.in_dim {
            return Err(Error::shape(
                "gat_forward",
                format!("input {n}x{d_in}, layer expects {}x{}", edges.num_nodes, self.in_dim),
            ));
        }
        let pick_src = tape.constant(Tensor::column(&[1.0, 0.0]));
        let pick_dst = tape.constant(Tensor::column(&[0.0, 1.0]));
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut attention = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w = tape.param(store, head.w);
            let a = tape.param(store, head.a);
            let z = tape.matmul_nt(h, w)?;
            let scores = tape.matmul(z, a)?;
            let s_src = tape.matmul(scores, pick_src)?;
            let s_dst = tape.matmul(scores, pick_dst)?;
            let e_src = tape.gather_rows(s_src, &edges.src)?;
            let e_dst = tape.gather_rows(s_dst, &edges.dst)?;
            let logits = tape.add(e_src, e_dst)?;
            let logits = tape.leaky_relu(logits, self.slope)?;
            let alpha = tape.segment_softmax(logits, &edges.dst, n)?;
            let msgs = tape.gather_rows(z, &edges.src)?;
            let weights = tape.expand_cols(alpha, self.head_dim)?;
            let weighted = tape.mul(msgs, weights)?;
            outs.push(tape.segment_sum(weighted, &edges.dst, n)?);
            attention.push(alpha);
        }
        let h = if self.concat {
            tape.concat_cols(&outs)?
        } else {
            let mut acc = outs[0];
            for &o in &outs[1..] {
                acc = tape.add(acc, o)?;
            }
            tape.scale(acc, 1.0 / outs.len() as f64)?
        };
        Ok(GatOutput { h, attention })
    }
}

/// Plain single-layer GAT forward for fixed parameters, without recording
/// into a caller's tape. Returns the new features and per-edge attention
/// averaged over heads.
pub fn gat_forward(edges: &GatEdges, h: &Tensor, p: &GatLayerParams, concat: bool) -> Result<(Tensor, Vec<f64>)> {
    let Some((w0, _)) = p.heads.first() else {
        return Err(Error::InvalidArgument("GAT layer needs at least one head".into()));
    };
    let mut store = ParamStore::new();
    let mut heads = Vec::new();
    for (k, (w, a)) in p.heads.iter().enumerate() {
        let d = w.rows();
        if a.len() != 2 * d {
            return Err(Error::shape("gat_forward", "attention vector must have length 2 * out"));
        }
        let mut am = Tensor::zeros(&[d, 2]);
        for i in 0..d {
            am.set(i, 0, a[i]);
            am.set(i, 1, a[d + i]);
        }
        let wid = store.add(format!("gat.head{k}.w"), w.clone());
        let aid = store.add(format!("gat.head{k}.a"), am);
        heads.push(Head { w: wid, a: aid });
    }
    let layer = GatLayer {
        heads,
        in_dim: w0.cols(),
        head_dim: w0.rows(),
        concat,
        slope: p.slope,
    };
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let out = layer.forward(&mut tape, &store, edges, hv)?;
    let k = out.attention.len() as f64;
    let mut att = vec![0.0; edges.len()];
    for a in &out.attention {
        for (acc, x) in att.iter_mut().zip(tape.value(*a).data()) {
            *acc += x / k;
        }
    }
    Ok((tape.value(out.h).clone(), att))
}

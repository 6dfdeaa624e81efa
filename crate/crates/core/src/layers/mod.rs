//! Message-passing layers and the two model families built from them.

mod gat;
mod model;
mod rgcn;

pub use gat::{gat_forward, GatEdges, GatLayer, GatLayerParams, GatOutput};
pub use model::{GraphInputs, Model, ModelConfig, ModelKind, ModelOutput};
pub use rgcn::{rgcn_forward, Activation, RelationIndex, RgcnLayer, RgcnLayerParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `rows x cols` matrix with Glorot-uniform entries.
pub(crate) fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let s = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-s..s)).collect();
    Tensor::matrix(rows, cols, data).expect("length matches shape")
}

/// Affine map `x W^T + b`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn register(store: &mut ParamStore, prefix: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let w = store.add(format!("{prefix}.w"), uniform_matrix(out_dim, in_dim, rng));
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[1, out_dim]));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let rows = tape.shape(x)[0];
        if tape.shape(x).get(1) != Some(&self.in_dim) {
            return Err(Error::shape(
                "linear",
                format!("input {:?}, expected {} columns", tape.shape(x), self.in_dim),
            ));
        }
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xw = tape.matmul_nt(x, w)?;
        let ones = tape.constant(Tensor::full(&[rows, 1], 1.0));
        let bias = tape.matmul(ones, b)?;
        tape.add(xw, bias)
    }
}

/// Inverted dropout on a recorded value.
pub(crate) fn dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
    if p <= 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x).to_vec();
    let keep = 1.0 / (1.0 - p);
    let n: usize = shape.iter().product();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let m = tape.constant(Tensor::new(shape, mask)?);
    tape.mul(x, m)
}

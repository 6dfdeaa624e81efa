//! Low-rank Kronecker fusion of a node's attributes, type vector and
//! relation summary.
//!
//! Each input gets a trailing `1` appended, so the full interaction tensor
//! `x1 ⊗ o1 ⊗ w1` also contains every unimodal and bimodal term. Projecting
//! that tensor with a weight of CP rank `r` never needs the tensor itself:
//!
//! ```text
//! h = Σ_i (Wx_i x1) ⊙ (Wo_i o1) ⊙ (Ww_i w1)
//! ```
//!
//! which equals contracting `x1 ⊗ o1 ⊗ w1` with
//! `W[d, i, j, k] = Σ_t Wx_t[d, i] Wo_t[d, j] Ww_t[d, k]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::encoding::{NeighborRelationSummary, TypeCodebook};
use crate::attr::UnifiedFeatures;
use crate::error::{Error, Result};

/// Largest entry count [`kron_full`] will materialize.
pub const KRON_FULL_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionVariant {
    /// Elementwise product of per-rank projections, summed over ranks.
    #[default]
    Lmf,
    /// Per-rank Kronecker product of the three projections, summed over
    /// ranks. Output length is `out_dim^3`.
    PerRankKron,
}

impl std::str::FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmf" => Ok(FusionVariant::Lmf),
            "per-rank-kron" => Ok(FusionVariant::PerRankKron),
            _ => Err(Error::InvalidArgument(format!("unknown fusion variant '{s}'"))),
        }
    }
}

impl FusionVariant {
    pub fn output_dim(self, out_dim: usize) -> usize {
        match self {
            FusionVariant::Lmf => out_dim,
            FusionVariant::PerRankKron => out_dim.pow(3),
        }
    }
}

/// Rank factors, each `out_dim x (input_dim + 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub rank: usize,
    pub out_dim: usize,
    pub x_factors: Vec<Tensor>,
    pub o_factors: Vec<Tensor>,
    pub w_factors: Vec<Tensor>,
    #[serde(default)]
    pub variant: FusionVariant,
}

impl FusionParams {
    /// Factors drawn from `U(-s, s)` with `s = (input_dim + 1)^(-1/2)`.
    pub fn init(rank: usize, out_dim: usize, dims: [usize; 3], rng: &mut impl Rng) -> Result<Self> {
        if rank == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument("fusion rank and output dim must be positive".into()));
        }
        let mut factors = |d: usize| -> Vec<Tensor> {
            let fan_in = d + 1;
            let s = (fan_in as f64).powf(-0.5);
            (0..rank)
                .map(|_| {
                    let data = (0..out_dim * fan_in).map(|_| rng.random_range(-s..s)).collect();
                    Tensor::matrix(out_dim, fan_in, data).unwrap()
                })
                .collect()
        };
        let x_factors = factors(dims[0]);
        let o_factors = factors(dims[1]);
        let w_factors = factors(dims[2]);
        Ok(FusionParams {
            rank,
            out_dim,
            x_factors,
            o_factors,
            w_factors,
            variant: FusionVariant::Lmf,
        })
    }

    pub fn seeded(rank: usize, out_dim: usize, dims: [usize; 3], seed: u64) -> Result<Self> {
        Self::init(rank, out_dim, dims, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Appended input lengths `(dx + 1, do + 1, dw + 1)`.
    pub fn input_dims(&self) -> [usize; 3] {
        [
            self.x_factors[0].cols(),
            self.o_factors[0].cols(),
            self.w_factors[0].cols(),
        ]
    }

    pub fn num_scalars(&self) -> usize {
        self.x_factors
            .iter()
            .chain(&self.o_factors)
            .chain(&self.w_factors)
            .map(Tensor::len)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rank >= 1
            && [&self.x_factors, &self.o_factors, &self.w_factors]
                .iter()
                .all(|fs| {
                    fs.len() == self.rank
                        && fs.iter().all(|f| f.rank() == 2 && f.rows() == self.out_dim && f.cols() == fs[0].cols())
                });
        if ok {
            Ok(())
        } else {
            Err(Error::shape("fusion", "inconsistent factor shapes"))
        }
    }
}

pub fn append_one(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(v);
    out.push(1.0);
    out
}

/// The explicit three-way outer product `T[i, j, k] = x[i] o[j] w[k]`.
/// Meant for small diagnostic shapes only.
pub fn kron_full(x: &[f64], o: &[f64], w: &[f64]) -> Result<Tensor> {
    if x.is_empty() || o.is_empty() || w.is_empty() {
        return Err(Error::InvalidArgument("kron_full needs nonempty inputs".into()));
    }
    let total = x.len().saturating_mul(o.len()).saturating_mul(w.len());
    if total > KRON_FULL_CAP {
        return Err(Error::InvalidArgument(format!(
            "kron_full would materialize {total} entries (cap {KRON_FULL_CAP})"
        )));
    }
    let mut data = Vec::with_capacity(total);
    for &a in x {
        for &b in o {
            for &c in w {
                data.push(a * b * c);
            }
        }
    }
    Tensor::new(vec![x.len(), o.len(), w.len()], data)
}

fn project(f: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..f.rows())
        .map(|d| f.row(d).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Fuses already-appended inputs into one embedding.
pub fn fuse(x1: &[f64], o1: &[f64], w1: &[f64], p: &FusionParams) -> Result<Vec<f64>> {
    p.validate()?;
    let dims = p.input_dims();
    if [x1.len(), o1.len(), w1.len()] != dims {
        return Err(Error::shape(
            "fuse",
            format!("inputs {:?} vs factors {dims:?}", [x1.len(), o1.len(), w1.len()]),
        ));
    }
    let d = p.out_dim;
    let mut h = vec![0.0; p.variant.output_dim(d)];
    for i in 0..p.rank {
        let px = project(&p.x_factors[i], x1);
        let po = project(&p.o_factors[i], o1);
        let pw = project(&p.w_factors[i], w1);
        match p.variant {
            FusionVariant::Lmf => {
                for k in 0..d {
                    h[k] += px[k] * po[k] * pw[k];
                }
            }
            FusionVariant::PerRankKron => {
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            h[(a * d + b) * d + c] += px[a] * po[b] * pw[c];
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

/// One fused vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedEmbedding {
    pub vectors: Tensor,
}

/// The three appended per-node input matrices fed to fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionInputs {
    pub x: Tensor,
    pub o: Tensor,
    pub w: Tensor,
}

impl FusionInputs {
    pub fn new(uf: &UnifiedFeatures, cb: &TypeCodebook, nrs: &NeighborRelationSummary, node_types: &[usize]) -> Result<Self> {
        let n = uf.values.rows();
        if nrs.vectors.rows() != n || node_types.len() != n {
            return Err(Error::shape(
                "fusion inputs",
                format!("{n} feature rows, {} summaries, {} node types", nrs.vectors.rows(), node_types.len()),
            ));
        }
        let appended = |rows: Vec<&[f64]>| -> Result<Tensor> {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(append_one).collect();
            if rows.is_empty() {
                return Ok(Tensor::zeros(&[0, 1]));
            }
            Tensor::from_rows(&rows)
        };
        let mut o_rows = Vec::with_capacity(n);
        for &t in node_types {
            let v = cb
                .node_vectors
                .get(t)
                .ok_or_else(|| Error::Validation(format!("codebook has no node type {t}")))?;
            o_rows.push(v.as_slice());
        }
        Ok(FusionInputs {
            x: appended((0..n).map(|v| uf.values.row(v)).collect())?,
            o: appended(o_rows)?,
            w: appended((0..n).map(|v| nrs.vectors.row(v)).collect())?,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.x.cols() - 1, self.o.cols() - 1, self.w.cols() - 1]
    }
}

/// Row `v` is `fuse(append_one(x'_v), append_one(o_type(v)), append_one(w_v))`.
pub fn fuse_graph(
    uf: &UnifiedFeatures,
    cb: &TypeCodebook,
    nrs: &NeighborRelationSummary,
    node_types: &[usize],
    p: &FusionParams,
) -> Result<FusedEmbedding> {
    let inputs = FusionInputs::new(uf, cb, nrs, node_types)?;
    let n = inputs.x.rows();
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        rows.push(fuse(inputs.x.row(v), inputs.o.row(v), inputs.w.row(v), p)?);
    }
    let width = p.variant.output_dim(p.out_dim);
    let vectors = if rows.is_empty() {
        Tensor::zeros(&[0, width])
    } else {
        Tensor::from_rows(&rows)?
    };
    Ok(FusedEmbedding { vectors })
}

/// Fusion factors registered in a [`ParamStore`], for training.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusionLayer {
    pub rank: usize,
    pub out_dim: usize,
    pub variant: FusionVariant,
    x: Vec<ParamId>,
    o: Vec<ParamId>,
    w: Vec<ParamId>,
}

impl FusionLayer {
    pub fn register(store: &mut ParamStore, params: FusionParams) -> Result<Self> {
        params.validate()?;
        let mut reg = |tag: &str, fs: Vec<Tensor>| -> Vec<ParamId> {
            fs.into_iter()
                .enumerate()
                .map(|(i, f)| store.add(format!("fusion.{tag}.{i}"), f))
                .collect()
        };
        let x = reg("x", params.x_factors);
        let o = reg("o", params.o_factors);
        let w = reg("w", params.w_factors);
        Ok(FusionLayer {
            rank: params.rank,
            out_dim: params.out_dim,
            variant: params.variant,
            x,
            o,
            w,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.variant.output_dim(self.out_dim)
    }

    /// Current factor values.
    pub fn params(&self, store: &ParamStore) -> FusionParams {
        let get = |ids: &[ParamId]| ids.iter().map(|&id| store.get(id).clone()).collect();
        FusionParams {
            rank: self.rank,
            out_dim: self.out_dim,
            x_factors: get(&self.x),
            o_factors: get(&self.o),
            w_factors: get(&self.w),
            variant: self.variant,
        }
    }

    /// Records the fusion of appended inputs (`n x (d + 1)` each).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x1: Var, o1: Var, w1: Var) -> Result<Var> {
        let mut total: Option<Var> = None;
        for i in 0..self.rank {
            let fx = tape.param(store, self.x[i]);
            let fo = tape.param(store, self.o[i]);
            let fw = tape.param(store, self.w[i]);
            let px = tape.matmul_nt(x1, fx)?;
            let po = tape.matmul_nt(o1, fo)?;
            let pw = tape.matmul_nt(w1, fw)?;
            let term = match self.variant {
                FusionVariant::Lmf => {
                    let t = tape.mul(px, po)?;
                    tape.mul(t, pw)?
                }
                FusionVariant::PerRankKron => {
                    let xo = row_kron(tape, px, po, self.out_dim, self.out_dim)?;
                    row_kron(tape, xo, pw, self.out_dim * self.out_dim, self.out_dim)?
                }
            };
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        total.ok_or_else(|| Error::InvalidArgument("fusion rank is zero".into()))
    }
}

/// Row-wise Kronecker product via constant selection matrices:
/// `out[:, i*nb + j] = a[:, i] * b[:, j]`.
fn row_kron(tape: &mut Tape, a: Var, b: Var, na: usize, nb: usize) -> Result<Var> {
    let mut sa = Tensor::zeros(&[na, na * nb]);
    let mut sb = Tensor::zeros(&[nb, na * nb]);
    for i in 0..na {
        for j in 0..nb {
            sa.set(i, i * nb + j, 1.0);
            sb.set(j, i * nb + j, 1.0);
        }
    }
    let sa = tape.constant(sa);
    let sb = tape.constant(sb);
    let ea = tape.matmul(a, sa)?;
    let eb = tape.matmul(b, sb)?;
    tape.mul(ea, eb)
}

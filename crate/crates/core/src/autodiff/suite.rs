use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, GradCheckReport, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

type Program = fn(&mut Tape, &ParamStore, &Case) -> Result<Var>;

struct Case {
    a: ParamId,
    b: ParamId,
    /// Random `4 x 3` weights that turn an output into a scalar.
    probe: Tensor,
    /// Strictly positive, for `ln`.
    pos: ParamId,
}

const ROWS: usize = 4;
const COLS: usize = 3;
const SEGMENTS: [usize; ROWS] = [0, 2, 0, 1];

fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).expect("sizes agree")
}

/// Contracts a `4 x 3` value with the probe weights.
fn probe(t: &mut Tape, c: &Case, v: Var) -> Result<Var> {
    let p = t.constant(c.probe.clone());
    let m = t.mul(v, p)?;
    t.sum(m)
}

fn probe_any(t: &mut Tape, v: Var) -> Result<Var> {
    let sq = t.mul(v, v)?;
    let s = t.sum(sq)?;
    let lin = t.sum(v)?;
    t.add(s, lin)
}

const PROGRAMS: &[(&str, Program)] = &[
    ("matmul", |t, s, c| {
        let a = t.param(s, c.a);
        let b = t.param(s, c.b);
        let ab = t.matmul_nt(a, b)?;
        let v = t.matmul(ab, a)?;
        probe(t, c, v)
    }),
    ("matmul_nt", |t, s, c| {
        let a = t.param(s, c.a);
        let b = t.param(s, c.b);
        let v = t.matmul_nt(a, b)?;
        probe_any(t, v)
    }),
    ("add_sub_mul", |t, s, c| {
        let a = t.param(s, c.a);
        let b = t.param(s, c.b);
        let x = t.add(a, b)?;
        let y = t.sub(a, b)?;
        let v = t.mul(x, y)?;
        probe(t, c, v)
    }),
    ("scale_add_scalar", |t, s, c| {
        let a = t.param(s, c.a);
        let x = t.scale(a, -1.7)?;
        let v = t.add_scalar(x, 0.3)?;
        let v = t.mul(v, a)?;
        probe(t, c, v)
    }),
    ("concat_cols", |t, s, c| {
        let a = t.param(s, c.a);
        let b = t.param(s, c.b);
        let v = t.concat_cols(&[a, b, a])?;
        probe_any(t, v)
    }),
    ("concat_rows", |t, s, c| {
        let a = t.param(s, c.a);
        let b = t.param(s, c.b);
        let v = t.concat_rows(&[b, a])?;
        probe_any(t, v)
    }),
    ("gather_rows", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.gather_rows(a, &[3, 0, 0, 2])?;
        let v = t.mul(v, a)?;
        probe(t, c, v)
    }),
    ("segment_sum", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.segment_sum(a, &SEGMENTS, 3)?;
        probe_any(t, v)
    }),
    ("segment_mean", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.segment_mean(a, &SEGMENTS, 3)?;
        probe_any(t, v)
    }),
    ("segment_softmax", |t, s, c| {
        let a = t.param(s, c.a);
        let col = t.pick(a, &[0, 1, 2, 0])?;
        let v = t.segment_softmax(col, &SEGMENTS, 3)?;
        let w = t.expand_cols(v, COLS)?;
        let w = t.mul(w, a)?;
        probe(t, c, w)
    }),
    ("leaky_relu", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.leaky_relu(a, 0.2)?;
        probe(t, c, v)
    }),
    ("elu", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.elu(a)?;
        probe(t, c, v)
    }),
    ("exp_ln", |t, s, c| {
        let a = t.param(s, c.a);
        let p = t.param(s, c.pos);
        let x = t.exp(a)?;
        let y = t.ln(p)?;
        let v = t.mul(x, y)?;
        probe(t, c, v)
    }),
    ("softplus", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.softplus(a)?;
        probe(t, c, v)
    }),
    ("mean", |t, s, c| {
        let a = t.param(s, c.a);
        let sq = t.mul(a, a)?;
        t.mean(sq)
    }),
    ("scale_rows", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.scale_rows(a, &[0.5, -2.0, 1.0, 3.0])?;
        let v = t.mul(v, a)?;
        probe(t, c, v)
    }),
    ("log_softmax_rows", |t, s, c| {
        let a = t.param(s, c.a);
        let v = t.log_softmax_rows(a)?;
        probe(t, c, v)
    }),
];

/// Finite-difference check of every tape operation on seeded random
/// inputs. Returns one report per checked program.
pub fn op_gradient_suite(seed: u64, eps: f64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let a = store.add("a", random(ROWS, COLS, -1.5, 1.5, &mut rng));
    let b = store.add("b", random(ROWS, COLS, -1.5, 1.5, &mut rng));
    let pos = store.add("pos", random(ROWS, COLS, 0.5, 2.0, &mut rng));
    let case = Case {
        a,
        b,
        probe: random(ROWS, COLS, -1.0, 1.0, &mut rng),
        pos,
    };
    PROGRAMS
        .iter()
        .map(|&(name, program)| Ok((name, grad_check(|t, s| program(t, s, &case), &store, eps)?)))
        .collect()
}

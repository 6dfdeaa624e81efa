use serde::Serialize;

use super::{ParamStore, Tape, Var};
use crate::error::Result;

/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compares recorded gradients against central finite differences
/// `(f(p + eps) - f(p - eps)) / 2 eps` for every scalar of every parameter.
///
/// The relative error of one entry is
/// `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(program: F, store: &ParamStore, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = program(&mut tape, store)?;
    let analytic = tape.backward(loss, store)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = program(&mut t, s)?;
        Ok(t.value(l).item())
    };

    let mut probe = store.clone();
    let mut params = Vec::with_capacity(store.len());
    let mut overall: f64 = 0.0;
    for id in store.ids() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for k in 0..store.get(id).len() {
            let original = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = original + eps;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = original - eps;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).data()[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(abs);
        }
        overall = overall.max(max_rel);
        params.push(ParamCheck {
            name: store.name(id).to_string(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    Ok(GradCheckReport {
        params,
        max_rel_error: overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn constant_loss_has_zero_error() {
        let mut store = ParamStore::new();
        store.add("p", Tensor::column(&[1.0, 2.0]));
        let report = grad_check(
            |t, _| Ok(t.constant(Tensor::scalar(3.0))),
            &store,
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn linear_regression_is_exact() {
        // mean((X w - y)^2)
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::column(&[0.4, -0.3, 1.1]));
        let x = Tensor::matrix(
            4,
            3,
            vec![1., 2., 0.5, -1., 0.3, 2., 0.7, 0.7, -0.2, 1.5, -2., 0.1],
        )
        .unwrap();
        let y = Tensor::column(&[1.0, -0.5, 0.25, 2.0]);
        let report = grad_check(
            |t, s| {
                let wv = t.param(s, w);
                let xv = t.constant(x.clone());
                let yv = t.constant(y.clone());
                let pred = t.matmul(xv, wv)?;
                let r = t.sub(pred, yv)?;
                let sq = t.mul(r, r)?;
                t.mean(sq)
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-8), "{report:?}");
    }
}

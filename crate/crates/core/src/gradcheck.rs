//! Central finite-difference gradient checking.
//!
//! The check only evaluates forward values, so it is independent of every
//! backward rule it verifies.

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Outcome of comparing analytic against numerical gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` over all
    /// parameter entries; 0 when both gradients vanish.
    pub relative_error: f64,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

/// Scalar value of `f` at `params`.
pub fn evaluate<F>(params: &[Tensor], f: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let value = out.value();
    value
        .item()
        .ok_or_else(|| crate::Error::NonScalarLoss(value.shape().to_vec()))
}

/// Compares the tape's gradient of the scalar `f(params)` with central
/// differences using the given `step`.
pub fn check_gradients<F>(params: &[Tensor], step: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.get_or_zeros(v)).collect::<Vec<_>>()
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].shape());
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + step;
            let plus = evaluate(&work, &f)?;
            work[p].data_mut()[i] = orig - step;
            let minus = evaluate(&work, &f)?;
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        numeric.push(g);
    }

    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for (a, n) in analytic.iter().zip(&numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
    }
    let denom = na.sqrt().max(nn.sqrt());
    let relative_error = if denom < 1e-12 { diff.sqrt() } else { diff.sqrt() / denom };
    Ok(GradCheck {
        relative_error,
        analytic,
        numeric,
    })
}

//! LSTM cell, bidirectional encoder and dot-product attention.

use crate::autograd::Var;
use crate::error::{Error, Result};

/// Gate weights over the concatenation `[x, h]`. `w` is `[f + n, 4n]` and
/// `b` is `[4n]`, gates ordered input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'t> {
    pub w: Var<'t>,
    pub b: Var<'t>,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.b.shape()[0] / 4
    }
}

/// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn lstm_step<'t>(w: &LstmWeights<'t>, x: Var<'t>, h: Var<'t>, c: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let n = w.hidden();
    let tape = x.tape();
    let z = tape.concat(&[x, h], 1)?.matmul(w.w)?.add(w.b)?;
    let i = z.slice(1, 0, n)?.sigmoid();
    let f = z.slice(1, n, n)?.sigmoid();
    let g = z.slice(1, 2 * n, n)?.tanh();
    let o = z.slice(1, 3 * n, n)?.sigmoid();
    let c_next = f.mul(c)?.add(i.mul(g)?)?;
    let h_next = o.mul(c_next.tanh())?;
    Ok((h_next, c_next))
}

/// Result of running a forward and a backward LSTM over a sequence.
#[derive(Clone, Debug)]
pub struct Encoded<'t> {
    /// `[h_fwd(t), h_bwd(t)]` per step, each `[batch, 2n]`.
    pub states: Vec<Var<'t>>,
    /// Forward hidden states by step.
    pub forward: Vec<Var<'t>>,
    /// Backward hidden states by step (the pass runs from the last step).
    pub backward: Vec<Var<'t>>,
    /// `[h_fwd(T−1), h_bwd(0)]`: both passes' final states.
    pub last: Var<'t>,
}

/// Runs `fwd` left to right and `bwd` right to left over `inputs`
/// (each `[batch, f]`) from zero states.
pub fn encode_bidirectional<'t>(fwd: &LstmWeights<'t>, bwd: &LstmWeights<'t>, inputs: &[Var<'t>]) -> Result<Encoded<'t>> {
    let Some(first) = inputs.first() else {
        return Err(Error::invalid("cannot encode an empty sequence"));
    };
    let tape = first.tape();
    let batch = first.shape()[0];
    let run = |w: &LstmWeights<'t>, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<Option<Var<'t>>>> {
        let zeros = tape.constant(crate::Tensor::zeros([batch, w.hidden()]));
        let (mut h, mut c) = (zeros, zeros);
        let mut out = vec![None; inputs.len()];
        for t in order {
            (h, c) = lstm_step(w, inputs[t], h, c)?;
            if !h.value().is_finite() {
                return Err(Error::NonFiniteActivation { step: t });
            }
            out[t] = Some(h);
        }
        Ok(out)
    };
    let forward: Vec<Var<'t>> = run(fwd, &mut (0..inputs.len()))?.into_iter().flatten().collect();
    let backward: Vec<Var<'t>> = run(bwd, &mut (0..inputs.len()).rev())?.into_iter().flatten().collect();
    let states = forward
        .iter()
        .zip(&backward)
        .map(|(&f, &b)| tape.concat(&[f, b], 1))
        .collect::<Result<Vec<_>>>()?;
    let last = tape.concat(&[forward[inputs.len() - 1], backward[0]], 1)?;
    Ok(Encoded {
        states,
        forward,
        backward,
        last,
    })
}

/// Encoder states `[batch, k]` stacked into one `[batch, T, k]` memory.
pub fn stack_states<'t>(states: &[Var<'t>]) -> Result<Var<'t>> {
    let first = states
        .first()
        .ok_or_else(|| Error::invalid("attention over zero encoder states"))?;
    let (b, k) = (first.shape()[0], first.shape()[1]);
    first.tape().concat(states, 1)?.reshape(&[b, states.len(), k])
}

/// Scaled dot-product attention of a decoder state over encoder states.
///
/// `query = h·w_q` (`w_q` is `[n, k]`), score `t` is
/// `query·states[t] / √k`, weights are the softmax of the scores. Returns
/// the context `[batch, k]` and the weights `[batch, T]`.
pub fn attention_context<'t>(h: Var<'t>, states: &[Var<'t>], w_q: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    attend(h, stack_states(states)?, w_q)
}

/// [`attention_context`] over a memory built by [`stack_states`].
pub fn attend<'t>(h: Var<'t>, memory: Var<'t>, w_q: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let (b, t, k) = match memory.shape()[..] {
        [b, t, k] => (b, t, k),
        _ => return Err(Error::shape("attend", &memory.shape(), &[0, 0, 0])),
    };
    let query = h.matmul(w_q)?.reshape(&[b, 1, k])?;
    let scores = query.mul(memory)?.sum(Some(2))?.reshape(&[b, t])?;
    let weights = scores.scale(1.0 / (k as f64).sqrt()).softmax(1)?;
    let context = weights.reshape(&[b, t, 1])?.mul(memory)?.sum(Some(1))?.reshape(&[b, k])?;
    Ok((context, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, Tensor};

    #[test]
    fn zero_cell_stays_zero() {
        let tape = Tape::new();
        let w = LstmWeights {
            w: tape.leaf(Tensor::zeros([3, 8])),
            b: tape.leaf(Tensor::zeros([8])),
        };
        let x = tape.constant(Tensor::full([2, 1], 3.0));
        let z = tape.constant(Tensor::zeros([2, 2]));
        let (h, c) = lstm_step(&w, x, z, z).unwrap();
        assert!(h.value().data().iter().all(|&v| v == 0.0));
        assert!(c.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let tape = Tape::new();
        let n = 3;
        let mut b = vec![0.0; 4 * n];
        b[n..2 * n].fill(50.0);
        // Input gate shut so nothing new is written.
        b[..n].fill(-50.0);
        let w = LstmWeights {
            w: tape.leaf(Tensor::zeros([1 + n, 4 * n])),
            b: tape.leaf(Tensor::new([4 * n], b).unwrap()),
        };
        let c0 = tape.constant(Tensor::new([1, n], vec![0.3, -1.2, 2.0]).unwrap());
        let h0 = tape.constant(Tensor::zeros([1, n]));
        let x = tape.constant(Tensor::full([1, 1], 1.0));
        let (_, c1) = lstm_step(&w, x, h0, c0).unwrap();
        assert!(c1.value().max_abs_diff(&c0.value()).unwrap() < 1e-9);
    }

    #[test]
    fn identical_states_get_uniform_weights() {
        let tape = Tape::new();
        let s = tape.constant(Tensor::new([1, 4], vec![0.5, -1.0, 2.0, 0.1]).unwrap());
        let states = vec![s; 30];
        let h = tape.constant(Tensor::new([1, 2], vec![1.0, -0.4]).unwrap());
        let wq = tape.leaf(Tensor::new([2, 4], (0..8).map(|i| i as f64 * 0.1).collect()).unwrap());
        let (ctx, weights) = attention_context(h, &states, wq).unwrap();
        for &w in weights.value().data() {
            assert!((w - 1.0 / 30.0).abs() < 1e-12);
        }
        assert!(ctx.value().max_abs_diff(&s.value()).unwrap() < 1e-12);
    }

    #[test]
    fn dominant_score_takes_all_weight() {
        let tape = Tape::new();
        let mut states: Vec<_> = (0..5).map(|_| tape.constant(Tensor::zeros([1, 2]))).collect();
        states[3] = tape.constant(Tensor::new([1, 2], vec![1e3, 0.0]).unwrap());
        let h = tape.constant(Tensor::new([1, 2], vec![1.0, 0.0]).unwrap());
        let wq = tape.constant(Tensor::identity(2));
        let (_, weights) = attention_context(h, &states, wq).unwrap();
        assert!((weights.value().data()[3] - 1.0).abs() < 1e-9);
    }
}

use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::InitScheme;

use super::lstm::{attend, encode_bidirectional, lstm_step, stack_states, Encoded, LstmWeights};
use super::{finite, linear, Batch, ForwardMode, ModelConfig, ParamSpec, SequenceModel};

/// Encoder-decoder LSTM. A bidirectional encoder reads the input; its final
/// states, projected, start a decoder that emits one value per step and
/// reads its previous output (or, while training, sometimes the true
/// previous value). The attention variant also scores every encoder state
/// at each decoder step and feeds the context to the output head.
pub struct Seq2Seq {
    config: ModelConfig,
    hidden: usize,
    teacher_forcing: f64,
    attention: bool,
}

impl Seq2Seq {
    pub fn new(config: &ModelConfig, attention: bool) -> Result<Self> {
        let hidden: usize = config.get("hidden")?;
        let teacher_forcing: f64 = config.get("teacher_forcing")?;
        if hidden == 0 || !(0.0..=1.0).contains(&teacher_forcing) {
            return Err(Error::invalid(format!(
                "{}: need hidden >= 1 and teacher_forcing in [0, 1]",
                config.architecture
            )));
        }
        Ok(Seq2Seq {
            config: config.clone(),
            hidden,
            teacher_forcing,
            attention,
        })
    }

    /// Encoder pass alone.
    pub fn encode<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch) -> Result<Encoded<'t>> {
        let inputs = batch.step_inputs(tape, self.config.features);
        let fwd = LstmWeights {
            w: params[0],
            b: params[1],
        };
        let bwd = LstmWeights {
            w: params[2],
            b: params[3],
        };
        encode_bidirectional(&fwd, &bwd, &inputs)
    }
}

impl SequenceModel for Seq2Seq {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn layout(&self) -> Vec<ParamSpec> {
        let n = self.hidden;
        let f = self.config.features.width();
        let u = InitScheme::UniformFanIn;
        let mut specs = vec![
            ParamSpec::new("enc_fwd.w", &[f + n, 4 * n], u),
            ParamSpec::new("enc_fwd.b", &[4 * n], InitScheme::Zeros),
            ParamSpec::new("enc_bwd.w", &[f + n, 4 * n], u),
            ParamSpec::new("enc_bwd.b", &[4 * n], InitScheme::Zeros),
            ParamSpec::new("init_h.w", &[2 * n, n], u),
            ParamSpec::new("init_c.w", &[2 * n, n], u),
            ParamSpec::new("dec.w", &[1 + n, 4 * n], u),
            ParamSpec::new("dec.b", &[4 * n], InitScheme::Zeros),
        ];
        let head_in = if self.attention {
            specs.push(ParamSpec::new("attn.q", &[n, 2 * n], u));
            3 * n
        } else {
            n
        };
        specs.push(ParamSpec::new("head.w", &[head_in, 1], u));
        specs.push(ParamSpec::new("head.b", &[1], InitScheme::Zeros));
        specs
    }

    fn compute<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch, mode: &mut ForwardMode<'_>) -> Result<Var<'t>> {
        let enc = self.encode(tape, params, batch)?;
        let mut h = enc.last.matmul(params[4])?.tanh();
        let mut c = enc.last.matmul(params[5])?;
        let dec = LstmWeights {
            w: params[6],
            b: params[7],
        };
        let (attn_q, head_w, head_b) = if self.attention {
            (Some(params[8]), params[9], params[10])
        } else {
            (None, params[8], params[9])
        };

        let memory = attn_q.map(|_| stack_states(&enc.states)).transpose()?;
        let in_len = self.config.in_len;
        let last = (0..batch.size())
            .map(|i| batch.input.data()[i * in_len + in_len - 1])
            .collect();
        let mut prev = tape.constant(crate::Tensor::new([batch.size(), 1], last)?);
        let mut preds = Vec::with_capacity(self.config.out_len);
        for k in 0..self.config.out_len {
            (h, c) = lstm_step(&dec, prev, h, c)?;
            let h_k = finite(h, in_len + k)?;
            let features = match attn_q {
                Some(q) => {
                    let (context, _) = attend(h_k, memory.expect("stacked with attention"), q)?;
                    tape.concat(&[h_k, context], 1)?
                }
                None => h_k,
            };
            let y = linear(features, head_w, head_b)?;
            preds.push(y);
            prev = match mode {
                ForwardMode::Training { rng } if self.teacher_forcing > 0.0 => {
                    if rng.random::<f64>() < self.teacher_forcing {
                        batch.target_column(tape, k)?
                    } else {
                        y
                    }
                }
                _ => y,
            };
        }
        tape.concat(&preds, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, Tensor};

    #[test]
    fn palindrome_with_tied_weights() {
        let tape = Tape::new();
        let n = 4;
        let w = tape.leaf(crate::tensor::seeded_init(&[1 + n, 4 * n], InitScheme::UniformFanIn, 8));
        let b = tape.leaf(crate::tensor::seeded_init(&[4 * n], InitScheme::UniformFanIn, 9));
        let cell = LstmWeights { w, b };
        let half: Vec<f64> = (0..15).map(|t| (t as f64 * 0.7).sin()).collect();
        let seq: Vec<f64> = half.iter().chain(half.iter().rev()).copied().collect();
        let inputs: Vec<_> = seq
            .iter()
            .map(|&v| tape.constant(Tensor::new([1, 1], vec![v]).unwrap()))
            .collect();
        let enc = encode_bidirectional(&cell, &cell, &inputs).unwrap();
        assert_eq!(enc.states.len(), 30);
        for t in 0..30 {
            let s = enc.states[t].value();
            let partner = enc.states[29 - t].value();
            for j in 0..n {
                assert!((s.data()[j] - partner.data()[n + j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn encoder_shape() {
        let cfg = ModelConfig::new("seq2seq").unwrap().with("hidden", 32);
        let model = Seq2Seq::new(&cfg, false).unwrap();
        let params = model.init();
        let tape = Tape::new();
        let vars = params.bind(&tape);
        let batch = Batch::from_rows(&[vec![0.5; 30]]).unwrap();
        let enc = model.encode(&tape, &vars, &batch).unwrap();
        assert_eq!(enc.states.len(), 30);
        assert_eq!(enc.states[0].shape(), vec![1, 64]);
    }
}

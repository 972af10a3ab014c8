use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::InitScheme;

use super::{finite, linear, Batch, ForwardMode, ModelConfig, ParamSpec, SequenceModel};

/// Fully connected one-step forecaster applied recursively: each prediction
/// is appended to the rolling input buffer, the oldest value drops out.
/// Motor speed, when used, is held at its last observed value.
pub struct Dnn {
    config: ModelConfig,
    hidden: Vec<usize>,
}

impl Dnn {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let hidden: Vec<usize> = config.get_list("hidden")?;
        if hidden.contains(&0) {
            return Err(Error::invalid("dnn: hidden layer widths must be >= 1"));
        }
        Ok(Dnn {
            config: config.clone(),
            hidden,
        })
    }

    /// One-step head: `features` is `[batch, in_len·f]`, the result `[batch, 1]`.
    pub fn step<'t>(&self, params: &[Var<'t>], features: Var<'t>) -> Result<Var<'t>> {
        let mut h = features;
        for layer in 0..self.hidden.len() {
            h = linear(h, params[2 * layer], params[2 * layer + 1])?.relu();
        }
        let k = 2 * self.hidden.len();
        linear(h, params[k], params[k + 1])
    }
}

impl SequenceModel for Dnn {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn layout(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let mut width = self.config.in_len * self.config.features.width();
        for (i, &h) in self.hidden.iter().enumerate() {
            specs.push(ParamSpec::new(format!("dense{i}.w"), &[width, h], InitScheme::UniformFanIn));
            specs.push(ParamSpec::new(format!("dense{i}.b"), &[h], InitScheme::Zeros));
            width = h;
        }
        specs.push(ParamSpec::new("head.w", &[width, 1], InitScheme::UniformFanIn));
        specs.push(ParamSpec::new("head.b", &[1], InitScheme::Zeros));
        specs
    }

    fn compute<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch, _mode: &mut ForwardMode<'_>) -> Result<Var<'t>> {
        let len = self.config.in_len;
        let mut buffer = tape.constant(batch.input.clone());
        let mut rpm = match (self.config.features.uses_rpm(), &batch.rpm) {
            (true, Some(r)) => Some(tape.constant(r.clone())),
            _ => None,
        };
        let mut preds = Vec::with_capacity(self.config.out_len);
        for k in 0..self.config.out_len {
            let features = match rpm {
                Some(r) => tape.concat(&[buffer, r], 1)?,
                None => buffer,
            };
            let y = finite(self.step(params, features)?, k)?;
            preds.push(y);
            buffer = shift_in(buffer, y, len)?;
            rpm = rpm.map(|r| shift_in(r, r.slice(1, len - 1, 1)?, len)).transpose()?;
        }
        tape.concat(&preds, 1)
    }
}

/// Drops the oldest column of `buffer` and appends `value`.
fn shift_in<'t>(buffer: Var<'t>, value: Var<'t>, len: usize) -> Result<Var<'t>> {
    if len == 1 {
        return Ok(value);
    }
    buffer.tape().concat(&[buffer.slice(1, 1, len - 1)?, value], 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build;
    use crate::Tensor;

    #[test]
    fn recursion_matches_explicit_loop() {
        let cfg = ModelConfig::new("dnn").unwrap().with("hidden", "16,8").with_seed(5);
        let model = Dnn::new(&cfg).unwrap();
        let params = model.init();
        let input: Vec<f64> = (0..30).map(|t| (t as f64 * 0.2).cos()).collect();
        let got = build(&cfg)
            .unwrap()
            .predict(&params, &Batch::from_rows(std::slice::from_ref(&input)).unwrap())
            .unwrap();

        let mut buffer = input;
        let mut want = Vec::new();
        for _ in 0..30 {
            let tape = Tape::new();
            let vars: Vec<_> = params.tensors().iter().map(|p| tape.constant(p.clone())).collect();
            let x = tape.constant(Tensor::new([1, 30], buffer.clone()).unwrap());
            let y = model.step(&vars, x).unwrap().value().data()[0];
            want.push(y);
            buffer.remove(0);
            buffer.push(y);
        }
        assert_eq!(got.data(), &want[..]);
    }
}

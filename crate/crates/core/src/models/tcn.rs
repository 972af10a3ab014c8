use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{InitScheme, Tensor};

use super::{linear, Batch, ForwardMode, ModelConfig, ParamSpec, SequenceModel};

/// Temporal convolutional network: residual blocks of causal dilated
/// convolutions, then flatten, one hidden dense layer and a linear head
/// producing the whole horizon.
pub struct Tcn {
    config: ModelConfig,
    channels: usize,
    kernel: usize,
    dilations: Vec<usize>,
    dense: usize,
}

impl Tcn {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let channels: usize = config.get("channels")?;
        let kernel: usize = config.get("kernel")?;
        let dilations: Vec<usize> = config.get_list("dilations")?;
        let dense: usize = config.get("dense")?;
        if channels == 0 || kernel == 0 || dense == 0 || dilations.is_empty() || dilations.contains(&0) {
            return Err(Error::invalid("tcn: channels, kernel, dense and every dilation must be >= 1"));
        }
        Ok(Tcn {
            config: config.clone(),
            channels,
            kernel,
            dilations,
            dense,
        })
    }

    fn projects(&self) -> bool {
        self.config.features.width() != self.channels
    }

    /// `[batch, features, in_len]` view of the batch.
    fn input<'t>(&self, tape: &'t Tape, batch: &Batch) -> Result<Var<'t>> {
        let (b, len, f) = (batch.size(), self.config.in_len, self.config.features.width());
        let mut data = Vec::with_capacity(b * f * len);
        for i in 0..b {
            data.extend_from_slice(&batch.input.data()[i * len..(i + 1) * len]);
            if f == 2 {
                let rpm = batch.rpm.as_ref().expect("checked by forward");
                data.extend_from_slice(&rpm.data()[i * len..(i + 1) * len]);
            }
        }
        Ok(tape.constant(Tensor::new([b, f, len], data)?))
    }

    /// Output of every residual block, each `[batch, channels, in_len]`.
    pub fn block_outputs<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch) -> Result<Vec<Var<'t>>> {
        let mut x = self.input(tape, batch)?;
        let mut p = 0;
        let mut outs = Vec::with_capacity(self.dilations.len());
        for (i, &dilation) in self.dilations.iter().enumerate() {
            let y = x.conv1d(params[p], dilation)?.add(params[p + 1])?.relu();
            p += 2;
            let residual = if i == 0 && self.projects() {
                p += 1;
                x.conv1d(params[p - 1], 1)?
            } else {
                x
            };
            x = y.add(residual)?;
            outs.push(x);
        }
        Ok(outs)
    }
}

impl SequenceModel for Tcn {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn layout(&self) -> Vec<ParamSpec> {
        let (c, k, f) = (self.channels, self.kernel, self.config.features.width());
        let u = InitScheme::UniformFanIn;
        let mut specs = Vec::new();
        for i in 0..self.dilations.len() {
            let cin = if i == 0 { f } else { c };
            specs.push(ParamSpec::new(format!("block{i}.w"), &[c, cin, k], u));
            specs.push(ParamSpec::new(format!("block{i}.b"), &[c, 1], InitScheme::Zeros));
            if i == 0 && self.projects() {
                specs.push(ParamSpec::new("block0.proj", &[c, f, 1], u));
            }
        }
        let flat = c * self.config.in_len;
        specs.push(ParamSpec::new("dense.w", &[flat, self.dense], u));
        specs.push(ParamSpec::new("dense.b", &[self.dense], InitScheme::Zeros));
        specs.push(ParamSpec::new("head.w", &[self.dense, self.config.out_len], u));
        specs.push(ParamSpec::new("head.b", &[self.config.out_len], InitScheme::Zeros));
        specs
    }

    fn compute<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch, _mode: &mut ForwardMode<'_>) -> Result<Var<'t>> {
        let blocks = self.block_outputs(tape, params, batch)?;
        let last = *blocks.last().expect("at least one block");
        let flat = last.reshape(&[batch.size(), self.channels * self.config.in_len])?;
        let n = params.len();
        let hidden = linear(flat, params[n - 4], params[n - 3])?.relu();
        linear(hidden, params[n - 2], params[n - 1])
    }
}

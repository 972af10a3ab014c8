use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::transpose;
use crate::tensor::{InitScheme, Tensor};

use super::lmu::{discretize, lmu_matrices, lmu_step, Discretization, LmuWeights};
use super::{finite, linear, Batch, ForwardMode, ModelConfig, ParamSpec, SequenceModel};

/// LMU cell unrolled over the input, then a linear head on the final hidden
/// state that emits the whole horizon at once. The memory matrices are
/// fixed; only encoders, kernels and the head train.
pub struct LmuRnn {
    config: ModelConfig,
    order: usize,
    units: usize,
    abar_t: Tensor,
    bbar_t: Tensor,
}

impl LmuRnn {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let order: usize = config.get("order")?;
        let theta: f64 = config.get("theta")?;
        let units: usize = config.get("units")?;
        let method: Discretization = config.get::<String>("discretization")?.parse()?;
        if units == 0 {
            return Err(Error::invalid("lmu: units must be >= 1"));
        }
        let (a, b) = lmu_matrices(order, theta)?;
        let (abar, bbar) = discretize(&a, &b, method)?;
        Ok(LmuRnn {
            config: config.clone(),
            order,
            units,
            abar_t: transpose(&abar)?,
            bbar_t: transpose(&bbar)?,
        })
    }

    /// Hidden and memory states after each input step.
    pub fn unroll<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
        let w = LmuWeights {
            e_x: params[0],
            e_h: params[1],
            e_m: params[2],
            w_x: params[3],
            w_h: params[4],
            w_m: params[5],
        };
        let abar_t = tape.constant(self.abar_t.clone());
        let bbar_t = tape.constant(self.bbar_t.clone());
        let b = batch.size();
        let mut h = tape.constant(Tensor::zeros([b, self.units]));
        let mut m = tape.constant(Tensor::zeros([b, self.order]));
        let (mut hs, mut ms) = (Vec::new(), Vec::new());
        for (t, x) in batch.step_inputs(tape, self.config.features).into_iter().enumerate() {
            (h, m) = lmu_step(abar_t, bbar_t, &w, x, h, m)?;
            h = finite(h, t)?;
            m = finite(m, t)?;
            hs.push(h);
            ms.push(m);
        }
        Ok((hs, ms))
    }
}

impl SequenceModel for LmuRnn {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn layout(&self) -> Vec<ParamSpec> {
        let (f, n, d) = (self.config.features.width(), self.units, self.order);
        let u = InitScheme::UniformFanIn;
        vec![
            ParamSpec::new("e_x", &[f, 1], u),
            ParamSpec::new("e_h", &[n, 1], u),
            ParamSpec::new("e_m", &[d, 1], InitScheme::Zeros),
            ParamSpec::new("w_x", &[f, n], u),
            ParamSpec::new("w_h", &[n, n], InitScheme::Orthogonal),
            ParamSpec::new("w_m", &[d, n], u),
            ParamSpec::new("head.w", &[n, self.config.out_len], u),
            ParamSpec::new("head.b", &[self.config.out_len], InitScheme::Zeros),
        ]
    }

    fn compute<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch, _mode: &mut ForwardMode<'_>) -> Result<Var<'t>> {
        let (hs, _) = self.unroll(tape, params, batch)?;
        let last = *hs.last().ok_or_else(|| Error::Geometry("empty input".into()))?;
        linear(last, params[6], params[7])
    }
}

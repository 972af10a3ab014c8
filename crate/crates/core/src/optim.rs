//! RMSprop and learning-rate schedules.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// RMSprop state: one squared-gradient accumulator per parameter.
///
/// Update rule, elementwise:
///
/// ```text
/// acc ← ρ·acc + (1 − ρ)·g²
/// p   ← p − η·g / sqrt(acc + ε)
/// ```
#[derive(Clone, Debug)]
pub struct RmspropState {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    accumulators: Vec<Tensor>,
}

impl RmspropState {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_constants(learning_rate, DEFAULT_RHO, DEFAULT_EPSILON)
    }

    pub fn with_constants(learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        RmspropState {
            rho,
            epsilon,
            learning_rate,
            accumulators: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    /// Applies one update in place. Accumulators are created lazily on the
    /// first step and must keep matching the parameter shapes afterwards.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("rmsprop_step", &[params.len()], &[grads.len()]));
        }
        if self.accumulators.is_empty() {
            self.accumulators = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        if self.accumulators.len() != params.len() {
            return Err(Error::shape(
                "rmsprop_step",
                &[self.accumulators.len()],
                &[params.len()],
            ));
        }
        for ((p, g), acc) in params.iter().zip(grads).zip(&self.accumulators) {
            if p.shape() != g.shape() || p.shape() != acc.shape() {
                return Err(Error::shape("rmsprop_step", p.shape(), g.shape()));
            }
        }
        let (rho, eps, lr) = (self.rho, self.epsilon, self.learning_rate);
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            for ((pv, &gv), av) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
                *av = rho * *av + (1.0 - rho) * gv * gv;
                *pv -= lr * gv / (*av + eps).sqrt();
            }
        }
        Ok(())
    }
}

/// When to multiply the learning rate by the decay factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayPolicy {
    /// Decay after `patience` consecutive epochs without a new best
    /// monitored loss; the wait counter restarts after each decay.
    Plateau { patience: usize },
    /// Decay unconditionally after every epoch.
    EveryEpoch,
}

#[derive(Clone, Debug)]
pub struct LrSchedule {
    lr: f64,
    factor: f64,
    policy: DecayPolicy,
    best: f64,
    wait: usize,
}

impl LrSchedule {
    pub fn new(initial: f64, factor: f64, policy: DecayPolicy) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::invalid(format!("decay factor {factor} outside (0, 1]")));
        }
        if !(initial > 0.0 && initial.is_finite()) {
            return Err(Error::invalid(format!("learning rate {initial} must be positive")));
        }
        Ok(LrSchedule {
            lr: initial,
            factor,
            policy,
            best: f64::INFINITY,
            wait: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds the epoch's monitored loss; returns the rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        match self.policy {
            DecayPolicy::EveryEpoch => self.lr *= self.factor,
            DecayPolicy::Plateau { patience } => {
                if loss < self.best {
                    self.best = loss;
                    self.wait = 0;
                } else {
                    self.wait += 1;
                    if self.wait >= patience.max(1) {
                        self.lr *= self.factor;
                        self.wait = 0;
                    }
                }
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = params.clone();
        let mut state = RmspropState::new(0.01);
        for _ in 0..3 {
            state.step(&mut params, &[Tensor::zeros([3])]).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_by_hand() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut state = RmspropState::with_constants(0.01, 0.9, 1e-8);
        state.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        assert!((state.accumulators()[0].item().unwrap() - 0.1).abs() < 1e-15);
        let want = 1.0 - 0.01 / (0.1f64 + 1e-8).sqrt();
        assert!((params[0].item().unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![Tensor::zeros([2])];
        let mut state = RmspropState::new(0.1);
        assert!(state.step(&mut params, &[Tensor::zeros([3])]).is_err());
        assert!(state.step(&mut params, &[]).is_err());
    }

    #[test]
    fn plateau_decays_by_factor() {
        let mut s = LrSchedule::new(1.0, 0.8, DecayPolicy::Plateau { patience: 2 }).unwrap();
        let rates: Vec<f64> = [5.0, 4.0, 4.5, 4.2, 4.1, 3.0, 3.5, 3.6]
            .iter()
            .map(|&l| s.observe(l))
            .collect();
        assert_eq!(rates, vec![1.0, 1.0, 1.0, 0.8, 0.8, 0.8, 0.8, 0.8 * 0.8]);
    }

    #[test]
    fn rejects_bad_factor() {
        assert!(LrSchedule::new(1.0, 0.0, DecayPolicy::EveryEpoch).is_err());
        assert!(LrSchedule::new(1.0, 1.5, DecayPolicy::EveryEpoch).is_err());
    }
}

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tape;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::models::{ForwardMode, SequenceModel};
use crate::optim::{DecayPolicy, LrSchedule, RmspropState};
use crate::params::ParamSet;
use crate::signal::WindowPair;

use super::{predict_normalized, Normalizer};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_policy: DecayPolicy,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best holdout loss.
    pub early_stop_patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Stop as soon as the monitored loss drops below this value.
    pub stop_below: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-3,
            decay_factor: 0.8,
            decay_policy: DecayPolicy::Plateau { patience: 2 },
            batch_size: 64,
            max_epochs: 50,
            early_stop_patience: 10,
            max_steps: None,
            stop_below: None,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("invalid value `{raw}` for `{key}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 9] = [
        "lr",
        "decay_factor",
        "decay_policy",
        "plateau_patience",
        "batch_size",
        "max_epochs",
        "early_stop_patience",
        "max_steps",
        "stop_below",
    ];

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "lr" => self.initial_lr = parse(key, raw)?,
            "decay_factor" => self.decay_factor = parse(key, raw)?,
            "decay_policy" => {
                self.decay_policy = match (raw.trim(), self.decay_policy) {
                    ("plateau", DecayPolicy::Plateau { patience }) => DecayPolicy::Plateau { patience },
                    ("plateau", DecayPolicy::EveryEpoch) => DecayPolicy::Plateau { patience: 2 },
                    ("epoch", _) => DecayPolicy::EveryEpoch,
                    (other, _) => return Err(Error::Format(format!("unknown decay policy `{other}`"))),
                }
            }
            "plateau_patience" => {
                let patience = parse(key, raw)?;
                if let DecayPolicy::Plateau { .. } = self.decay_policy {
                    self.decay_policy = DecayPolicy::Plateau { patience };
                }
            }
            "batch_size" => self.batch_size = parse(key, raw)?,
            "max_epochs" => self.max_epochs = parse(key, raw)?,
            "early_stop_patience" => self.early_stop_patience = parse(key, raw)?,
            "max_steps" => {
                let steps: usize = parse(key, raw)?;
                self.max_steps = (steps > 0).then_some(steps);
            }
            "stop_below" => {
                let v: f64 = parse(key, raw)?;
                self.stop_below = (v > 0.0).then_some(v);
            }
            other => return Err(Error::invalid(format!("unknown train key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("lr", self.initial_lr);
        doc.push("decay_factor", self.decay_factor);
        match self.decay_policy {
            DecayPolicy::Plateau { patience } => {
                doc.push("decay_policy", "plateau");
                doc.push("plateau_patience", patience);
            }
            DecayPolicy::EveryEpoch => doc.push("decay_policy", "epoch"),
        }
        doc.push("batch_size", self.batch_size);
        doc.push("max_epochs", self.max_epochs);
        doc.push("early_stop_patience", self.early_stop_patience);
        doc.push("max_steps", self.max_steps.unwrap_or(0));
        doc.push("stop_below", self.stop_below.unwrap_or(0.0));
        doc
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        LrSchedule::new(self.initial_lr, self.decay_factor, self.decay_policy).map(|_| ())
    }
}

/// One epoch's record. Losses are MSE on normalized pressures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: f64,
    /// Rate used during the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const HEADER: &'static str = "epoch,train_loss,holdout_loss,lr";

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for e in &self.epochs {
            writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, e.holdout_loss, e.lr)?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        match lines.next().transpose()? {
            Some(h) if h.trim() == Self::HEADER => {}
            _ => return Err(Error::Format(format!("history must start with `{}`", Self::HEADER))),
        }
        let mut epochs = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("history line {}: `{line}`", n + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            epochs.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|_| bad())?,
                train_loss: f[1].trim().parse().map_err(|_| bad())?,
                holdout_loss: f[2].trim().parse().map_err(|_| bad())?,
                lr: f[3].trim().parse().map_err(|_| bad())?,
            });
        }
        Ok(History { epochs })
    }
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {}: train {:.6} holdout {:.6} lr {:.3e}",
            self.epoch, self.train_loss, self.holdout_loss, self.lr
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest holdout loss.
    pub params: ParamSet,
    pub history: History,
    pub steps: usize,
    pub best_epoch: Option<usize>,
}

fn batch_loss(
    model: &dyn SequenceModel,
    params: &ParamSet,
    windows: &[&WindowPair],
    normalizer: &Normalizer,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<crate::Tensor>)> {
    let batch = normalizer.batch(windows, model.config().features)?;
    let tape = Tape::new();
    let vars = params.bind(&tape);
    let pred = model.forward(&tape, &vars, &batch, &mut ForwardMode::Training { rng })?;
    let target = tape.constant(batch.target.clone().expect("normalizer batches carry targets"));
    let loss = pred.mse_loss(target)?;
    let value = loss.value().item().expect("scalar loss");
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    Ok((value, vars.iter().map(|&v| grads.get_or_zeros(v)).collect()))
}

/// Mean squared error on normalized pressures over `windows`, in
/// inference mode.
pub fn normalized_mse(model: &dyn SequenceModel, params: &ParamSet, normalizer: &Normalizer, windows: &[WindowPair]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let refs: Vec<&WindowPair> = windows.iter().collect();
    let preds = predict_normalized(model, params, normalizer, &refs)?;
    let (mut total, mut count) = (0.0, 0usize);
    for (w, p) in windows.iter().zip(&preds) {
        for (t, z) in w.target.iter().zip(p) {
            let d = z - normalizer.apply(*t);
            total += d * d;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Minibatch RMSprop on normalized MSE.
///
/// Windows are reshuffled every epoch under the seed and the final partial
/// batch is kept. The learning rate follows the configured decay policy on
/// the holdout loss (the training loss when `holdout` is empty), and the
/// returned parameters are those of the best epoch.
pub fn train(
    model: &dyn SequenceModel,
    init: ParamSet,
    train: &[WindowPair],
    holdout: &[WindowPair],
    normalizer: &Normalizer,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = init;
    let mut best = params.clone();
    let mut history = History::default();
    if cfg.max_epochs == 0 || params.is_empty() {
        return Ok(TrainOutcome {
            params,
            history,
            steps: 0,
            best_epoch: None,
        });
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, "shuffle"));
    let mut teacher_rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, "teacher"));
    let mut optimizer = RmspropState::new(cfg.initial_lr);
    let mut schedule = LrSchedule::new(cfg.initial_lr, cfg.decay_factor, cfg.decay_policy)?;
    let (mut best_loss, mut best_epoch, mut stale) = (f64::INFINITY, None, 0);
    let mut steps = 0;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        optimizer.learning_rate = lr;
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut seen) = (0.0, 0usize);
        let mut capped = false;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&WindowPair> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_loss(model, &params, &windows, normalizer, &mut teacher_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            optimizer.step(params.tensors_mut(), &grads)?;
            sum += loss * windows.len() as f64;
            seen += windows.len();
            steps += 1;
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                capped = true;
                break;
            }
        }
        let train_loss = sum / seen as f64;
        let holdout_loss = if holdout.is_empty() {
            train_loss
        } else {
            normalized_mse(model, &params, normalizer, holdout)?
        };
        if !holdout_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            holdout_loss,
            lr,
        });
        if holdout_loss < best_loss {
            best_loss = holdout_loss;
            best_epoch = Some(epoch);
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        schedule.observe(holdout_loss);
        let reached = cfg.stop_below.is_some_and(|t| holdout_loss < t);
        if capped || reached || stale >= cfg.early_stop_patience.max(1) {
            break 'epochs;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        steps,
        best_epoch,
    })
}

//! Forecasting architectures and the registry that builds them from a
//! [`ModelConfig`].
//!
//! Models work on normalized pressures: a [`Batch`] holds `[batch, in_len]`
//! inputs and the forward pass returns `[batch, out_len]` predictions on the
//! caller's [`Tape`].

mod dnn;
pub mod lmu;
mod lmu_rnn;
pub mod lstm;
mod seq2seq;
mod tcn;

pub use dnn::Dnn;
pub use lmu::{delay_reconstruct, discretize, lmu_matrices, lmu_step, shifted_legendre, Discretization, LmuWeights};
pub use lmu_rnn::LmuRnn;
pub use lstm::{attend, attention_context, encode_bidirectional, stack_states, lstm_step, Encoded, LstmWeights};
pub use seq2seq::Seq2Seq;
pub use tcn::Tcn;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::params::ParamSet;
use crate::signal::{INPUT_STEPS, OUTPUT_STEPS};
use crate::tensor::{seeded_init, InitScheme, Tensor};

/// Channels fed to a model at every input step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureSet {
    #[default]
    Pressure,
    PressureRpm,
}

impl FeatureSet {
    pub fn width(self) -> usize {
        match self {
            FeatureSet::Pressure => 1,
            FeatureSet::PressureRpm => 2,
        }
    }

    pub fn uses_rpm(self) -> bool {
        self == FeatureSet::PressureRpm
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pressure" => Ok(FeatureSet::Pressure),
            "pressure+rpm" | "pressure,rpm" => Ok(FeatureSet::PressureRpm),
            other => Err(Error::invalid(format!("unknown feature set `{other}`"))),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Pressure => "pressure",
            FeatureSet::PressureRpm => "pressure+rpm",
        })
    }
}

/// Architecture name, input geometry, hyperparameters and init seed.
/// Together with a checkpoint this fixes inference behavior.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: String,
    pub features: FeatureSet,
    pub in_len: usize,
    pub out_len: usize,
    /// Architecture-specific settings, validated against the registry entry.
    pub hyper: BTreeMap<String, String>,
    pub seed: u64,
}

impl ModelConfig {
    /// Builtin architecture with its default hyperparameters.
    pub fn new(architecture: &str) -> Result<Self> {
        Registry::builtin().config(architecture)
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.hyper.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_geometry(mut self, in_len: usize, out_len: usize) -> Self {
        self.in_len = in_len;
        self.out_len = out_len;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_features(mut self, features: FeatureSet) -> Self {
        self.features = features;
        self
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .hyper
            .get(key)
            .ok_or_else(|| Error::invalid(format!("{}: missing hyperparameter `{key}`", self.architecture)))?;
        raw.trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{}: invalid value `{raw}` for `{key}`", self.architecture)))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self
            .hyper
            .get(key)
            .ok_or_else(|| Error::invalid(format!("{}: missing hyperparameter `{key}`", self.architecture)))?;
        crate::kv::parse_list(raw)
    }

    pub const BASE_KEYS: [&'static str; 5] = ["architecture", "features", "in_len", "out_len", "seed"];

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("architecture", &self.architecture);
        doc.push("features", self.features);
        doc.push("in_len", self.in_len);
        doc.push("out_len", self.out_len);
        doc.push("seed", self.seed);
        for (k, v) in &self.hyper {
            doc.push(k.as_str(), v);
        }
        doc
    }

    /// Parses a description written by [`ModelConfig::to_kv`]. Keys not
    /// given fall back to the architecture's defaults.
    pub fn from_kv(doc: &KvDoc, registry: &Registry) -> Result<Self> {
        let architecture: String = doc.require("architecture")?;
        let mut config = registry.config(&architecture)?;
        for (key, value) in doc.entries() {
            match key.as_str() {
                "architecture" => {}
                "features" => config.features = value.parse()?,
                "in_len" => config.in_len = parse_num(key, value)?,
                "out_len" => config.out_len = parse_num(key, value)?,
                "seed" => config.seed = parse_num(key, value)?,
                _ => {
                    config.hyper.insert(key.clone(), value.clone());
                }
            }
        }
        registry.check_keys(&config)?;
        Ok(config)
    }
}

fn parse_num<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("invalid value `{raw}` for `{key}`")))
}

/// One batch of normalized windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[batch, in_len]` pressures.
    pub input: Tensor,
    /// `[batch, in_len]` motor speeds, required by rpm-aware models.
    pub rpm: Option<Tensor>,
    /// `[batch, out_len]` targets, used for teacher forcing.
    pub target: Option<Tensor>,
}

impl Batch {
    pub fn from_rows(input: &[Vec<f64>]) -> Result<Self> {
        Ok(Batch {
            input: Tensor::from_rows(input)?,
            rpm: None,
            target: None,
        })
    }

    pub fn size(&self) -> usize {
        self.input.shape().first().copied().unwrap_or(0)
    }

    /// Per-step feature rows `[batch, f]` as tape constants.
    pub fn step_inputs<'t>(&self, tape: &'t Tape, features: FeatureSet) -> Vec<Var<'t>> {
        let (b, len) = (self.size(), self.input.shape()[1]);
        let f = features.width();
        (0..len)
            .map(|t| {
                let mut row = Vec::with_capacity(b * f);
                for i in 0..b {
                    row.push(self.input.data()[i * len + t]);
                    if let (FeatureSet::PressureRpm, Some(rpm)) = (features, &self.rpm) {
                        row.push(rpm.data()[i * len + t]);
                    }
                }
                tape.constant(Tensor::new([b, f], row).expect("row length"))
            })
            .collect()
    }

    /// Column `t` of the target as a `[batch, 1]` constant.
    pub(crate) fn target_column<'t>(&self, tape: &'t Tape, t: usize) -> Result<Var<'t>> {
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| Error::invalid("teacher forcing needs batch targets"))?;
        let (b, len) = (target.shape()[0], target.shape()[1]);
        let col = (0..b).map(|i| target.data()[i * len + t]).collect();
        Tensor::new([b, 1], col).map(|v| tape.constant(v))
    }
}

/// How a forward pass feeds its decoder.
pub enum ForwardMode<'a> {
    Inference,
    /// Training pass; decoders may substitute ground truth for their own
    /// previous output with the configured probability.
    Training { rng: &'a mut ChaCha8Rng },
}

/// Name, shape and initialization of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitScheme,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: InitScheme) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// A forecasting architecture.
pub trait SequenceModel: Send + Sync {
    fn config(&self) -> &ModelConfig;

    /// Parameters in the order [`SequenceModel::compute`] consumes them.
    fn layout(&self) -> Vec<ParamSpec>;

    /// Forward pass on already validated inputs, `[batch, out_len]`.
    fn compute<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch, mode: &mut ForwardMode<'_>) -> Result<Var<'t>>;

    /// Seeded initial parameters; each tensor draws from its own sub-seed.
    fn init(&self) -> ParamSet {
        let seed = self.config().seed;
        let mut set = ParamSet::new();
        for spec in self.layout() {
            let t = seeded_init(&spec.shape, spec.init, crate::derive_seed(seed, &spec.name));
            set.push(spec.name, t);
        }
        set
    }

    /// Validates parameter shapes and batch geometry, then runs the model.
    fn forward<'t>(&self, tape: &'t Tape, params: &[Var<'t>], batch: &Batch, mode: &mut ForwardMode<'_>) -> Result<Var<'t>> {
        let layout = self.layout();
        if layout.len() != params.len() {
            return Err(Error::Geometry(format!(
                "{} expects {} parameter tensors, got {}",
                self.config().architecture,
                layout.len(),
                params.len()
            )));
        }
        for (spec, p) in layout.iter().zip(params) {
            if p.shape() != spec.shape {
                return Err(Error::Geometry(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    spec.name,
                    p.shape(),
                    spec.shape
                )));
            }
        }
        check_batch(self.config(), batch)?;
        let out = self.compute(tape, params, batch, mode)?;
        if !out.value().is_finite() {
            return Err(Error::NonFiniteActivation { step: self.config().out_len });
        }
        Ok(out)
    }

    /// Inference on plain tensors.
    fn predict(&self, params: &ParamSet, batch: &Batch) -> Result<Tensor> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.tensors().iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward(&tape, &vars, batch, &mut ForwardMode::Inference)?;
        let value = (*out.value()).clone();
        Ok(value)
    }
}

fn check_batch(config: &ModelConfig, batch: &Batch) -> Result<()> {
    let (b, len) = match *batch.input.shape() {
        [b, len] => (b, len),
        ref other => return Err(Error::Geometry(format!("batch input must be [batch, in_len], got {other:?}"))),
    };
    if b == 0 {
        return Err(Error::Geometry("empty batch".into()));
    }
    if len != config.in_len {
        return Err(Error::Geometry(format!(
            "{} takes {} input steps, window has {}",
            config.architecture, config.in_len, len
        )));
    }
    if config.features.uses_rpm() {
        match &batch.rpm {
            Some(r) if r.shape() == batch.input.shape() => {}
            Some(r) => {
                return Err(Error::Geometry(format!("rpm block {:?} does not match input {:?}", r.shape(), batch.input.shape())))
            }
            None => return Err(Error::Geometry("model uses motor speed but windows carry none".into())),
        }
    }
    if let Some(t) = &batch.target {
        if t.shape() != [b, config.out_len] {
            return Err(Error::Geometry(format!(
                "targets {:?} do not match [{b}, {}]",
                t.shape(),
                config.out_len
            )));
        }
    }
    Ok(())
}

/// Fails with the step index when a recurrent activation stops being finite.
pub(crate) fn finite<'t>(v: Var<'t>, step: usize) -> Result<Var<'t>> {
    if v.value().is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteActivation { step })
    }
}

/// `x·w + b`
pub(crate) fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    x.matmul(w)?.add(b)
}

/// Repeats the last input value over the horizon. It has no parameters.
pub struct Persistence {
    config: ModelConfig,
}

impl Persistence {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Ok(Persistence { config: config.clone() })
    }
}

impl SequenceModel for Persistence {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn layout(&self) -> Vec<ParamSpec> {
        Vec::new()
    }

    fn compute<'t>(&self, tape: &'t Tape, _params: &[Var<'t>], batch: &Batch, _mode: &mut ForwardMode<'_>) -> Result<Var<'t>> {
        let (b, len) = (batch.size(), self.config.in_len);
        let mut out = Vec::with_capacity(b * self.config.out_len);
        for i in 0..b {
            let last = batch.input.data()[i * len + len - 1];
            out.extend(std::iter::repeat_n(last, self.config.out_len));
        }
        Ok(tape.constant(Tensor::new([b, self.config.out_len], out)?))
    }
}

pub type Builder = fn(&ModelConfig) -> Result<Box<dyn SequenceModel>>;

/// A named architecture with its default hyperparameters.
#[derive(Clone)]
pub struct ArchEntry {
    pub name: String,
    pub defaults: Vec<(String, String)>,
    pub build: Builder,
}

impl ArchEntry {
    pub fn new(name: &str, defaults: &[(&str, &str)], build: Builder) -> Self {
        ArchEntry {
            name: name.to_string(),
            defaults: defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            build,
        }
    }
}

/// Maps architecture names to builders. New architectures are added with
/// [`Registry::register`].
#[derive(Clone)]
pub struct Registry {
    entries: Vec<ArchEntry>,
}

fn boxed<M: SequenceModel + 'static>(m: Result<M>) -> Result<Box<dyn SequenceModel>> {
    m.map(|m| Box::new(m) as Box<dyn SequenceModel>)
}

impl Registry {
    pub fn empty() -> Self {
        Registry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register(ArchEntry::new("dnn", &[("hidden", "128,128,128")], |c| boxed(Dnn::new(c))));
        r.register(ArchEntry::new(
            "seq2seq",
            &[("hidden", "64"), ("teacher_forcing", "0.5")],
            |c| boxed(Seq2Seq::new(c, false)),
        ));
        r.register(ArchEntry::new(
            "seq2seq-attn",
            &[("hidden", "64"), ("teacher_forcing", "0.5")],
            |c| boxed(Seq2Seq::new(c, true)),
        ));
        r.register(ArchEntry::new(
            "lmu",
            &[("order", "32"), ("theta", "30"), ("units", "64"), ("discretization", "zoh")],
            |c| boxed(LmuRnn::new(c)),
        ));
        r.register(ArchEntry::new(
            "tcn",
            &[("channels", "32"), ("kernel", "3"), ("dilations", "1,2,4,8"), ("dense", "64")],
            |c| boxed(Tcn::new(c)),
        ));
        r.register(ArchEntry::new("persistence", &[], |c| boxed(Persistence::new(c))));
        r
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, entry: ArchEntry) {
        match self.entries.iter_mut().find(|e| e.name == entry.name) {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn entry(&self, name: &str) -> Result<&ArchEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownArchitecture(name.to_string()))
    }

    /// Default config for `name`: 30-in / 30-out pressure windows, seed 0.
    pub fn config(&self, name: &str) -> Result<ModelConfig> {
        let entry = self.entry(name)?;
        Ok(ModelConfig {
            architecture: entry.name.clone(),
            features: FeatureSet::Pressure,
            in_len: INPUT_STEPS,
            out_len: OUTPUT_STEPS,
            hyper: entry.defaults.iter().cloned().collect(),
            seed: 0,
        })
    }

    fn check_keys(&self, config: &ModelConfig) -> Result<()> {
        let entry = self.entry(&config.architecture)?;
        for key in config.hyper.keys() {
            if !entry.defaults.iter().any(|(k, _)| k == key) {
                return Err(Error::invalid(format!(
                    "unknown hyperparameter `{key}` for architecture `{}`",
                    config.architecture
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self, config: &ModelConfig) -> Result<Box<dyn SequenceModel>> {
        self.check_keys(config)?;
        if config.in_len == 0 || config.out_len == 0 {
            return Err(Error::Geometry("in_len and out_len must be at least 1".into()));
        }
        (self.entry(&config.architecture)?.build)(config)
    }
}

/// Builds a builtin architecture.
pub fn build(config: &ModelConfig) -> Result<Box<dyn SequenceModel>> {
    Registry::builtin().build(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ARCHS: [&str; 5] = ["dnn", "seq2seq", "seq2seq-attn", "lmu", "tcn"];

    fn batch(b: usize, len: usize) -> Batch {
        let rows: Vec<Vec<f64>> = (0..b).map(|i| (0..len).map(|t| ((i * 7 + t) as f64 * 0.37).sin()).collect()).collect();
        Batch::from_rows(&rows).unwrap()
    }

    fn zeroed(params: &ParamSet) -> ParamSet {
        let mut z = ParamSet::new();
        for (n, t) in params.names().iter().zip(params.tensors()) {
            z.push(n.clone(), Tensor::zeros(t.shape()));
        }
        z
    }

    #[test]
    fn output_shape_and_zero_network() {
        for name in ARCHS {
            let model = build(&ModelConfig::new(name).unwrap()).unwrap();
            let params = model.init();
            let b = batch(3, 30);
            let out = model.predict(&params, &b).unwrap();
            assert_eq!(out.shape(), &[3, 30], "{name}");
            let zero = model.predict(&zeroed(&params), &b).unwrap();
            assert!(zero.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }

    #[test]
    fn persistence_repeats_last_value() {
        let model = build(&ModelConfig::new("persistence").unwrap()).unwrap();
        let mut row: Vec<f64> = vec![80.0; 30];
        row[29] = 83.0;
        let out = model.predict(&ParamSet::new(), &Batch::from_rows(&[row]).unwrap()).unwrap();
        assert_eq!(out.data(), &[83.0; 30]);
    }

    #[test]
    fn geometry_errors() {
        let model = build(&ModelConfig::new("lmu").unwrap()).unwrap();
        let params = model.init();
        assert!(matches!(model.predict(&params, &batch(2, 29)), Err(Error::Geometry(_))));
        let rpm_model = build(&ModelConfig::new("dnn").unwrap().with_features(FeatureSet::PressureRpm)).unwrap();
        assert!(matches!(rpm_model.predict(&rpm_model.init(), &batch(2, 30)), Err(Error::Geometry(_))));
        let other = build(&ModelConfig::new("tcn").unwrap()).unwrap();
        assert!(matches!(model.predict(&other.init(), &batch(2, 30)), Err(Error::Geometry(_))));
    }

    #[test]
    fn non_finite_activation_reports_step() {
        let model = build(&ModelConfig::new("lmu").unwrap()).unwrap();
        let params = model.init();
        let mut b = batch(1, 30);
        b.input.data_mut()[4] = f64::NAN;
        assert!(matches!(model.predict(&params, &b), Err(Error::NonFiniteActivation { step: 4 })));
    }

    #[test]
    fn description_round_trip() {
        let registry = Registry::builtin();
        for name in registry.names().collect::<Vec<_>>() {
            let cfg = registry.config(name).unwrap().with_seed(17).with_geometry(12, 5);
            let back = ModelConfig::from_kv(&cfg.to_kv(), &registry).unwrap();
            assert_eq!(back, cfg);
        }
        let mut doc = ModelConfig::new("lmu").unwrap().to_kv();
        doc.push("mystery", 3);
        assert!(ModelConfig::from_kv(&doc, &registry).is_err());
        assert!(matches!(ModelConfig::new("transformer"), Err(Error::UnknownArchitecture(_))));
    }

    #[test]
    fn registry_accepts_new_entries() {
        let mut registry = Registry::builtin();
        registry.register(ArchEntry::new("transformer", &[("heads", "1")], |c| boxed(Persistence::new(c))));
        let cfg = registry.config("transformer").unwrap();
        assert_eq!(cfg.get::<usize>("heads").unwrap(), 1);
        assert!(registry.build(&cfg).is_ok());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::new("seq2seq").unwrap().with_seed(3);
        let a = build(&cfg).unwrap().init();
        let b = build(&cfg).unwrap().init();
        assert_eq!(a, b);
        let c = build(&cfg.with_seed(4)).unwrap().init();
        assert_ne!(a, c);
    }
}

//! Run configuration: every pipeline option as one flat `key = value`
//! document, resolved from defaults, an optional file and `--set`
//! overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hemocast_core::bench::TrainConfig;
use hemocast_core::kv::{self, KvDoc};
use hemocast_core::models::{ModelConfig, Registry};
use hemocast_core::signal::{SplitSpec, SwingStatistic, TrendRule, WindowSpec, AT_BLOCK, HYPOTENSION_MMHG};
use hemocast_core::synth::SynthConfig;
use hemocast_core::{derive_seed, TrendLabel};

use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn defaults() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("seed", "0".into());
    put("synth.count", "10".into());
    for (k, v) in SynthConfig::default().to_kv().entries() {
        if k != "seed" {
            put(&format!("synth.{k}"), v.clone());
        }
    }
    put("window.block", AT_BLOCK.to_string());
    put("window.in_len", "30".into());
    put("window.out_len", "30".into());
    put("window.stride", "1".into());
    put("window.swing_threshold", "10".into());
    put("window.swing_statistic", SwingStatistic::NetChange.to_string());
    let split = SplitSpec::default();
    put("split.mode", split.mode.to_string());
    put("split.train_fraction", split.train_fraction.to_string());
    put("split.test_fraction", split.test_fraction.to_string());
    put("split.holdout_fraction", split.holdout_fraction.to_string());
    put("split.filter", "I,D,S".into());
    put("model.architecture", "lmu".into());
    put("model.features", "pressure".into());
    for (k, v) in TrainConfig::default().to_kv().entries() {
        put(&format!("train.{k}"), v.clone());
    }
    put("train.overfit_probe", "false".into());
    put("alert.threshold", HYPOTENSION_MMHG.to_string());
    m
}

fn model_hyper_keys(architecture: &str) -> Result<Vec<String>, CliError> {
    let registry = Registry::builtin();
    let entry = registry.entry(architecture).map_err(CliError::from)?;
    Ok(entry.defaults.iter().map(|(k, _)| k.clone()).collect())
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig { values: defaults() }
    }

    /// Applies `text` (a config file) on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let doc = KvDoc::parse(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        for (k, v) in doc.entries() {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parses a `key=value` override.
    pub fn apply_override(&mut self, raw: &str) -> Result<(), CliError> {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects key=value, got `{raw}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let known = self.values.contains_key(key) || key.starts_with("model.");
        if !known {
            return Err(CliError::usage(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Fills in the chosen architecture's default hyperparameters and rejects
    /// model keys it does not know.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let arch = self.values["model.architecture"].clone();
        let hyper = model_hyper_keys(&arch)?;
        for key in self.values.keys().filter(|k| k.starts_with("model.")) {
            let name = &key["model.".len()..];
            if name != "architecture" && name != "features" && !hyper.iter().any(|h| h == name) {
                return Err(CliError::usage(format!("unknown config key `{key}` for architecture `{arch}`")));
            }
        }
        let base = Registry::builtin().config(&arch)?;
        for (k, v) in base.hyper {
            self.values.entry(format!("model.{k}")).or_insert(v);
        }
        // Parse everything once so bad values fail before any work starts.
        self.synth_config()?;
        self.window_spec()?;
        self.trend_rule()?;
        self.split_spec()?;
        self.filter()?;
        self.model_config()?;
        self.train_config()?;
        self.alert_threshold()?;
        Ok(self)
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::usage(format!("invalid value `{raw}` for `{key}`")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("seed")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.values.insert("seed".into(), seed.to_string());
    }

    /// Sub-seed for one purpose, derived from the root seed.
    pub fn sub_seed(&self, purpose: &str) -> Result<u64, CliError> {
        Ok(derive_seed(self.seed()?, purpose))
    }

    pub fn synth_count(&self) -> Result<usize, CliError> {
        self.get("synth.count")
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let mut cfg = SynthConfig::default();
        for (k, v) in self.values.iter().filter(|(k, _)| k.starts_with("synth.") && *k != "synth.count") {
            cfg.set(&k["synth.".len()..], v).map_err(|e| CliError::usage(format!("`{k}`: {e}")))?;
        }
        cfg.seed = self.sub_seed("synth")?;
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn block(&self) -> Result<usize, CliError> {
        self.get("window.block")
    }

    pub fn window_spec(&self) -> Result<WindowSpec, CliError> {
        let spec = WindowSpec {
            in_len: self.get("window.in_len")?,
            out_len: self.get("window.out_len")?,
            stride: self.get("window.stride")?,
        };
        if spec.in_len == 0 || spec.out_len == 0 || spec.stride == 0 || self.block()? == 0 {
            return Err(CliError::usage("window lengths, stride and block must be >= 1"));
        }
        Ok(spec)
    }

    pub fn trend_rule(&self) -> Result<TrendRule, CliError> {
        Ok(TrendRule {
            threshold: self.get("window.swing_threshold")?,
            statistic: self.get("window.swing_statistic")?,
        })
    }

    pub fn split_spec(&self) -> Result<SplitSpec, CliError> {
        Ok(SplitSpec {
            train_fraction: self.get("split.train_fraction")?,
            test_fraction: self.get("split.test_fraction")?,
            holdout_fraction: self.get("split.holdout_fraction")?,
            mode: self.get("split.mode")?,
            seed: self.sub_seed("split")?,
        })
    }

    pub fn filter(&self) -> Result<Vec<TrendLabel>, CliError> {
        let labels: Vec<TrendLabel> =
            kv::parse_list(self.raw("split.filter")).map_err(|e| CliError::usage(format!("`split.filter`: {e}")))?;
        if labels.is_empty() {
            return Err(CliError::usage("`split.filter` must name at least one of I, D, S"));
        }
        Ok(labels)
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let mut doc = KvDoc::new();
        doc.push("architecture", self.raw("model.architecture"));
        doc.push("features", self.raw("model.features"));
        let spec = self.window_spec()?;
        doc.push("in_len", spec.in_len);
        doc.push("out_len", spec.out_len);
        doc.push("seed", self.sub_seed("model")?);
        for (k, v) in &self.values {
            if let Some(name) = k.strip_prefix("model.") {
                if name != "architecture" && name != "features" {
                    doc.push(name, v);
                }
            }
        }
        let registry = Registry::builtin();
        let cfg = ModelConfig::from_kv(&doc, &registry).map_err(|e| CliError::usage(e.to_string()))?;
        registry.build(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let mut cfg = TrainConfig::default();
        for key in TrainConfig::KEYS {
            let full = format!("train.{key}");
            cfg.set(key, self.raw(&full)).map_err(|e| CliError::usage(format!("`{full}`: {e}")))?;
        }
        cfg.seed = self.sub_seed("train")?;
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn overfit_probe(&self) -> Result<bool, CliError> {
        self.get("train.overfit_probe")
    }

    pub fn alert_threshold(&self) -> Result<f64, CliError> {
        let t: f64 = self.get("alert.threshold")?;
        if !(t > 0.0) {
            return Err(CliError::usage("`alert.threshold` must be positive"));
        }
        Ok(t)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

//! Training, holdout search and per-trend evaluation.
//!
//! Models train on z-normalized pressures; every reported RMSE is in mmHg
//! after denormalization. Results are scored separately on increasing,
//! decreasing and stationary windows and on their union.

mod eval;
mod normalize;
mod report;
mod train;

pub use eval::{
    evaluate, persistence_baseline, rmse, Category, CategoryScore, EvalReport, Evaluation, Forecaster, PersistenceBaseline,
    TargetOracle, WindowTrace,
};
pub use normalize::Normalizer;
pub use report::{write_report, ReportFiles, PER_STEP_FILE, TABLE_FILE};
pub use train::{normalized_mse, train, EpochRecord, History, TrainConfig, TrainOutcome};

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::models::{ModelConfig, Registry, SequenceModel};
use crate::params::ParamSet;
use crate::signal::{Dataset, WindowPair};

/// Windows per inference batch.
const PREDICT_CHUNK: usize = 256;

/// Normalized predictions, one row per window, in window order.
pub fn predict_normalized(
    model: &dyn SequenceModel,
    params: &ParamSet,
    normalizer: &Normalizer,
    windows: &[&WindowPair],
) -> Result<Vec<Vec<f64>>> {
    let out_len = model.config().out_len;
    let chunks: Vec<Vec<Vec<f64>>> = windows
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| {
            let batch = normalizer.batch(chunk, model.config().features)?;
            let pred = model.predict(params, &batch)?;
            Ok(pred.data().chunks(out_len).map(<[f64]>::to_vec).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Architecture config plus the normalization it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDescription {
    pub config: ModelConfig,
    pub normalizer: Normalizer,
}

impl ModelDescription {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = self.config.to_kv();
        self.normalizer.write_kv(&mut doc);
        doc
    }

    pub fn from_kv(doc: &KvDoc, registry: &Registry) -> Result<Self> {
        let normalizer = Normalizer::from_kv(doc)?;
        let mut rest = KvDoc::new();
        for (k, v) in doc.entries() {
            if !k.starts_with("norm.") {
                rest.push(k.as_str(), v);
            }
        }
        Ok(ModelDescription {
            config: ModelConfig::from_kv(&rest, registry)?,
            normalizer,
        })
    }

    pub fn hash(&self) -> String {
        crate::config_hash(&self.to_kv().to_string())
    }
}

/// A built model with its parameters and training record.
pub struct TrainedModel {
    pub description: ModelDescription,
    pub model: Box<dyn SequenceModel>,
    pub params: ParamSet,
    pub history: History,
}

pub const DESCRIPTION_FILE: &str = "model.desc";
pub const CHECKPOINT_FILE: &str = "model.hfck";
pub const HISTORY_FILE: &str = "history.csv";

impl TrainedModel {
    pub fn new(description: ModelDescription, params: ParamSet, history: History, registry: &Registry) -> Result<Self> {
        let model = registry.build(&description.config)?;
        let layout = model.layout();
        let fits = layout.len() == params.len()
            && layout
                .iter()
                .zip(params.names().iter().zip(params.tensors()))
                .all(|(spec, (name, t))| spec.name == *name && spec.shape == t.shape());
        if !fits {
            return Err(Error::Geometry(format!(
                "checkpoint does not match the `{}` layout",
                description.config.architecture
            )));
        }
        Ok(TrainedModel {
            description,
            model,
            params,
            history,
        })
    }

    /// Forecasts for already cut windows, in mmHg.
    pub fn forecast_windows(&self, windows: &[&WindowPair]) -> Result<Vec<Vec<f64>>> {
        let n = &self.description.normalizer;
        let z = predict_normalized(self.model.as_ref(), &self.params, n, windows)?;
        Ok(z.into_iter().map(|row| row.into_iter().map(|v| n.invert(v)).collect()).collect())
    }

    /// Writes description, checkpoint and history into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(DESCRIPTION_FILE), self.description.to_kv().to_string())?;
        let mut ck = BufWriter::new(fs::File::create(dir.join(CHECKPOINT_FILE))?);
        self.params.write_checkpoint(&mut ck)?;
        ck.flush()?;
        let mut hist = BufWriter::new(fs::File::create(dir.join(HISTORY_FILE))?);
        self.history.write_csv(&mut hist)?;
        hist.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, registry: &Registry) -> Result<Self> {
        let doc = KvDoc::parse(&fs::read_to_string(dir.join(DESCRIPTION_FILE))?)?;
        let description = ModelDescription::from_kv(&doc, registry)?;
        let params = ParamSet::read_checkpoint(&mut BufReader::new(fs::File::open(dir.join(CHECKPOINT_FILE))?))?;
        let history = match fs::File::open(dir.join(HISTORY_FILE)) {
            Ok(f) => History::read_csv(f)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => History::default(),
            Err(e) => return Err(e.into()),
        };
        TrainedModel::new(description, params, history, registry)
    }
}

impl Forecaster for TrainedModel {
    fn name(&self) -> String {
        self.description.config.architecture.clone()
    }

    fn config_hash(&self) -> String {
        self.description.hash()
    }

    fn forecast(&self, windows: &[&WindowPair]) -> Result<Vec<Vec<f64>>> {
        self.forecast_windows(windows)
    }
}

/// Fits the normalizer on the training split, initializes the model from
/// its config seed and trains it.
pub fn fit(config: &ModelConfig, dataset: &Dataset, cfg: &TrainConfig, registry: &Registry) -> Result<TrainedModel> {
    let normalizer = Normalizer::fit(&dataset.train.windows)?;
    let model = registry.build(config)?;
    let init = model.init();
    let outcome = train(
        model.as_ref(),
        init,
        &dataset.train.windows,
        &dataset.holdout.windows,
        &normalizer,
        cfg,
    )?;
    Ok(TrainedModel {
        description: ModelDescription {
            config: config.clone(),
            normalizer,
        },
        model,
        params: outcome.params,
        history: outcome.history,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeaderboardEntry {
    /// Position in the grid.
    pub candidate: usize,
    pub architecture: String,
    pub config_hash: String,
    pub holdout_rmse: f64,
}

pub struct SearchResult {
    /// Best first; equal scores keep grid order.
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Trained candidates in grid order.
    pub models: Vec<TrainedModel>,
}

impl SearchResult {
    pub fn best(&self) -> &TrainedModel {
        &self.models[self.leaderboard[0].candidate]
    }
}

/// Trains every grid entry the same way and ranks them by holdout RMSE.
pub fn holdout_search(grid: &[ModelConfig], dataset: &Dataset, cfg: &TrainConfig, registry: &Registry) -> Result<SearchResult> {
    if grid.is_empty() {
        return Err(Error::invalid("holdout search over an empty grid"));
    }
    if dataset.holdout.is_empty() {
        return Err(Error::invalid("holdout split is empty"));
    }
    let mut models = Vec::with_capacity(grid.len());
    let mut leaderboard = Vec::with_capacity(grid.len());
    for (candidate, config) in grid.iter().enumerate() {
        let annotate = |source: Error| Error::Candidate {
            candidate,
            source: Box::new(source),
        };
        let trained = fit(config, dataset, cfg, registry).map_err(annotate)?;
        let eval = evaluate(&trained, &dataset.holdout.windows).map_err(annotate)?;
        leaderboard.push(LeaderboardEntry {
            candidate,
            architecture: config.architecture.clone(),
            config_hash: trained.config_hash(),
            holdout_rmse: eval.report.rmse(Category::All).expect("nonempty holdout"),
        });
        models.push(trained);
    }
    leaderboard.sort_by(|a, b| a.holdout_rmse.total_cmp(&b.holdout_rmse));
    Ok(SearchResult { leaderboard, models })
}

/// Windows in a capacity probe.
pub const PROBE_WINDOWS: usize = 8;
/// Optimizer step budget of a capacity probe.
pub const PROBE_STEPS: usize = 2000;
/// Training RMSE, in mmHg, a probe run stops at.
pub const PROBE_STOP_MMHG: f64 = 0.45;

pub struct ProbeOutcome {
    pub model: TrainedModel,
    /// RMSE in mmHg on the probe windows themselves.
    pub train_rmse: f64,
    pub steps: usize,
}

/// Memorization check: trains on a handful of windows, one full batch per
/// step, monitoring the same windows, until the training RMSE drops below
/// [`PROBE_STOP_MMHG`] or [`PROBE_STEPS`] steps pass.
pub fn overfit_probe(config: &ModelConfig, windows: &[WindowPair], base: &TrainConfig, registry: &Registry) -> Result<ProbeOutcome> {
    let normalizer = Normalizer::fit(windows)?;
    let model = registry.build(config)?;
    let cfg = TrainConfig {
        batch_size: windows.len(),
        max_epochs: PROBE_STEPS,
        max_steps: Some(PROBE_STEPS),
        early_stop_patience: PROBE_STEPS,
        stop_below: Some((PROBE_STOP_MMHG / normalizer.sd).powi(2)),
        ..base.clone()
    };
    let outcome = train(model.as_ref(), model.init(), windows, windows, &normalizer, &cfg)?;
    let train_rmse = normalizer.sd * normalized_mse(model.as_ref(), &outcome.params, &normalizer, windows)?.sqrt();
    Ok(ProbeOutcome {
        model: TrainedModel {
            description: ModelDescription {
                config: config.clone(),
                normalizer,
            },
            model,
            params: outcome.params,
            history: outcome.history,
        },
        train_rmse,
        steps: outcome.steps,
    })
}

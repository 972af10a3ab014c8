use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hemocast_core::bench::{
    self, evaluate, write_report, Evaluation, Forecaster, PersistenceBaseline, TargetOracle, TrainedModel,
};
use hemocast_core::models::Registry;
use hemocast_core::signal::{
    alert_scan, assemble_dataset, downsample, make_windows, read_cache, read_recording, write_cache, Composition,
    CsvSchema, Dataset, RtSeries, WindowCache,
};
use hemocast_core::synth;
use hemocast_core::{Error, TrendLabel, WindowPair};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RESOLVED_FILE: &str = "resolved.conf";
pub const SPLITS: [&str; 3] = ["train", "holdout", "test"];
pub const COMPARISON_FILE: &str = "comparison.csv";

pub fn cache_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.hfwc"))
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESOLVED_FILE), cfg.to_string())?;
    Ok(())
}

fn load_cache(dir: &Path, split: &str) -> Result<WindowCache, CliError> {
    let path = cache_path(dir, split);
    let file = fs::File::open(&path).map_err(|e| CliError::from(e).context(path.display()))?;
    read_cache(&mut BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let manifest = synth::corpus(&cfg.synth_config()?, cfg.synth_count()?, out)?;
    for rec in &manifest.recordings {
        println!("{}: {} events", rec.recording_id, rec.events.len());
    }
    println!("{} recordings, {} events", manifest.recordings.len(), manifest.event_count());
    write_resolved(out, cfg)
}

fn read_any(path: &Path) -> Result<RtSeries, CliError> {
    let with_rpm = read_recording(path, &CsvSchema::default());
    let series = match with_rpm {
        Err(Error::MissingColumn(c)) if c == "rpm" => read_recording(
            path,
            &CsvSchema {
                rpm: None,
                ..CsvSchema::default()
            },
        ),
        other => other,
    };
    series.map_err(|e| CliError::from(e).context(path.display()))
}

fn recordings_in(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::from(e).context(dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::data(format!("no .csv recordings in {}", dir.display())));
    }
    Ok(paths)
}

pub fn prepare(cfg: &RunConfig, recordings: &Path, out: &Path) -> Result<(), CliError> {
    let (spec, rule, block) = (cfg.window_spec()?, cfg.trend_rule()?, cfg.block()?);
    let mut windows = Vec::new();
    for path in recordings_in(recordings)? {
        let at = downsample(&read_any(&path)?, block)?;
        windows.extend(make_windows(&at, spec, rule)?);
    }
    println!("{}", Composition::of(&windows));
    let dataset = match assemble_dataset(windows, &cfg.split_spec()?, &cfg.filter()?) {
        Ok(d) => d,
        Err(Error::EmptyDataset) => {
            eprintln!("warning: no windows; recordings are shorter than one {}-step window", spec.in_len + spec.out_len);
            Dataset::default()
        }
        Err(e) => return Err(e.into()),
    };
    fs::create_dir_all(out)?;
    for (name, split) in SPLITS.iter().zip([&dataset.train, &dataset.holdout, &dataset.test]) {
        let cache = WindowCache {
            in_len: spec.in_len,
            out_len: spec.out_len,
            windows: split.windows.clone(),
        };
        let mut w = BufWriter::new(fs::File::create(cache_path(out, name))?);
        write_cache(&mut w, &cache)?;
        w.flush()?;
        println!("{name}: {}", split.composition);
    }
    write_resolved(out, cfg)
}

fn check_geometry(cache: &WindowCache, in_len: usize, out_len: usize, what: &str) -> Result<(), CliError> {
    if cache.in_len != in_len || cache.out_len != out_len {
        return Err(CliError::data(format!(
            "{what} expects {in_len}+{out_len} windows, cache holds {}+{}",
            cache.in_len, cache.out_len
        )));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, cache_dir: &Path, out: &Path) -> Result<(), CliError> {
    let model_cfg = cfg.model_config()?;
    let train_cfg = cfg.train_config()?;
    let registry = Registry::builtin();
    let train = load_cache(cache_dir, "train")?;
    let holdout = load_cache(cache_dir, "holdout")?;
    check_geometry(&train, model_cfg.in_len, model_cfg.out_len, "model config")?;
    check_geometry(&holdout, model_cfg.in_len, model_cfg.out_len, "model config")?;

    let trained = if cfg.overfit_probe()? {
        let n = bench::PROBE_WINDOWS.min(train.windows.len());
        let probe = bench::overfit_probe(&model_cfg, &train.windows[..n], &train_cfg, &registry)?;
        println!(
            "overfit probe: {n} windows, {} steps, train RMSE {:.4} mmHg",
            probe.steps, probe.train_rmse
        );
        probe.model
    } else {
        let dataset = Dataset {
            train: hemocast_core::signal::Split::new(train.windows),
            holdout: hemocast_core::signal::Split::new(holdout.windows),
            test: Default::default(),
        };
        bench::fit(&model_cfg, &dataset, &train_cfg, &registry)?
    };
    for e in &trained.history.epochs {
        println!("{e}");
    }
    trained.save(out)?;
    println!("saved {} ({})", model_cfg.architecture, trained.config_hash());
    write_resolved(out, cfg)
}

/// Gives each forecaster a unique report name.
struct Renamed<'a> {
    name: String,
    inner: &'a dyn Forecaster,
}

impl Forecaster for Renamed<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn config_hash(&self) -> String {
        self.inner.config_hash()
    }

    fn forecast(&self, windows: &[&WindowPair]) -> hemocast_core::Result<Vec<Vec<f64>>> {
        self.inner.forecast(windows)
    }
}

pub fn eval(cfg: &RunConfig, cache_dir: &Path, model_dirs: &[PathBuf], oracle: bool, out: &Path) -> Result<(), CliError> {
    let test = load_cache(cache_dir, "test")?;
    let registry = Registry::builtin();
    let models = model_dirs
        .iter()
        .map(|d| TrainedModel::load(d, &registry).map_err(|e| CliError::from(e).context(d.display())))
        .collect::<Result<Vec<_>, _>>()?;
    for (m, d) in models.iter().zip(model_dirs) {
        let c = &m.description.config;
        check_geometry(&test, c.in_len, c.out_len, &d.display().to_string())?;
    }

    let persistence = PersistenceBaseline { out_len: test.out_len };
    let mut forecasters: Vec<&dyn Forecaster> = vec![&persistence];
    forecasters.extend(models.iter().map(|m| m as &dyn Forecaster));
    if oracle {
        forecasters.push(&TargetOracle);
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let named: Vec<Renamed> = forecasters
        .into_iter()
        .map(|f| {
            let base = f.name();
            let n = seen.entry(base.clone()).or_default();
            *n += 1;
            let name = if *n == 1 { base } else { format!("{base}-{n}") };
            Renamed { name, inner: f }
        })
        .collect();

    if test.windows.is_empty() {
        return Err(CliError::data(format!("{} has no windows", cache_path(cache_dir, "test").display())));
    }
    let evals: Vec<Evaluation> = named
        .iter()
        .map(|f| evaluate(f, &test.windows))
        .collect::<hemocast_core::Result<_>>()?;
    for e in &evals {
        println!("{}: {}", e.report.model, e.report.summary());
    }
    write_report(out, &evals)?;
    write_resolved(out, cfg)
}

pub fn forecast(cfg: &RunConfig, model_dir: &Path, csv: &Path, at: usize, out: Option<&Path>) -> Result<(), CliError> {
    let model = TrainedModel::load(model_dir, &Registry::builtin()).map_err(|e| CliError::from(e).context(model_dir.display()))?;
    let (in_len, out_len) = (model.description.config.in_len, model.description.config.out_len);
    let series = downsample(&read_any(csv)?, cfg.block()?)?;
    if at < in_len || at > series.len() {
        return Err(CliError::data(format!(
            "forecast at step {at} needs {in_len} steps of history within a {}-step recording",
            series.len()
        )));
    }
    let window = WindowPair {
        input: series.values[at - in_len..at].to_vec(),
        target: vec![0.0; out_len],
        input_rpm: series.rpm_values.as_ref().map(|r| r[at - in_len..at].to_vec()),
        label: TrendLabel::Stationary,
        recording_id: series.recording_id.clone(),
        offset: at - in_len,
    };
    let pred = model.forecast_windows(&[&window])?.remove(0);
    let threshold = cfg.alert_threshold()?;
    let alerts = alert_scan(&pred, threshold)?;

    let mut text = String::from("step,pred_mmhg\n");
    for (k, v) in pred.iter().enumerate() {
        text.push_str(&format!("{},{v:.4}\n", at + k));
    }
    print!("{text}");
    if alerts.is_empty() {
        println!("no forecast values below {threshold} mmHg");
    }
    for (a, b) in &alerts {
        println!("alert: steps {}..={} below {threshold} mmHg", at + a, at + b);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("forecast.csv"), text)?;
        write_resolved(dir, cfg)?;
    }
    Ok(())
}

/// Concatenates the report tables of several eval runs.
pub fn report(cfg: &RunConfig, dirs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut rows = vec!["source,model,category,rmse_mmhg,window_count".to_string()];
    for dir in dirs {
        let path = dir.join(bench::TABLE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::from(e).context(path.display()))?;
        let mut lines = text.lines();
        if lines.next() != Some("model,category,rmse_mmhg,window_count") {
            return Err(CliError::data(format!("{} is not a report table", path.display())));
        }
        let source = dir.display().to_string().replace(',', "_");
        for line in lines.filter(|l| !l.trim().is_empty()) {
            rows.push(format!("{source},{line}"));
            println!("{source}: {line}");
        }
    }
    fs::create_dir_all(out)?;
    fs::write(out.join(COMPARISON_FILE), rows.join("\n") + "\n")?;
    write_resolved(out, cfg)
}

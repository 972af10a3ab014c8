//! Synthetic 25 Hz aortic pressure and motor speed recordings with injected
//! trend events.
//!
//! A recording is a mean-reverting baseline walk plus linear trend ramps,
//! a sinusoidal pulse and white measurement noise. Motor speed steps between
//! a fixed set of pump levels.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kv::{self, KvDoc};
use crate::signal::{write_csv, RtSeries, RT_RATE_HZ};

/// Pull toward the configured mean pressure, per sample.
const REVERSION: f64 = 1e-5;
/// Cumulative event offset kept inside this band by flipping event signs.
const OFFSET_BAND: (f64, f64) = (-25.0, 35.0);
/// Plausible pressure range; samples outside are clamped and counted.
pub const PRESSURE_RANGE: (f64, f64) = (20.0, 200.0);

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub baseline_map: f64,
    pub pulse_pressure: f64,
    pub heart_rate_bpm: f64,
    /// Random-walk step, mmHg per √sample.
    pub drift_sd: f64,
    pub noise_sd: f64,
    pub trend_rate_per_hr: f64,
    pub trend_magnitude_range: (f64, f64),
    pub trend_duration_range: (f64, f64),
    pub rpm_levels: Vec<f64>,
    /// Expected pump speed changes per hour.
    pub rpm_change_rate_per_hr: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration_s: 7200.0,
            baseline_map: 75.0,
            pulse_pressure: 40.0,
            heart_rate_bpm: 75.0,
            drift_sd: 0.02,
            noise_sd: 1.0,
            trend_rate_per_hr: 4.0,
            trend_magnitude_range: (10.0, 30.0),
            trend_duration_range: (120.0, 600.0),
            rpm_levels: vec![33000.0, 37000.0, 41000.0, 46000.0],
            rpm_change_rate_per_hr: 1.0,
            seed: 0,
        }
    }
}

fn parse_range(raw: &str) -> Result<(f64, f64)> {
    match kv::parse_list::<f64>(raw)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(Error::Format(format!("expected `lo,hi`, got `{raw}`"))),
    }
}

impl SynthConfig {
    pub const KEYS: [&'static str; 12] = [
        "duration_s",
        "baseline_map",
        "pulse_pressure",
        "heart_rate_bpm",
        "drift_sd",
        "noise_sd",
        "trend_rate_per_hr",
        "trend_magnitude_range",
        "trend_duration_range",
        "rpm_levels",
        "rpm_change_rate_per_hr",
        "seed",
    ];

    /// A config with every stochastic term and event switched off.
    pub fn quiet(duration_s: f64, baseline_map: f64) -> Self {
        SynthConfig {
            duration_s,
            baseline_map,
            pulse_pressure: 0.0,
            drift_sd: 0.0,
            noise_sd: 0.0,
            trend_rate_per_hr: 0.0,
            rpm_change_rate_per_hr: 0.0,
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let num = || -> Result<f64> {
            raw.trim()
                .parse()
                .map_err(|_| Error::Format(format!("invalid value `{raw}` for `{key}`")))
        };
        match key {
            "duration_s" => self.duration_s = num()?,
            "baseline_map" => self.baseline_map = num()?,
            "pulse_pressure" => self.pulse_pressure = num()?,
            "heart_rate_bpm" => self.heart_rate_bpm = num()?,
            "drift_sd" => self.drift_sd = num()?,
            "noise_sd" => self.noise_sd = num()?,
            "trend_rate_per_hr" => self.trend_rate_per_hr = num()?,
            "trend_magnitude_range" => self.trend_magnitude_range = parse_range(raw)?,
            "trend_duration_range" => self.trend_duration_range = parse_range(raw)?,
            "rpm_levels" => self.rpm_levels = kv::parse_list(raw)?,
            "rpm_change_rate_per_hr" => self.rpm_change_rate_per_hr = num()?,
            "seed" => {
                self.seed = raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("invalid seed `{raw}`")))?
            }
            other => return Err(Error::invalid(format!("unknown synth key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("duration_s", self.duration_s);
        doc.push("baseline_map", self.baseline_map);
        doc.push("pulse_pressure", self.pulse_pressure);
        doc.push("heart_rate_bpm", self.heart_rate_bpm);
        doc.push("drift_sd", self.drift_sd);
        doc.push("noise_sd", self.noise_sd);
        doc.push("trend_rate_per_hr", self.trend_rate_per_hr);
        let (lo, hi) = self.trend_magnitude_range;
        doc.push("trend_magnitude_range", format!("{lo},{hi}"));
        let (lo, hi) = self.trend_duration_range;
        doc.push("trend_duration_range", format!("{lo},{hi}"));
        doc.push("rpm_levels", kv::join_list(&self.rpm_levels));
        doc.push("rpm_change_rate_per_hr", self.rpm_change_rate_per_hr);
        doc.push("seed", self.seed);
        doc
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        let (mlo, mhi) = self.trend_magnitude_range;
        let (dlo, dhi) = self.trend_duration_range;
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.pulse_pressure >= 0.0) {
            return bad(format!("pulse_pressure must be >= 0, got {}", self.pulse_pressure));
        }
        if !(30.0..=200.0).contains(&self.heart_rate_bpm) {
            return bad(format!("heart_rate_bpm must lie in [30, 200], got {}", self.heart_rate_bpm));
        }
        if !(self.drift_sd >= 0.0 && self.noise_sd >= 0.0) {
            return bad("drift_sd and noise_sd must be >= 0".into());
        }
        if !(self.trend_rate_per_hr >= 0.0 && self.rpm_change_rate_per_hr >= 0.0) {
            return bad("event rates must be >= 0".into());
        }
        if !(mlo >= 10.0 && mhi >= mlo) {
            return bad(format!("trend magnitudes must satisfy 10 <= lo <= hi, got {mlo},{hi}", hi = mhi));
        }
        if !(dlo > 0.0 && dhi >= dlo) {
            return bad(format!("trend durations must satisfy 0 < lo <= hi, got {dlo},{dhi}"));
        }
        if self.rpm_levels.is_empty() || self.rpm_levels.iter().any(|r| !(*r >= 0.0)) {
            return bad("rpm_levels must be a nonempty list of non-negative speeds".into());
        }
        Ok(())
    }
}

/// A linear ramp from 0 to `delta` over `[start_s, start_s + duration_s]`,
/// held at `delta` afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrendEvent {
    pub start_s: f64,
    pub duration_s: f64,
    pub delta: f64,
}

impl TrendEvent {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    fn sample_span(&self) -> (usize, usize) {
        let start = (self.start_s * RT_RATE_HZ).round() as usize;
        let len = (self.duration_s * RT_RATE_HZ).round() as usize;
        (start, len)
    }
}

/// Adds `event` to a copy of `series`. The ramp covers `round(duration·25)`
/// samples starting at sample `round(start·25)` and reaches `delta` on its
/// last sample.
pub fn inject_event(series: &RtSeries, event: &TrendEvent) -> Result<RtSeries> {
    let mut out = series.clone();
    add_ramp(&mut out.aop, event)?;
    Ok(out)
}

fn add_ramp(aop: &mut [f64], event: &TrendEvent) -> Result<()> {
    let (start, len) = event.sample_span();
    if !(event.start_s >= 0.0 && event.duration_s >= 0.0) || start + len > aop.len() {
        return Err(Error::invalid(format!(
            "event at {}s for {}s does not fit a {}s recording",
            event.start_s,
            event.duration_s,
            aop.len() as f64 / RT_RATE_HZ
        )));
    }
    if event.delta == 0.0 {
        return Ok(());
    }
    let last = len.saturating_sub(1).max(1) as f64;
    for (k, v) in aop[start..].iter_mut().enumerate() {
        *v += if k < len && len > 1 {
            event.delta * k as f64 / last
        } else {
            event.delta
        };
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesized {
    pub series: RtSeries,
    pub events: Vec<TrendEvent>,
    /// Samples pulled back into [`PRESSURE_RANGE`].
    pub clamped: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Arrival times of a Poisson process on `[0, horizon)`.
fn poisson_arrivals(rng: &mut ChaCha8Rng, rate_per_s: f64, horizon: f64) -> Vec<f64> {
    let mut times = Vec::new();
    if rate_per_s <= 0.0 {
        return times;
    }
    let gap = Exp::new(rate_per_s).expect("positive rate");
    let mut t = gap.sample(rng);
    while t < horizon {
        times.push(t);
        t += gap.sample(rng);
    }
    times
}

fn draw_events(config: &SynthConfig) -> Vec<TrendEvent> {
    let mut rng = stream(config.seed, 1);
    let (mlo, mhi) = config.trend_magnitude_range;
    let (dlo, dhi) = config.trend_duration_range;
    let mut events: Vec<TrendEvent> = Vec::new();
    let mut offset = 0.0;
    for start_s in poisson_arrivals(&mut rng, config.trend_rate_per_hr / 3600.0, config.duration_s) {
        let duration_s = rng.random_range(dlo..=dhi);
        let magnitude = rng.random_range(mlo..=mhi);
        let mut delta = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        let overlaps = events.last().is_some_and(|e| start_s < e.end_s());
        if overlaps || start_s + duration_s > config.duration_s {
            continue;
        }
        if !(OFFSET_BAND.0..=OFFSET_BAND.1).contains(&(offset + delta)) {
            delta = -delta;
        }
        offset += delta;
        events.push(TrendEvent {
            start_s,
            duration_s,
            delta,
        });
    }
    events
}

fn motor_speed(config: &SynthConfig, n: usize) -> Vec<f64> {
    let mut rng = stream(config.seed, 4);
    let levels = &config.rpm_levels;
    let mut level = rng.random_range(0..levels.len());
    let mut rpm = vec![0.0; n];
    let mut from = 0;
    let changes = poisson_arrivals(&mut rng, config.rpm_change_rate_per_hr / 3600.0, config.duration_s);
    for t in changes {
        let at = ((t * RT_RATE_HZ).round() as usize).min(n);
        rpm[from..at].fill(levels[level]);
        from = at;
        if levels.len() > 1 {
            level = (level + rng.random_range(1..levels.len())) % levels.len();
        }
    }
    rpm[from..].fill(levels[level]);
    rpm
}

/// Generates one recording. The output is a pure function of `config`.
pub fn generate(config: &SynthConfig, recording_id: &str) -> Result<Synthesized> {
    config.validate()?;
    let n = (config.duration_s * RT_RATE_HZ).round() as usize;
    let mut walk_rng = stream(config.seed, 2);
    let mut noise_rng = stream(config.seed, 3);
    let omega = 2.0 * std::f64::consts::PI * config.heart_rate_bpm / 60.0;

    let mut aop = Vec::with_capacity(n);
    let mut baseline = config.baseline_map;
    for k in 0..n {
        let t = k as f64 / RT_RATE_HZ;
        let pulse = 0.5 * config.pulse_pressure * (omega * t).sin();
        let noise: f64 = if config.noise_sd > 0.0 {
            config.noise_sd * noise_rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        aop.push(baseline + pulse + noise);
        if config.drift_sd > 0.0 {
            let step: f64 = walk_rng.sample(StandardNormal);
            baseline += REVERSION * (config.baseline_map - baseline) + config.drift_sd * step;
        }
    }

    let events = draw_events(config);
    for event in &events {
        add_ramp(&mut aop, event)?;
    }
    let mut clamped = 0;
    for v in &mut aop {
        if *v < PRESSURE_RANGE.0 || *v > PRESSURE_RANGE.1 {
            *v = v.clamp(PRESSURE_RANGE.0, PRESSURE_RANGE.1);
            clamped += 1;
        }
    }
    let rpm = motor_speed(config, n);
    Ok(Synthesized {
        series: RtSeries::new(recording_id, aop, Some(rpm)),
        events,
        clamped,
    })
}

/// Bookkeeping for one generated recording.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordingEntry {
    pub recording_id: String,
    pub seed: u64,
    pub events: Vec<TrendEvent>,
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusManifest {
    pub config_hash: String,
    pub recordings: Vec<RecordingEntry>,
}

impl CorpusManifest {
    pub fn event_count(&self) -> usize {
        self.recordings.iter().map(|r| r.events.len()).sum()
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("config_hash", &self.config_hash);
        doc.push("recordings", self.recordings.len());
        for rec in &self.recordings {
            doc.push("recording", &rec.recording_id);
            doc.push("seed", rec.seed);
            doc.push("config_hash", &self.config_hash);
            doc.push("clamped", rec.clamped);
            for e in &rec.events {
                doc.push("event", format!("{},{},{}", e.start_s, e.duration_s, e.delta));
            }
        }
        doc
    }
}

/// Per-recording config: the corpus seed is replaced by a derived one.
pub fn recording_config(config: &SynthConfig, index: usize) -> SynthConfig {
    SynthConfig {
        seed: crate::derive_seed(config.seed, &format!("recording-{index}")),
        ..config.clone()
    }
}

pub fn recording_id(index: usize) -> String {
    format!("rec_{index:03}")
}

/// Generates `count` recordings without touching the filesystem.
pub fn generate_corpus(config: &SynthConfig, count: usize) -> Result<Vec<Synthesized>> {
    if count == 0 {
        return Err(Error::invalid("corpus needs at least one recording"));
    }
    config.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| generate(&recording_config(config, i), &recording_id(i)))
        .collect()
}

/// Writes `count` recordings as `rec_XXX.csv` plus `manifest.txt` into
/// `dir`.
pub fn corpus(config: &SynthConfig, count: usize, dir: &Path) -> Result<CorpusManifest> {
    let generated = generate_corpus(config, count)?;
    fs::create_dir_all(dir)?;
    let mut recordings = Vec::with_capacity(count);
    for (i, rec) in generated.into_iter().enumerate() {
        let file = fs::File::create(dir.join(format!("{}.csv", rec.series.recording_id)))?;
        write_csv(file, &rec.series)?;
        recordings.push(RecordingEntry {
            recording_id: rec.series.recording_id,
            seed: recording_config(config, i).seed,
            events: rec.events,
            clamped: rec.clamped,
        });
    }
    let manifest = CorpusManifest {
        config_hash: crate::config_hash(&config.to_kv().to_string()),
        recordings,
    };
    fs::write(dir.join("manifest.txt"), manifest.to_kv().to_string())?;
    Ok(manifest)
}

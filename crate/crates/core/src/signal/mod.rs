//! Raw 25 Hz recordings, 0.1 Hz block averaging, sliding windows and trend
//! labels.

mod cache;
mod csv;
mod dataset;

pub use cache::{read_cache, write_cache, WindowCache};
pub use csv::{ingest_csv, read_recording, write_csv, CsvSchema};
pub use dataset::{assemble_dataset, Composition, Dataset, Split, SplitMode, SplitSpec};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sampling rate of raw recordings.
pub const RT_RATE_HZ: f64 = 25.0;
/// RT samples averaged into one AT value (10 s at 25 Hz).
pub const AT_BLOCK: usize = 250;
/// AT steps in the 5-minute model input.
pub const INPUT_STEPS: usize = 30;
/// AT steps in the 5-minute forecast horizon.
pub const OUTPUT_STEPS: usize = 30;
/// Pressure change that makes a 10-minute sequence a trend.
pub const SWING_MMHG: f64 = 10.0;
/// Mean pressure below which an excursion is flagged.
pub const HYPOTENSION_MMHG: f64 = 65.0;

/// One raw sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtRecord {
    pub t: i64,
    pub aop: f64,
    pub rpm: Option<f64>,
}

/// A 25 Hz recording, stored column-wise. Sample indices run contiguously
/// from `start_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct RtSeries {
    pub recording_id: String,
    pub start_index: i64,
    pub aop: Vec<f64>,
    pub rpm: Option<Vec<f64>>,
}

impl RtSeries {
    pub fn new(recording_id: impl Into<String>, aop: Vec<f64>, rpm: Option<Vec<f64>>) -> Self {
        RtSeries {
            recording_id: recording_id.into(),
            start_index: 0,
            aop,
            rpm,
        }
    }

    pub fn len(&self) -> usize {
        self.aop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aop.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / RT_RATE_HZ
    }

    pub fn records(&self) -> impl Iterator<Item = RtRecord> + '_ {
        self.aop.iter().enumerate().map(move |(i, &aop)| RtRecord {
            t: self.start_index + i as i64,
            aop,
            rpm: self.rpm.as_ref().map(|r| r[i]),
        })
    }
}

/// A 0.1 Hz series of block means.
#[derive(Clone, Debug, PartialEq)]
pub struct AtSeries {
    pub recording_id: String,
    pub values: Vec<f64>,
    pub rpm_values: Option<Vec<f64>>,
}

impl AtSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn block_means(values: &[f64], block: usize) -> Vec<f64> {
    values
        .chunks_exact(block)
        .map(|c| c.iter().sum::<f64>() / block as f64)
        .collect()
}

/// Averages consecutive blocks of `block` samples; a trailing partial block
/// is dropped.
pub fn downsample(rt: &RtSeries, block: usize) -> Result<AtSeries> {
    if block == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    Ok(AtSeries {
        recording_id: rt.recording_id.clone(),
        values: block_means(&rt.aop, block),
        rpm_values: rt.rpm.as_deref().map(|r| block_means(r, block)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrendLabel {
    Increasing,
    Decreasing,
    Stationary,
}

impl TrendLabel {
    pub const ALL: [TrendLabel; 3] = [
        TrendLabel::Increasing,
        TrendLabel::Decreasing,
        TrendLabel::Stationary,
    ];

    /// Cache byte: 0 = I, 1 = D, 2 = S.
    pub fn code(self) -> u8 {
        match self {
            TrendLabel::Increasing => 0,
            TrendLabel::Decreasing => 1,
            TrendLabel::Stationary => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        TrendLabel::ALL.get(code as usize).copied()
    }

    pub fn short(self) -> &'static str {
        match self {
            TrendLabel::Increasing => "I",
            TrendLabel::Decreasing => "D",
            TrendLabel::Stationary => "S",
        }
    }
}

impl fmt::Display for TrendLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for TrendLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "increasing" => Ok(TrendLabel::Increasing),
            "D" | "d" | "decreasing" => Ok(TrendLabel::Decreasing),
            "S" | "s" | "stationary" => Ok(TrendLabel::Stationary),
            other => Err(Error::invalid(format!("unknown trend label `{other}`"))),
        }
    }
}

/// Statistic compared against the swing threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SwingStatistic {
    /// `last − first`; its sign gives the direction.
    #[default]
    NetChange,
    /// `max − min`; the direction is min-before-max (increasing) or
    /// max-before-min (decreasing).
    Range,
}

impl FromStr for SwingStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "net" | "net-change" => Ok(SwingStatistic::NetChange),
            "range" | "max-min" => Ok(SwingStatistic::Range),
            other => Err(Error::invalid(format!("unknown swing statistic `{other}`"))),
        }
    }
}

impl fmt::Display for SwingStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwingStatistic::NetChange => "net",
            SwingStatistic::Range => "range",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrendRule {
    pub threshold: f64,
    pub statistic: SwingStatistic,
}

impl Default for TrendRule {
    fn default() -> Self {
        TrendRule {
            threshold: SWING_MMHG,
            statistic: SwingStatistic::NetChange,
        }
    }
}

impl TrendRule {
    /// Labels a sequence of any nonzero length.
    pub fn classify(&self, values: &[f64]) -> Result<TrendLabel> {
        let (Some(&first), Some(&last)) = (values.first(), values.last()) else {
            return Err(Error::invalid("cannot classify an empty sequence"));
        };
        let label = match self.statistic {
            SwingStatistic::NetChange => {
                let delta = last - first;
                if delta >= self.threshold {
                    TrendLabel::Increasing
                } else if delta <= -self.threshold {
                    TrendLabel::Decreasing
                } else {
                    TrendLabel::Stationary
                }
            }
            SwingStatistic::Range => {
                let (mut imin, mut imax) = (0, 0);
                for (i, &v) in values.iter().enumerate() {
                    if v < values[imin] {
                        imin = i;
                    }
                    if v > values[imax] {
                        imax = i;
                    }
                }
                if values[imax] - values[imin] < self.threshold {
                    TrendLabel::Stationary
                } else if imin < imax {
                    TrendLabel::Increasing
                } else {
                    TrendLabel::Decreasing
                }
            }
        };
        Ok(label)
    }
}

/// Labels a full 10-minute sequence (60 AT values) by net change.
pub fn classify_trend(values: &[f64]) -> Result<TrendLabel> {
    if values.len() != INPUT_STEPS + OUTPUT_STEPS {
        return Err(Error::Geometry(format!(
            "trend classification needs {} values, got {}",
            INPUT_STEPS + OUTPUT_STEPS,
            values.len()
        )));
    }
    TrendRule::default().classify(values)
}

/// An input segment, the segment that follows it, and the trend label of
/// the two together.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub input_rpm: Option<Vec<f64>>,
    pub label: TrendLabel,
    pub recording_id: String,
    pub offset: usize,
}

impl WindowPair {
    /// Input followed by target.
    pub fn full_sequence(&self) -> Vec<f64> {
        let mut v = self.input.clone();
        v.extend_from_slice(&self.target);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub in_len: usize,
    pub out_len: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            in_len: INPUT_STEPS,
            out_len: OUTPUT_STEPS,
            stride: 1,
        }
    }
}

impl WindowSpec {
    /// Windows a series of `len` AT steps yields.
    pub fn count(&self, len: usize) -> usize {
        let span = self.in_len + self.out_len;
        if len < span {
            0
        } else {
            (len - span) / self.stride + 1
        }
    }
}

/// Cuts sliding windows at offsets `0, stride, 2·stride, …` and labels each.
/// Windows never cross the end of the series.
pub fn make_windows(at: &AtSeries, spec: WindowSpec, rule: TrendRule) -> Result<Vec<WindowPair>> {
    if spec.in_len == 0 || spec.out_len == 0 || spec.stride == 0 {
        return Err(Error::invalid("window lengths and stride must be at least 1"));
    }
    let span = spec.in_len + spec.out_len;
    (0..spec.count(at.len()))
        .map(|k| {
            let offset = k * spec.stride;
            let seq = &at.values[offset..offset + span];
            Ok(WindowPair {
                input: seq[..spec.in_len].to_vec(),
                target: seq[spec.in_len..].to_vec(),
                input_rpm: at
                    .rpm_values
                    .as_ref()
                    .map(|r| r[offset..offset + spec.in_len].to_vec()),
                label: rule.classify(seq)?,
                recording_id: at.recording_id.clone(),
                offset,
            })
        })
        .collect()
}

/// Maximal runs of values strictly below `threshold`, as inclusive index
/// ranges in order.
pub fn alert_scan(values: &[f64], threshold: f64) -> Result<Vec<(usize, usize)>> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("alert threshold {threshold} must be positive")));
    }
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in values.iter().enumerate() {
        match (v < threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, values.len() - 1));
    }
    Ok(runs)
}

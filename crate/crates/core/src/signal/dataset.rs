use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{TrendLabel, WindowPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Whole recordings go to either the training pool or the test split.
    #[default]
    ByRecording,
    /// Individual windows are assigned independently.
    ByWindow,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "by-recording" => Ok(SplitMode::ByRecording),
            "by-window" => Ok(SplitMode::ByWindow),
            other => Err(Error::invalid(format!("unknown split mode `{other}`"))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::ByRecording => "by-recording",
            SplitMode::ByWindow => "by-window",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Share of windows (or recordings) in the training pool.
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Share of the training pool carved out for hyperparameter selection.
    pub holdout_fraction: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            test_fraction: 0.2,
            holdout_fraction: 0.1,
            mode: SplitMode::ByRecording,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Composition {
    pub increasing: usize,
    pub decreasing: usize,
    pub stationary: usize,
}

impl Composition {
    pub fn of<'a>(windows: impl IntoIterator<Item = &'a WindowPair>) -> Self {
        let mut c = Composition::default();
        for w in windows {
            match w.label {
                TrendLabel::Increasing => c.increasing += 1,
                TrendLabel::Decreasing => c.decreasing += 1,
                TrendLabel::Stationary => c.stationary += 1,
            }
        }
        c
    }

    pub fn get(&self, label: TrendLabel) -> usize {
        match label {
            TrendLabel::Increasing => self.increasing,
            TrendLabel::Decreasing => self.decreasing,
            TrendLabel::Stationary => self.stationary,
        }
    }

    pub fn total(&self) -> usize {
        self.increasing + self.decreasing + self.stationary
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "I={}, D={}, S={}", self.increasing, self.decreasing, self.stationary)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub windows: Vec<WindowPair>,
    pub composition: Composition,
}

impl Split {
    pub fn new(windows: Vec<WindowPair>) -> Self {
        let composition = Composition::of(&windows);
        Split { windows, composition }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub holdout: Split,
    pub test: Split,
}

fn count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Filters windows by label and splits them into train / holdout / test
/// under a seeded shuffle.
pub fn assemble_dataset(windows: Vec<WindowPair>, spec: &SplitSpec, filter: &[TrendLabel]) -> Result<Dataset> {
    if filter.is_empty() {
        return Err(Error::invalid("trend filter must name at least one label"));
    }
    let fractions = [spec.train_fraction, spec.test_fraction, spec.holdout_fraction];
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (spec.train_fraction + spec.test_fraction - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must lie in [0, 1] with train + test = 1 (got {} + {})",
            spec.train_fraction, spec.test_fraction
        )));
    }
    let mut kept: Vec<WindowPair> = windows.into_iter().filter(|w| filter.contains(&w.label)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (mut test, mut pool) = match spec.mode {
        SplitMode::ByWindow => {
            kept.shuffle(&mut rng);
            let n_test = count(spec.test_fraction, kept.len());
            let pool = kept.split_off(n_test);
            (kept, pool)
        }
        SplitMode::ByRecording => {
            let mut ids: Vec<String> = kept
                .iter()
                .map(|w| w.recording_id.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            ids.shuffle(&mut rng);
            let mut n_test = count(spec.test_fraction, ids.len());
            if ids.len() >= 2 && spec.test_fraction > 0.0 {
                n_test = n_test.clamp(1, ids.len() - 1);
            } else if ids.len() < 2 {
                n_test = 0;
            }
            let test_ids: BTreeSet<&str> = ids[..n_test].iter().map(String::as_str).collect();
            let (test, pool): (Vec<_>, Vec<_>) = kept
                .into_iter()
                .partition(|w| test_ids.contains(w.recording_id.as_str()));
            (test, pool)
        }
    };
    test.shuffle(&mut rng);
    pool.shuffle(&mut rng);
    let n_holdout = count(spec.holdout_fraction, pool.len());
    let train = pool.split_off(n_holdout);
    Ok(Dataset {
        train: Split::new(train),
        holdout: Split::new(pool),
        test: Split::new(test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn windows(n: usize, recordings: usize, label: TrendLabel) -> Vec<WindowPair> {
        (0..n)
            .map(|i| WindowPair {
                input: vec![i as f64],
                target: vec![0.0],
                input_rpm: None,
                label,
                recording_id: format!("rec{}", i % recordings),
                offset: i,
            })
            .collect()
    }

    fn ids(split: &Split) -> Vec<(String, usize)> {
        split.windows.iter().map(|w| (w.recording_id.clone(), w.offset)).collect()
    }

    #[test]
    fn holdout_only() {
        let spec = SplitSpec {
            train_fraction: 1.0,
            test_fraction: 0.0,
            mode: SplitMode::ByWindow,
            ..Default::default()
        };
        let mut ws = windows(40, 1, TrendLabel::Increasing);
        ws.extend(windows(30, 1, TrendLabel::Decreasing));
        ws.extend(windows(30, 1, TrendLabel::Stationary));
        let d = assemble_dataset(ws, &spec, &TrendLabel::ALL).unwrap();
        assert_eq!((d.train.len(), d.holdout.len(), d.test.len()), (90, 10, 0));
        assert_eq!(d.train.composition.total() + d.holdout.composition.total(), 100);
    }

    #[test]
    fn filter_to_nothing() {
        let err = assemble_dataset(
            windows(10, 2, TrendLabel::Stationary),
            &SplitSpec::default(),
            &[TrendLabel::Increasing, TrendLabel::Decreasing],
        );
        assert!(matches!(err, Err(Error::EmptyDataset)));
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SplitSpec {
            seed: 7,
            ..Default::default()
        };
        let a = assemble_dataset(windows(200, 5, TrendLabel::Stationary), &spec, &TrendLabel::ALL).unwrap();
        let b = assemble_dataset(windows(200, 5, TrendLabel::Stationary), &spec, &TrendLabel::ALL).unwrap();
        assert_eq!(a, b);
        let c = assemble_dataset(
            windows(200, 5, TrendLabel::Stationary),
            &SplitSpec { seed: 8, ..spec },
            &TrendLabel::ALL,
        )
        .unwrap();
        assert_ne!(ids(&a.train), ids(&c.train));
    }

    #[test]
    fn by_recording_keeps_recordings_whole() {
        let d = assemble_dataset(windows(500, 10, TrendLabel::Stationary), &SplitSpec::default(), &TrendLabel::ALL).unwrap();
        let test_recs: BTreeSet<_> = d.test.windows.iter().map(|w| &w.recording_id).collect();
        assert_eq!(test_recs.len(), 2);
        for w in d.train.windows.iter().chain(&d.holdout.windows) {
            assert!(!test_recs.contains(&w.recording_id));
        }
        let pool = d.train.len() + d.holdout.len();
        assert!((d.holdout.len() as f64 - 0.1 * pool as f64).abs() <= 1.0);
    }

    #[test]
    fn partition_is_exact() {
        let spec = SplitSpec {
            mode: SplitMode::ByWindow,
            seed: 3,
            ..Default::default()
        };
        let all = windows(137, 3, TrendLabel::Stationary);
        let d = assemble_dataset(all.clone(), &spec, &TrendLabel::ALL).unwrap();
        let mut seen: Vec<_> = [&d.train, &d.holdout, &d.test].iter().flat_map(|s| ids(s)).collect();
        seen.sort();
        let mut want: Vec<_> = all.iter().map(|w| (w.recording_id.clone(), w.offset)).collect();
        want.sort();
        assert_eq!(seen, want);
    }

    #[test]
    fn bad_fractions() {
        let spec = SplitSpec {
            train_fraction: 0.5,
            test_fraction: 0.2,
            ..Default::default()
        };
        assert!(assemble_dataset(windows(10, 2, TrendLabel::Stationary), &spec, &TrendLabel::ALL).is_err());
        assert!(assemble_dataset(windows(10, 2, TrendLabel::Stationary), &SplitSpec::default(), &[]).is_err());
    }
}

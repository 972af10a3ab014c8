use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::signal::{TrendLabel, WindowPair};

/// Scoring category: one trend class or the union of all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Increasing,
    Decreasing,
    Stationary,
    All,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Increasing,
        Category::Decreasing,
        Category::Stationary,
        Category::All,
    ];

    pub fn contains(self, label: TrendLabel) -> bool {
        match self {
            Category::All => true,
            Category::Increasing => label == TrendLabel::Increasing,
            Category::Decreasing => label == TrendLabel::Decreasing,
            Category::Stationary => label == TrendLabel::Stationary,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Increasing => "I",
            Category::Decreasing => "D",
            Category::Stationary => "S",
            Category::All => "I-D-S",
        })
    }
}

/// Root mean squared error between equally long sequences.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("rmse", &[pred.len()], &[target.len()]));
    }
    if pred.is_empty() {
        return Err(Error::invalid("rmse of empty sequences"));
    }
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Repeats the last observed value `out_len` times.
pub fn persistence_baseline(input: &[f64], out_len: usize) -> Result<Vec<f64>> {
    let last = input
        .last()
        .ok_or_else(|| Error::invalid("persistence needs at least one input value"))?;
    Ok(vec![*last; out_len])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryScore {
    pub category: Category,
    pub rmse: f64,
    pub window_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub config_hash: String,
    /// Only categories with at least one window, in [`Category::ALL`] order.
    pub scores: Vec<CategoryScore>,
    pub wall_clock_s: f64,
}

impl EvalReport {
    pub fn get(&self, category: Category) -> Option<&CategoryScore> {
        self.scores.iter().find(|s| s.category == category)
    }

    pub fn rmse(&self, category: Category) -> Option<f64> {
        self.get(category).map(|s| s.rmse)
    }

    /// `I=…, D=…, S=…, I-D-S=…` with absent categories shown as `-`.
    pub fn summary(&self) -> String {
        Category::ALL
            .iter()
            .map(|&c| match self.get(c) {
                Some(s) => format!("{c}={:.4}", s.rmse),
                None => format!("{c}=-"),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Truth and prediction, in mmHg, for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowTrace {
    pub recording_id: String,
    pub offset: usize,
    pub label: TrendLabel,
    pub truth: Vec<f64>,
    pub pred: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub traces: Vec<WindowTrace>,
}

impl Evaluation {
    /// RMSE at each horizon step over all windows.
    pub fn per_step_rmse(&self) -> Vec<f64> {
        let len = self.traces.first().map_or(0, |t| t.truth.len());
        (0..len)
            .map(|k| {
                let sse: f64 = self.traces.iter().map(|t| (t.pred[k] - t.truth[k]).powi(2)).sum();
                (sse / self.traces.len() as f64).sqrt()
            })
            .collect()
    }
}

/// Anything that turns windows into mmHg forecasts.
pub trait Forecaster: Sync {
    fn name(&self) -> String;
    fn config_hash(&self) -> String;
    fn forecast(&self, windows: &[&WindowPair]) -> Result<Vec<Vec<f64>>>;
}

/// Last-value persistence.
#[derive(Clone, Copy, Debug)]
pub struct PersistenceBaseline {
    pub out_len: usize,
}

impl Forecaster for PersistenceBaseline {
    fn name(&self) -> String {
        "persistence".into()
    }

    fn config_hash(&self) -> String {
        crate::config_hash(&format!("persistence out_len={}", self.out_len))
    }

    fn forecast(&self, windows: &[&WindowPair]) -> Result<Vec<Vec<f64>>> {
        windows.iter().map(|w| persistence_baseline(&w.input, self.out_len)).collect()
    }
}

/// Debug predictor that returns each window's own target.
#[derive(Clone, Copy, Debug, Default)]
pub struct TargetOracle;

impl Forecaster for TargetOracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn config_hash(&self) -> String {
        crate::config_hash("oracle")
    }

    fn forecast(&self, windows: &[&WindowPair]) -> Result<Vec<Vec<f64>>> {
        Ok(windows.iter().map(|w| w.target.clone()).collect())
    }
}

/// Per-category RMSE of `forecaster` on `windows`, plus traces.
pub fn evaluate(forecaster: &dyn Forecaster, windows: &[WindowPair]) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let started = Instant::now();
    let refs: Vec<&WindowPair> = windows.iter().collect();
    let preds = forecaster.forecast(&refs)?;
    let mut traces = Vec::with_capacity(windows.len());
    for (w, pred) in windows.iter().zip(preds) {
        if pred.len() != w.target.len() {
            return Err(Error::Geometry(format!(
                "{} predicted {} steps for a {}-step target",
                forecaster.name(),
                pred.len(),
                w.target.len()
            )));
        }
        traces.push(WindowTrace {
            recording_id: w.recording_id.clone(),
            offset: w.offset,
            label: w.label,
            truth: w.target.clone(),
            pred,
        });
    }
    let scores = score(&traces);
    Ok(Evaluation {
        report: EvalReport {
            model: forecaster.name(),
            config_hash: forecaster.config_hash(),
            scores,
            wall_clock_s: started.elapsed().as_secs_f64(),
        },
        traces,
    })
}

fn score(traces: &[WindowTrace]) -> Vec<CategoryScore> {
    Category::ALL
        .iter()
        .filter_map(|&category| {
            let (mut sse, mut points, mut windows) = (0.0, 0usize, 0usize);
            for t in traces.iter().filter(|t| category.contains(t.label)) {
                sse += t.pred.iter().zip(&t.truth).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
                points += t.truth.len();
                windows += 1;
            }
            (windows > 0).then(|| CategoryScore {
                category,
                rmse: (sse / points as f64).sqrt(),
                window_count: windows,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(label: TrendLabel, input: Vec<f64>, target: Vec<f64>, offset: usize) -> WindowPair {
        WindowPair {
            input,
            target,
            input_rpm: None,
            label,
            recording_id: "r".into(),
            offset,
        }
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[82.0, 82.0], &[80.0, 80.0]).unwrap(), 2.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn persistence_definition() {
        let mut input = vec![80.0; 30];
        input[29] = 83.0;
        assert_eq!(persistence_baseline(&input, 30).unwrap(), vec![83.0; 30]);
    }

    #[test]
    fn oracle_scores_zero_and_absent_categories() {
        let ws = vec![
            window(TrendLabel::Increasing, vec![1.0], vec![2.0, 3.0], 0),
            window(TrendLabel::Stationary, vec![1.0], vec![1.0, 1.0], 1),
        ];
        let e = evaluate(&TargetOracle, &ws).unwrap();
        assert_eq!(e.report.scores.len(), 3);
        assert!(e.report.get(Category::Decreasing).is_none());
        assert!(e.report.scores.iter().all(|s| s.rmse == 0.0));
        assert_eq!(e.report.get(Category::All).unwrap().window_count, 2);
        assert_eq!(e.report.summary(), "I=0.0000, D=-, S=0.0000, I-D-S=0.0000");
    }

    #[test]
    fn persistence_scores() {
        let ws = vec![
            window(TrendLabel::Increasing, vec![0.0, 1.0], vec![2.0, 3.0], 0),
            window(TrendLabel::Decreasing, vec![5.0, 4.0], vec![4.0, 4.0], 1),
        ];
        let e = evaluate(&PersistenceBaseline { out_len: 2 }, &ws).unwrap();
        assert!((e.report.rmse(Category::Increasing).unwrap() - (2.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(e.report.rmse(Category::Decreasing).unwrap(), 0.0);
        assert!((e.report.rmse(Category::All).unwrap() - (1.25f64).sqrt()).abs() < 1e-15);
        assert_eq!(e.per_step_rmse().len(), 2);
    }
}

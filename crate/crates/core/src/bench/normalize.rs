use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::models::{Batch, FeatureSet};
use crate::signal::WindowPair;
use crate::tensor::Tensor;

/// Affine z-score map fitted on training windows only. Pressure statistics
/// cover inputs and targets; motor speed has its own pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub sd: f64,
    pub rpm_mean: f64,
    pub rpm_sd: f64,
}

fn moments(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let var = if n > 0 { m2 / n as f64 } else { 0.0 };
    (mean, var.sqrt(), n)
}

impl Normalizer {
    /// Population mean and standard deviation of the training pressures.
    /// Motor speed without variance (or absent) maps with sd 1.
    pub fn fit(windows: &[WindowPair]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (mean, sd, _) = moments(windows.iter().flat_map(|w| w.input.iter().chain(&w.target).copied()));
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let (rpm_mean, rpm_sd, count) = moments(windows.iter().flat_map(|w| w.input_rpm.iter().flatten().copied()));
        let (rpm_mean, rpm_sd) = if count > 0 && rpm_sd > 0.0 {
            (rpm_mean, rpm_sd)
        } else {
            (rpm_mean, 1.0)
        };
        Ok(Normalizer {
            mean,
            sd,
            rpm_mean,
            rpm_sd,
        })
    }

    pub fn apply(&self, mmhg: f64) -> f64 {
        (mmhg - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }

    pub fn apply_rpm(&self, rpm: f64) -> f64 {
        (rpm - self.rpm_mean) / self.rpm_sd
    }

    /// Normalized batch with targets.
    pub fn batch(&self, windows: &[&WindowPair], features: FeatureSet) -> Result<Batch> {
        let b = windows.len();
        if b == 0 {
            return Err(Error::EmptyDataset);
        }
        let (in_len, out_len) = (windows[0].input.len(), windows[0].target.len());
        let mut input = Vec::with_capacity(b * in_len);
        let mut target = Vec::with_capacity(b * out_len);
        let mut rpm = features.uses_rpm().then(|| Vec::with_capacity(b * in_len));
        for w in windows {
            if w.input.len() != in_len || w.target.len() != out_len {
                return Err(Error::Geometry(format!(
                    "window {}@{} is {}+{}, batch is {in_len}+{out_len}",
                    w.recording_id,
                    w.offset,
                    w.input.len(),
                    w.target.len()
                )));
            }
            input.extend(w.input.iter().map(|&v| self.apply(v)));
            target.extend(w.target.iter().map(|&v| self.apply(v)));
            if let Some(r) = rpm.as_mut() {
                let src = w.input_rpm.as_ref().ok_or_else(|| {
                    Error::Geometry(format!("window {}@{} has no motor speed", w.recording_id, w.offset))
                })?;
                r.extend(src.iter().map(|&v| self.apply_rpm(v)));
            }
        }
        Ok(Batch {
            input: Tensor::new([b, in_len], input)?,
            rpm: rpm.map(|r| Tensor::new([b, in_len], r)).transpose()?,
            target: Some(Tensor::new([b, out_len], target)?),
        })
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.push("norm.mean", self.mean);
        doc.push("norm.sd", self.sd);
        doc.push("norm.rpm_mean", self.rpm_mean);
        doc.push("norm.rpm_sd", self.rpm_sd);
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        Ok(Normalizer {
            mean: doc.require("norm.mean")?,
            sd: doc.require("norm.sd")?,
            rpm_mean: doc.require("norm.rpm_mean")?,
            rpm_sd: doc.require("norm.rpm_sd")?,
        })
    }
}

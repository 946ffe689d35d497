use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled, finite-valued channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_time: f64,
    pub label: String,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_time: f64, label: impl Into<String>) -> Result<Self> {
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(Error::Config(format!(
                "sample time must be positive, got {sample_time}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("sample {i} is not finite")));
        }
        Ok(Signal {
            samples,
            sample_time,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.sample_time
    }

    /// Drops the first `n` samples.
    pub fn skip(&self, n: usize) -> Signal {
        Signal {
            samples: self.samples.iter().skip(n).copied().collect(),
            sample_time: self.sample_time,
            label: self.label.clone(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            sample_time: self.sample_time,
            label: self.label.clone(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Signal {
        self.label = label.into();
        self
    }
}

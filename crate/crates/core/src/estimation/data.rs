use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::Channel;
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataRole {
    Training,
    ValidationPrbs,
    ValidationSquare,
}

impl DataRole {
    pub fn name(self) -> &'static str {
        match self {
            DataRole::Training => "training",
            DataRole::ValidationPrbs => "validation_prbs",
            DataRole::ValidationSquare => "validation_square",
        }
    }
}

/// Controller output `u` and measured rate `y` of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: Signal,
    pub y: Signal,
    pub channel: Channel,
    pub role: DataRole,
    /// Means removed by [`detrend`], `(u, y)`.
    pub removed_means: (f64, f64),
}

impl Dataset {
    pub fn new(u: Signal, y: Signal, channel: Channel, role: DataRole) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::Data(format!("u has {} samples, y has {}", u.len(), y.len())));
        }
        if u.sample_time != y.sample_time {
            return Err(Error::Data("u and y sample times differ".into()));
        }
        Ok(Dataset { u, y, channel, role, removed_means: (0.0, 0.0) })
    }

    /// Unlabelled dataset, handy for synthetic data.
    pub fn from_vecs(u: Vec<f64>, y: Vec<f64>, sample_time: f64) -> Result<Self> {
        Self::new(
            Signal::new(u, sample_time, "u")?,
            Signal::new(y, sample_time, "y")?,
            Channel::Roll,
            DataRole::Training,
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sample_time(&self) -> f64 {
        self.y.sample_time
    }

    pub fn skip(&self, n: usize) -> Dataset {
        Dataset { u: self.u.skip(n), y: self.y.skip(n), ..self.clone() }
    }
}

pub fn detrend(d: &Dataset) -> Result<Dataset> {
    if d.is_empty() {
        return Err(Error::Data("cannot detrend an empty dataset".into()));
    }
    let (mu, my) = (d.u.mean(), d.y.mean());
    Ok(Dataset {
        u: d.u.map(|v| v - mu),
        y: d.y.map(|v| v - my),
        removed_means: (d.removed_means.0 + mu, d.removed_means.1 + my),
        ..d.clone()
    })
}

/// First index at which every lag of an `(na, nb, nk)` regressor exists.
pub fn first_row(na: usize, nb: usize, nk: usize) -> usize {
    na.max(nk + nb - 1)
}

#[derive(Debug, Clone)]
pub struct Regression {
    pub phi: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Sample index of row 0.
    pub start: usize,
    pub column_names: Vec<String>,
}

/// Row `t`: `[−y(t−1) … −y(t−na), u(t−nk) … u(t−nk−nb+1)]`, target `y(t)`.
pub fn build_regressors(d: &Dataset, na: usize, nb: usize, nk: usize) -> Result<Regression> {
    if nb == 0 {
        return Err(Error::Data("nb must be at least 1".into()));
    }
    let start = first_row(na, nb, nk);
    let n = d.len();
    let params = na + nb;
    if n <= start || n - start < params {
        return Err(Error::Data(format!(
            "{n} samples give {} regression rows, fewer than the {params} parameters of ({na}, {nb}, {nk})",
            n.saturating_sub(start)
        )));
    }
    let rows = n - start;
    let (u, y) = (&d.u.samples, &d.y.samples);
    let phi = DMatrix::from_fn(rows, params, |r, c| {
        let t = start + r;
        if c < na {
            -y[t - 1 - c]
        } else {
            u[t - nk - (c - na)]
        }
    });
    let target = DVector::from_iterator(rows, y[start..].iter().copied());
    Ok(Regression { phi, y: target, start, column_names: column_names(na, nb, nk) })
}

pub(crate) fn column_names(na: usize, nb: usize, nk: usize) -> Vec<String> {
    (1..=na)
        .map(|i| format!("y(t-{i})"))
        .chain((0..nb).map(|j| format!("u(t-{})", nk + j)))
        .collect()
}

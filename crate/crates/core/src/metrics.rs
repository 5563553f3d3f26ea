//! Closed-loop performance metrics over a KPI time series.

use crate::emulator::KpiKind;
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl From<KpiKind> for Direction {
    fn from(kind: KpiKind) -> Self {
        if kind.maximizes() {
            Direction::Maximize
        } else {
            Direction::Minimize
        }
    }
}

/// One KPI's per-step values together with its target.
#[derive(Clone, Debug, PartialEq)]
pub struct KpiSeries {
    values: Vec<f64>,
    target: f64,
    direction: Direction,
}

impl KpiSeries {
    pub fn new(values: Vec<f64>, target: f64, direction: Direction) -> Result<Self> {
        if !(target > 0.0) || !target.is_finite() {
            return Err(Error::Numeric(format!("metric target must be positive, got {target}")));
        }
        if values.is_empty() {
            return Err(Error::shape("KPI series", "at least one sample", 0));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("KPI series contains {bad}")));
        }
        Ok(KpiSeries {
            values,
            target,
            direction,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Whether `x` lies on the good side of the `tolerance` band edge.
    fn within(&self, x: f64, tolerance: f64) -> bool {
        match self.direction {
            Direction::Maximize => x >= (1.0 - tolerance) * self.target,
            Direction::Minimize => x <= (1.0 + tolerance) * self.target,
        }
    }

    /// Index of the first sample inside the 10% band.
    pub fn onset(&self) -> Option<usize> {
        self.values.iter().position(|&x| self.within(x, DEFAULT_TOLERANCE))
    }
}

/// Mean relative absolute error from the onset on; `None` if the band is never reached.
pub fn iae(series: &KpiSeries) -> Option<f64> {
    let onset = series.onset()?;
    let tail = &series.values[onset..];
    let total: f64 = tail.iter().map(|x| (x - series.target).abs() / series.target).sum();
    Some(total / tail.len() as f64)
}

/// First step after which every sample stays inside the band; `None` if the last one is outside.
pub fn convergence_time(series: &KpiSeries, tolerance: f64) -> Option<usize> {
    let last_outside = series.values.iter().rposition(|&x| !series.within(x, tolerance));
    match last_outside {
        None => Some(0),
        Some(i) if i + 1 < series.values.len() => Some(i + 1),
        Some(_) => None,
    }
}

/// Peak-to-peak spread of the samples from `from` on, relative to the target.
pub fn oscillation_amplitude(series: &KpiSeries, from: usize) -> Result<f64> {
    let tail = series
        .values
        .get(from..)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::shape("oscillation window start", format!("< {}", series.values.len()), from))?;
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max - min) / series.target)
}

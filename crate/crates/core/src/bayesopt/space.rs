use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimKind {
    Continuous { lo: f64, hi: f64 },
    /// Searched uniformly in `ln` space.
    LogContinuous { lo: f64, hi: f64 },
    /// Sorted candidate values; the unit interval is split evenly over list positions.
    Discrete { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub kind: DimKind,
}

impl Dim {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: DimKind::Continuous { lo, hi } }
    }

    pub fn log_continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: DimKind::LogContinuous { lo, hi } }
    }

    pub fn discrete(name: &str, values: impl IntoIterator<Item = f64>) -> Self {
        Self { name: name.into(), kind: DimKind::Discrete { values: values.into_iter().collect() } }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DimKind::Discrete { .. })
    }

    fn validate(&self) -> Result<()> {
        let ok = match &self.kind {
            DimKind::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            DimKind::LogContinuous { lo, hi } => hi.is_finite() && *lo > 0.0 && lo < hi,
            DimKind::Discrete { values } => {
                !values.is_empty() && values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("search dimension `{}` has an empty or unsorted domain", self.name)))
        }
    }

    pub fn to_unit(&self, raw: f64) -> f64 {
        let u = match &self.kind {
            DimKind::Continuous { lo, hi } => (raw - lo) / (hi - lo),
            DimKind::LogContinuous { lo, hi } => (raw.ln() - lo.ln()) / (hi.ln() - lo.ln()),
            DimKind::Discrete { values } => {
                if values.len() == 1 {
                    return 0.5;
                }
                nearest_index(values, raw) as f64 / (values.len() - 1) as f64
            }
        };
        u.clamp(0.0, 1.0)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DimKind::Continuous { lo, hi } => (lo + u * (hi - lo)).clamp(*lo, *hi),
            DimKind::LogContinuous { lo, hi } => (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi),
            DimKind::Discrete { values } => values[unit_index(values.len(), u)],
        }
    }

    /// Unit coordinate of the raw value that `u` maps to.
    pub fn snap_unit(&self, u: f64) -> f64 {
        match &self.kind {
            DimKind::Discrete { values } if values.len() > 1 => {
                unit_index(values.len(), u) as f64 / (values.len() - 1) as f64
            }
            DimKind::Discrete { .. } => 0.5,
            _ => u.clamp(0.0, 1.0),
        }
    }

    pub(crate) fn n_values(&self) -> Option<usize> {
        match &self.kind {
            DimKind::Discrete { values } => Some(values.len()),
            _ => None,
        }
    }
}

fn unit_index(n: usize, u: f64) -> usize {
    if n <= 1 {
        0
    } else {
        ((u.clamp(0.0, 1.0) * (n - 1) as f64).round() as usize).min(n - 1)
    }
}

fn nearest_index(values: &[f64], raw: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - raw).abs() < (values[best] - raw).abs() {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        for d in &dims {
            d.validate()?;
        }
        Ok(Self { dims })
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn to_unit(&self, raw: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(raw).map(|(d, &r)| d.to_unit(r)).collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(unit).map(|(d, &u)| d.from_unit(u)).collect()
    }

    pub fn snap_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(unit).map(|(d, &u)| d.snap_unit(u)).collect()
    }

    /// Number of distinct configurations when every dimension is discrete.
    pub fn cardinality(&self) -> Option<usize> {
        self.dims.iter().try_fold(1usize, |acc, d| d.n_values().map(|n| acc.saturating_mul(n)))
    }
}

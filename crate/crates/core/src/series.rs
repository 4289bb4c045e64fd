//! Binary label and prediction series, probability series and the 2x2
//! confusion matrix shared by the quality and value-weighted scoring paths.
//!
//! Indices are 0-based throughout the API; sample `i` precedes sample `i + 1`
//! in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn parse_binary(values: impl IntoIterator<Item = u8>) -> Result<Vec<bool>> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::domain(format!(
                "binary series value at index {i} is {other}, expected 0 or 1"
            ))),
        })
        .collect()
}

macro_rules! binary_series_common {
    ($name:ident) => {
        impl $name {
            pub fn as_slice(&self) -> &[bool] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn get(&self, i: usize) -> Option<bool> {
                self.0.get(i).copied()
            }

            /// Number of ones.
            pub fn positives(&self) -> usize {
                self.0.iter().filter(|&&v| v).count()
            }

            pub fn to_u8(&self) -> Vec<u8> {
                self.0.iter().map(|&v| u8::from(v)).collect()
            }

            /// Exchanges 0 and 1 in every position.
            pub fn complement(&self) -> Self {
                Self(self.0.iter().map(|v| !v).collect())
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = bool;

            fn index(&self, i: usize) -> &bool {
                &self.0[i]
            }
        }
    };
}

/// Observed binary outcomes, one per time step. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LabelSeries(Vec<bool>);

impl LabelSeries {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        Self::from_bools(parse_binary(values)?)
    }

    pub fn from_bools(values: Vec<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("label series must not be empty"));
        }
        Ok(Self(values))
    }

    /// Labels at the given positions, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::from_bools(idx.iter().map(|&i| self.0[i]).collect())
    }
}

binary_series_common!(LabelSeries);

impl TryFrom<Vec<u8>> for LabelSeries {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelSeries> for Vec<u8> {
    fn from(s: LabelSeries) -> Self {
        s.to_u8()
    }
}

/// Binary forecasts aligned index-by-index with a [`LabelSeries`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct PredictionSeries(Vec<bool>);

impl PredictionSeries {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        Ok(Self(parse_binary(values)?))
    }

    pub fn from_bools(values: Vec<bool>) -> Self {
        Self(values)
    }
}

binary_series_common!(PredictionSeries);

impl TryFrom<Vec<u8>> for PredictionSeries {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PredictionSeries> for Vec<u8> {
    fn from(s: PredictionSeries) -> Self {
        s.to_u8()
    }
}

impl From<&LabelSeries> for PredictionSeries {
    fn from(y: &LabelSeries) -> Self {
        Self(y.0.clone())
    }
}

/// Model outputs in `[0, 1]`, one per sample. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilitySeries(Vec<f64>);

impl ProbabilitySeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("probability series must not be empty"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::domain(format!(
                "probability at index {i} is {v}, outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ProbabilitySeries {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilitySeries> for Vec<f64> {
    fn from(s: ProbabilitySeries) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMode {
    Quality,
    ValueWeighted,
}

impl std::fmt::Display for MatrixMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatrixMode::Quality => "quality",
            MatrixMode::ValueWeighted => "value_weighted",
        })
    }
}

/// A 2x2 contingency table.
///
/// Entries are reals in both modes so that the same score formulas apply to
/// the count matrix and to the value-weighted one. In [`MatrixMode::Quality`]
/// every entry is an integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    tp: f64,
    fp: f64,
    #[serde(rename = "fn")]
    fn_: f64,
    tn: f64,
    mode: MatrixMode,
}

impl ConfusionMatrix {
    pub fn new(tp: f64, fp: f64, fn_: f64, tn: f64, mode: MatrixMode) -> Result<Self> {
        for (name, v) in [("tp", tp), ("fp", fp), ("fn", fn_), ("tn", tn)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!(
                    "confusion matrix entry {name} = {v} must be finite and nonnegative"
                )));
            }
            if mode == MatrixMode::Quality && v.fract() != 0.0 {
                return Err(Error::domain(format!(
                    "quality-mode entry {name} = {v} is not an integer"
                )));
            }
        }
        Ok(Self {
            tp,
            fp,
            fn_,
            tn,
            mode,
        })
    }

    /// Count matrix from integer tallies.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self {
            tp: tp as f64,
            fp: fp as f64,
            fn_: fn_ as f64,
            tn: tn as f64,
            mode: MatrixMode::Quality,
        }
    }

    pub fn value_weighted(tp: f64, fp: f64, fn_: f64, tn: f64) -> Result<Self> {
        Self::new(tp, fp, fn_, tn, MatrixMode::ValueWeighted)
    }

    pub fn tp(&self) -> f64 {
        self.tp
    }

    pub fn fp(&self) -> f64 {
        self.fp
    }

    pub fn fn_(&self) -> f64 {
        self.fn_
    }

    pub fn tn(&self) -> f64 {
        self.tn
    }

    pub fn mode(&self) -> MatrixMode {
        self.mode
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The matrix obtained by exchanging the roles of the two classes.
    pub fn swap_classes(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
            mode: self.mode,
        }
    }

    /// Every entry multiplied by `c`; the result is tagged value-weighted
    /// unless the scaled entries stay integral.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mode = match self.mode {
            MatrixMode::Quality if (c.fract() == 0.0) => MatrixMode::Quality,
            _ => MatrixMode::ValueWeighted,
        };
        Self::new(self.tp * c, self.fp * c, self.fn_ * c, self.tn * c, mode)
    }
}

/// Count matrix of `p` against `y`.
pub fn confusion_matrix(y: &LabelSeries, p: &PredictionSeries) -> Result<ConfusionMatrix> {
    Error::check_aligned("confusion matrix", y.len(), p.len())?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&yi, &pi) in y.as_slice().iter().zip(p.as_slice()) {
        match (yi, pi) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ConfusionMatrix::from_counts(tp, fp, fn_, tn))
}

/// Binarizes `probs`: position `i` is 1 iff `probs[i] > tau` (strictly).
pub fn apply_threshold(probs: &ProbabilitySeries, tau: f64) -> Result<PredictionSeries> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::domain(format!("threshold {tau} outside [0, 1]")));
    }
    Ok(PredictionSeries(
        probs.as_slice().iter().map(|&v| v > tau).collect(),
    ))
}

//! Value weights for false alarms and misses, and the value-weighted
//! confusion matrix.
//!
//! A false positive at `i` is weighed by looking at the *labels* around `i`:
//!
//! * no event anywhere in `i-K ..= i+K`: weight 2 (an isolated false alarm);
//! * an event in the window, the nearest one after `i` at distance `k`:
//!   weight `1 - 1/(k+1)`, so an alarm one step early costs 1/2;
//! * events in the window but none after `i`: weight 1.
//!
//! A false negative at `i` mirrors this on the *predictions*: no alarm in the
//! window gives 2, the nearest alarm before `i` at distance `k` gives
//! `1 - 1/(k+1)`, alarms only after `i` give 1.
//!
//! Window positions outside the series are treated as absent.
//!
//! Weights fall into a finite set of classes (see [`WeightClass`]), so weighted
//! entries are accumulated as integer tallies per class and only converted to
//! a real number at the end. The result is independent of summation order,
//! which lets incremental and direct computations agree bit for bit.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{confusion_matrix, ConfusionMatrix, LabelSeries, PredictionSeries};

/// Half-width `K` of the window `i-K ..= i+K` used by the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct WindowConfig {
    k: usize,
}

impl WindowConfig {
    pub const DEFAULT_K: usize = 3;

    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("window half-size K must be at least 1"));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            k: Self::DEFAULT_K,
        }
    }
}

impl TryFrom<usize> for WindowConfig {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        Self::new(k)
    }
}

impl From<WindowConfig> for usize {
    fn from(w: WindowConfig) -> usize {
        w.k
    }
}

/// The possible values of a single error weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightClass {
    /// The nearest relevant counterpart is `k` steps away in the favourable
    /// direction; weight `1 - 1/(k+1)`.
    Near(usize),
    /// A counterpart exists in the window, but only in the other direction.
    Neutral,
    /// Nothing in the window.
    Isolated,
}

impl WeightClass {
    pub fn weight(self) -> f64 {
        match self {
            WeightClass::Near(k) => 1.0 - 1.0 / (k as f64 + 1.0),
            WeightClass::Neutral => 1.0,
            WeightClass::Isolated => 2.0,
        }
    }
}

fn window_bounds(i: usize, n: usize, k: usize) -> (usize, usize) {
    (i.saturating_sub(k), (i + k).min(n - 1))
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::domain(format!(
            "index {i} out of range for series of length {n}"
        )));
    }
    Ok(())
}

pub(crate) fn psi_class(y: &[bool], i: usize, k: usize) -> WeightClass {
    let (lo, hi) = window_bounds(i, y.len(), k);
    if !y[lo..=hi].iter().any(|&v| v) {
        return WeightClass::Isolated;
    }
    (1..=k)
        .take_while(|d| i + d < y.len())
        .find(|&d| y[i + d])
        .map_or(WeightClass::Neutral, WeightClass::Near)
}

pub(crate) fn phi_class(p: &[bool], i: usize, k: usize) -> WeightClass {
    let (lo, hi) = window_bounds(i, p.len(), k);
    if !p[lo..=hi].iter().any(|&v| v) {
        return WeightClass::Isolated;
    }
    (1..=k.min(i))
        .find(|&d| p[i - d])
        .map_or(WeightClass::Neutral, WeightClass::Near)
}

/// Weight of a false alarm at index `i`, read from the labels around it.
pub fn psi(y: &LabelSeries, i: usize, cfg: WindowConfig) -> Result<f64> {
    check_index(i, y.len())?;
    Ok(psi_class(y.as_slice(), i, cfg.k).weight())
}

/// Weight of a miss at index `i`, read from the predictions around it.
pub fn phi(p: &PredictionSeries, i: usize, cfg: WindowConfig) -> Result<f64> {
    check_index(i, p.len())?;
    Ok(phi_class(p.as_slice(), i, cfg.k).weight())
}

/// Integer tally of weight classes; converts to a weighted sum on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTally {
    near: Vec<u64>,
    neutral: u64,
    isolated: u64,
}

impl WeightTally {
    pub fn new(k: usize) -> Self {
        Self {
            near: vec![0; k + 1],
            neutral: 0,
            isolated: 0,
        }
    }

    pub fn add(&mut self, class: WeightClass) {
        match class {
            WeightClass::Near(d) => self.near[d] += 1,
            WeightClass::Neutral => self.neutral += 1,
            WeightClass::Isolated => self.isolated += 1,
        }
    }

    pub fn remove(&mut self, class: WeightClass) {
        let slot = match class {
            WeightClass::Near(d) => &mut self.near[d],
            WeightClass::Neutral => &mut self.neutral,
            WeightClass::Isolated => &mut self.isolated,
        };
        debug_assert!(*slot > 0, "removing a weight that was never added");
        *slot -= 1;
    }

    pub fn count(&self) -> u64 {
        self.near.iter().sum::<u64>() + self.neutral + self.isolated
    }

    /// Weighted sum, accumulated in a fixed class order.
    pub fn total(&self) -> f64 {
        let mut sum = 0.0;
        for (d, &c) in self.near.iter().enumerate().skip(1) {
            sum += c as f64 * WeightClass::Near(d).weight();
        }
        sum += self.neutral as f64;
        sum += 2.0 * self.isolated as f64;
        sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    FP,
    FN,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::FP => "FP",
            ErrorKind::FN => "FN",
        })
    }
}

/// Per-index weights behind a value-weighted matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub fp_weights: Vec<(usize, f64)>,
    pub fn_weights: Vec<(usize, f64)>,
}

impl WeightReport {
    /// All entries ordered by index.
    pub fn entries(&self) -> Vec<(usize, ErrorKind, f64)> {
        let mut out: Vec<_> = self
            .fp_weights
            .iter()
            .map(|&(i, w)| (i, ErrorKind::FP, w))
            .chain(self.fn_weights.iter().map(|&(i, w)| (i, ErrorKind::FN, w)))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// CSV with columns `index,kind,weight`; indices are 0-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "kind", "weight"])?;
        for (i, kind, weight) in self.entries() {
            w.write_record([i.to_string(), kind.to_string(), weight.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weight tallies of the false positives and false negatives of `p`.
pub(crate) fn error_tallies(y: &[bool], p: &[bool], k: usize) -> (WeightTally, WeightTally) {
    let mut fp = WeightTally::new(k);
    let mut fn_ = WeightTally::new(k);
    for i in 0..y.len() {
        match (y[i], p[i]) {
            (false, true) => fp.add(psi_class(y, i, k)),
            (true, false) => fn_.add(phi_class(p, i, k)),
            _ => {}
        }
    }
    (fp, fn_)
}

pub(crate) fn matrix_from_tallies(
    tp: u64,
    tn: u64,
    fp: &WeightTally,
    fn_: &WeightTally,
) -> ConfusionMatrix {
    ConfusionMatrix::value_weighted(tp as f64, fp.total(), fn_.total(), tn as f64)
        .expect("tallies produce finite nonnegative entries")
}

/// Value-weighted matrix of `p` against `y`, without the per-index report.
pub fn weighted_matrix(
    y: &LabelSeries,
    p: &PredictionSeries,
    cfg: WindowConfig,
) -> Result<ConfusionMatrix> {
    let quality = confusion_matrix(y, p)?;
    let (fp, fn_) = error_tallies(y.as_slice(), p.as_slice(), cfg.k);
    Ok(matrix_from_tallies(
        quality.tp() as u64,
        quality.tn() as u64,
        &fp,
        &fn_,
    ))
}

/// Value-weighted matrix of `p` against `y` together with every weight that
/// went into its off-diagonal entries.
pub fn weighted_confusion_matrix(
    y: &LabelSeries,
    p: &PredictionSeries,
    cfg: WindowConfig,
) -> Result<(ConfusionMatrix, WeightReport)> {
    let matrix = weighted_matrix(y, p, cfg)?;
    let (ys, ps) = (y.as_slice(), p.as_slice());
    let mut report = WeightReport::default();
    for i in 0..ys.len() {
        match (ys[i], ps[i]) {
            (false, true) => report
                .fp_weights
                .push((i, psi_class(ys, i, cfg.k).weight())),
            (true, false) => report
                .fn_weights
                .push((i, phi_class(ps, i, cfg.k).weight())),
            _ => {}
        }
    }
    Ok((matrix, report))
}

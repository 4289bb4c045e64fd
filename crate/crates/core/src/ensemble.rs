//! Epoch-selection ensemble.
//!
//! The outputs of a model after each training epoch are turned into binary
//! forecasts with a per-epoch threshold optimized on the training split
//! ([`calibrate_epochs`]). Epochs whose score on the validation split, with
//! that threshold frozen, exceeds a quality level form the ensemble
//! ([`select_epochs`]). The ensemble forecast for a sample is the median of
//! the members' binary votes, with an even split resolved to 1 ([`predict`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{score_report, Objective, ScoreReport};
use crate::series::{apply_threshold, LabelSeries, PredictionSeries, ProbabilitySeries};
use crate::thresholding::{optimize_threshold, ThresholdSearch};
use crate::weights::WindowConfig;

/// A model's probabilistic outputs after one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub train_probs: ProbabilitySeries,
    pub valid_probs: ProbabilitySeries,
    pub tau_star: Option<f64>,
    pub train_score: Option<f64>,
    pub valid_score: Option<f64>,
}

impl EpochSnapshot {
    pub fn new(epoch: usize, train_probs: ProbabilitySeries, valid_probs: ProbabilitySeries) -> Self {
        Self {
            epoch,
            train_probs,
            valid_probs,
            tau_star: None,
            train_score: None,
            valid_score: None,
        }
    }
}

/// Cutoff on the validation score for an epoch to join the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLevel {
    /// Score must exceed `alpha`.
    Absolute(f64),
    /// Score must exceed `rate` times the best validation score.
    RelativeToMax(f64),
}

impl QualityLevel {
    pub fn absolute(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::domain(format!("quality level {alpha} is not finite")));
        }
        Ok(QualityLevel::Absolute(alpha))
    }

    pub fn relative(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::domain(format!(
                "relative quality rate {rate} must lie in (0, 1]"
            )));
        }
        Ok(QualityLevel::RelativeToMax(rate))
    }

    fn cutoff(&self, best: f64) -> f64 {
        match *self {
            QualityLevel::Absolute(alpha) => alpha,
            QualityLevel::RelativeToMax(rate) => rate * best,
        }
    }
}

/// What to do when no epoch passes the quality level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    #[default]
    Fail,
    /// Keep the single epoch with the best validation score.
    BestEpoch,
}

fn check_unique_epochs(snapshots: &[EpochSnapshot]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in snapshots {
        if !seen.insert(s.epoch) {
            return Err(Error::domain(format!("duplicate epoch index {}", s.epoch)));
        }
    }
    Ok(())
}

/// Fills in `tau_star` and `train_score` for every snapshot. Snapshots whose
/// score is undefined at every candidate threshold are left without a
/// threshold and can never be selected.
pub fn calibrate_epochs(
    snapshots: &[EpochSnapshot],
    y_train: &LabelSeries,
    search: &ThresholdSearch,
) -> Result<Vec<EpochSnapshot>> {
    if snapshots.is_empty() {
        return Err(Error::domain("no epoch snapshots to calibrate"));
    }
    check_unique_epochs(snapshots)?;
    snapshots
        .iter()
        .map(|s| {
            let mut s = s.clone();
            match optimize_threshold(&s.train_probs, y_train, search) {
                Ok(r) => {
                    s.tau_star = Some(r.tau_star);
                    s.train_score = Some(r.best_score);
                }
                Err(Error::NoFeasibleThreshold) => {
                    log::warn!("epoch {}: no threshold gives a defined score", s.epoch);
                    s.tau_star = None;
                    s.train_score = None;
                }
                Err(e) => return Err(e),
            }
            Ok(s)
        })
        .collect()
}

/// Outcome of epoch selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected epoch indices, ascending.
    pub selected: Vec<usize>,
    /// Validation score of every epoch, `None` when undefined or uncalibrated.
    pub valid_scores: Vec<(usize, Option<f64>)>,
    pub cutoff: Option<f64>,
    pub fallback_used: bool,
}

impl Selection {
    /// Copies the validation scores into the matching snapshots.
    pub fn annotate(&self, snapshots: &mut [EpochSnapshot]) {
        let by_epoch: BTreeMap<usize, Option<f64>> = self.valid_scores.iter().copied().collect();
        for s in snapshots {
            s.valid_score = by_epoch.get(&s.epoch).copied().flatten();
        }
    }
}

/// Epochs whose validation score, using the training threshold, is strictly
/// above the quality level.
pub fn select_epochs(
    snapshots: &[EpochSnapshot],
    y_valid: &LabelSeries,
    objective: &Objective,
    level: QualityLevel,
) -> Result<Selection> {
    select_epochs_with_policy(snapshots, y_valid, objective, level, EmptyPolicy::Fail)
}

pub fn select_epochs_with_policy(
    snapshots: &[EpochSnapshot],
    y_valid: &LabelSeries,
    objective: &Objective,
    level: QualityLevel,
    policy: EmptyPolicy,
) -> Result<Selection> {
    if snapshots.is_empty() {
        return Err(Error::domain("no epoch snapshots to select from"));
    }
    check_unique_epochs(snapshots)?;
    let mut valid_scores = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let score = match s.tau_star {
            Some(tau) => {
                Error::check_aligned("validation forecasts", s.valid_probs.len(), y_valid.len())?;
                objective
                    .evaluate(y_valid, &apply_threshold(&s.valid_probs, tau)?)
                    .ok()
            }
            None => None,
        };
        valid_scores.push((s.epoch, score));
    }

    // first epoch wins ties
    let best = valid_scores
        .iter()
        .filter_map(|&(e, s)| s.map(|s| (e, s)))
        .fold(None, |acc: Option<(usize, f64)>, (e, s)| match acc {
            Some((_, b)) if b >= s => acc,
            _ => Some((e, s)),
        });

    let cutoff = best.map(|(_, b)| level.cutoff(b));
    let mut selected: Vec<usize> = match cutoff {
        Some(c) => valid_scores
            .iter()
            .filter(|(_, s)| s.is_some_and(|s| s > c))
            .map(|(e, _)| *e)
            .collect(),
        None => Vec::new(),
    };
    selected.sort_unstable();

    let mut fallback_used = false;
    if selected.is_empty() {
        match (policy, best) {
            (EmptyPolicy::BestEpoch, Some((epoch, _))) => {
                log::warn!("no epoch passes the quality level; falling back to epoch {epoch}");
                selected.push(epoch);
                fallback_used = true;
            }
            _ => return Err(Error::EmptyEnsemble { best }),
        }
    }
    Ok(Selection {
        selected,
        valid_scores,
        cutoff,
        fallback_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub epoch: usize,
    pub tau_star: f64,
}

/// A fixed set of epochs with their thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleClassifier {
    members: Vec<EnsembleMember>,
    pub objective: Objective,
}

impl EnsembleClassifier {
    pub fn new(members: Vec<EnsembleMember>, objective: Objective) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyEnsemble { best: None });
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if !seen.insert(m.epoch) {
                return Err(Error::domain(format!("duplicate ensemble epoch {}", m.epoch)));
            }
            if !(0.0..=1.0).contains(&m.tau_star) {
                return Err(Error::domain(format!(
                    "threshold {} of epoch {} outside [0, 1]",
                    m.tau_star, m.epoch
                )));
            }
        }
        Ok(Self { members, objective })
    }

    /// Members for the selected epochs of `snapshots`.
    pub fn from_selection(
        snapshots: &[EpochSnapshot],
        selection: &Selection,
        objective: Objective,
    ) -> Result<Self> {
        let members = selection
            .selected
            .iter()
            .map(|&epoch| {
                let s = snapshots
                    .iter()
                    .find(|s| s.epoch == epoch)
                    .ok_or_else(|| Error::Missing(format!("snapshot for epoch {epoch}")))?;
                let tau_star = s
                    .tau_star
                    .ok_or_else(|| Error::domain(format!("epoch {epoch} is not calibrated")))?;
                Ok(EnsembleMember { epoch, tau_star })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, objective)
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn epochs(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.epoch).collect()
    }
}

/// Median of binary votes; an even split gives 1.
pub fn median_vote(votes: impl IntoIterator<Item = bool>) -> bool {
    let (mut ones, mut zeros) = (0usize, 0usize);
    for v in votes {
        if v {
            ones += 1;
        } else {
            zeros += 1;
        }
    }
    ones >= zeros
}

/// Ensemble forecast on new samples, given each member epoch's outputs on
/// those samples.
pub fn predict(
    clf: &EnsembleClassifier,
    probs_per_epoch: &BTreeMap<usize, ProbabilitySeries>,
) -> Result<PredictionSeries> {
    let mut votes = Vec::with_capacity(clf.members.len());
    for m in &clf.members {
        let probs = probs_per_epoch
            .get(&m.epoch)
            .ok_or_else(|| Error::Missing(format!("forecasts for epoch {}", m.epoch)))?;
        votes.push(apply_threshold(probs, m.tau_star)?);
    }
    let n = votes[0].len();
    for v in &votes[1..] {
        Error::check_aligned("ensemble member forecasts", n, v.len())?;
    }
    Ok(PredictionSeries::from_bools(
        (0..n).map(|i| median_vote(votes.iter().map(|v| v[i]))).collect(),
    ))
}

/// Both matrices and all eight scores of an ensemble forecast.
pub fn evaluate(
    predictions: &PredictionSeries,
    y_test: &LabelSeries,
    window: WindowConfig,
) -> Result<ScoreReport> {
    score_report(y_test, predictions, window)
}

/// Calibrate, select and assemble in one call.
pub fn fit(
    snapshots: &[EpochSnapshot],
    y_train: &LabelSeries,
    y_valid: &LabelSeries,
    search: &ThresholdSearch,
    level: QualityLevel,
    policy: EmptyPolicy,
) -> Result<(EnsembleClassifier, Vec<EpochSnapshot>, Selection)> {
    let mut calibrated = calibrate_epochs(snapshots, y_train, search)?;
    let selection =
        select_epochs_with_policy(&calibrated, y_valid, &search.objective, level, policy)?;
    selection.annotate(&mut calibrated);
    let clf = EnsembleClassifier::from_selection(&calibrated, &selection, search.objective)?;
    Ok((clf, calibrated, selection))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::domain(format!("unknown split '{other}'"))),
        }
    }
}

/// Per-epoch forecasts on one split.
///
/// Text form: comma-separated, one row per epoch. The header's first cell
/// names the split and the remaining cells are sample indices `0..m`; each
/// row starts with the epoch index followed by `m` values in `[0, 1]`.
///
/// ```text
/// train,0,1,2
/// 1,0.12,0.80,0.33
/// 2,0.10,0.85,0.31
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub split: Split,
    pub rows: Vec<(usize, ProbabilitySeries)>,
}

impl SnapshotMatrix {
    pub fn new(split: Split, rows: Vec<(usize, ProbabilitySeries)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain(format!("{split} snapshot matrix has no epochs")));
        }
        let m = rows[0].1.len();
        let mut seen = BTreeSet::new();
        for (epoch, probs) in &rows {
            Error::check_aligned("snapshot matrix row", m, probs.len())?;
            if !seen.insert(*epoch) {
                return Err(Error::domain(format!("duplicate epoch index {epoch}")));
            }
        }
        Ok(Self { split, rows })
    }

    pub fn samples(&self) -> usize {
        self.rows[0].1.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.split.to_string()];
        header.extend((0..self.samples()).map(|i| i.to_string()));
        w.write_record(&header)?;
        for (epoch, probs) in &self.rows {
            let mut rec = vec![epoch.to_string()];
            rec.extend(probs.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let split: Split = header
            .get(0)
            .ok_or_else(|| Error::domain("snapshot file has an empty header"))?
            .parse()?;
        let m = header.len() - 1;
        let mut rows = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let parse_err = |column: String, message: String| Error::Parse {
                row: line,
                column,
                message,
            };
            if rec.len() != m + 1 {
                return Err(parse_err(
                    "*".into(),
                    format!("expected {} fields, found {}", m + 1, rec.len()),
                ));
            }
            let epoch: usize = rec[0]
                .parse()
                .map_err(|e| parse_err(header[0].to_string(), format!("epoch index: {e}")))?;
            let values = (1..=m)
                .map(|c| {
                    rec[c]
                        .parse::<f64>()
                        .map_err(|e| parse_err(header[c].to_string(), e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            let probs = ProbabilitySeries::new(values)
                .map_err(|e| parse_err("*".into(), e.to_string()))?;
            rows.push((epoch, probs));
        }
        Self::new(split, rows)
    }

    pub fn by_epoch(&self) -> BTreeMap<usize, ProbabilitySeries> {
        self.rows.iter().cloned().collect()
    }
}

/// Pairs train and validation matrices epoch by epoch.
pub fn assemble_snapshots(
    train: &SnapshotMatrix,
    valid: &SnapshotMatrix,
) -> Result<Vec<EpochSnapshot>> {
    let valid_by_epoch = valid.by_epoch();
    train
        .rows
        .iter()
        .map(|(epoch, tp)| {
            let vp = valid_by_epoch
                .get(epoch)
                .ok_or_else(|| Error::Missing(format!("validation forecasts for epoch {epoch}")))?;
            Ok(EpochSnapshot::new(*epoch, tp.clone(), vp.clone()))
        })
        .collect()
}

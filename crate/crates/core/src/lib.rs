//! Value-weighted forecast verification for binary time series.
//!
//! A quality-based confusion matrix counts every false alarm and every miss
//! the same. The value-weighted matrix built in [`weights`] instead weighs
//! each error by how close it lies to an actual event (for false alarms) or
//! to an issued alarm (for misses), so that an alarm sounded just before an
//! event costs less than one sounded in the middle of a quiet period. The
//! usual skill scores in [`scores`] apply unchanged to either matrix.
//!
//! On top of the scoring layer sits an epoch-selection ensemble
//! ([`ensemble`]): the probabilistic outputs of a network after every training
//! epoch are binarized with a per-epoch optimal threshold ([`thresholding`]),
//! filtered by their validation score and combined through a median vote.
//! [`model`] provides a small multi-layer perceptron that produces these
//! per-epoch snapshots, [`data`] handles CSV time series and labeling, and
//! [`backtest`] simulates the down-movement trading strategy driven by the
//! resulting predictions.

pub mod backtest;
pub mod data;
pub mod ensemble;
mod error;
pub mod model;
pub mod scores;
pub mod series;
pub mod synthetic;
pub mod thresholding;
pub mod weights;

pub use error::{Error, Result};
pub use scores::{Objective, ScoreMode, SkillScoreKind};
pub use series::{
    apply_threshold, confusion_matrix, ConfusionMatrix, LabelSeries, MatrixMode, PredictionSeries,
    ProbabilitySeries,
};
pub use weights::{weighted_confusion_matrix, WindowConfig};

use std::path::PathBuf;

use crate::scores::SkillScoreKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: length mismatch ({left} vs {right})")]
    Alignment {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{kind} is undefined: {reason}")]
    UndefinedScore {
        kind: SkillScoreKind,
        reason: &'static str,
    },

    #[error("no candidate threshold yields a defined score")]
    NoFeasibleThreshold,

    #[error("{}", empty_ensemble_message(*best))]
    EmptyEnsemble { best: Option<(usize, f64)> },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("timestamps not strictly increasing at row {row}")]
    Ordering { row: usize },

    #[error("split produced an empty {segment} segment")]
    Split { segment: &'static str },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn empty_ensemble_message(best: Option<(usize, f64)>) -> String {
    match best {
        Some((epoch, score)) => format!(
            "no epoch passes the quality level; best validation score {score} at epoch {epoch}"
        ),
        None => "no epoch passes the quality level; no epoch has a defined validation score"
            .to_string(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn check_aligned(context: &'static str, left: usize, right: usize) -> Result<()> {
        if left == right {
            Ok(())
        } else {
            Err(Error::Alignment {
                context,
                left,
                right,
            })
        }
    }
}

//! Skill scores on a [`ConfusionMatrix`].
//!
//! The same four formulas serve both modes: applied to a count matrix they
//! give ACC/TSS/HSS/CSI, applied to a value-weighted matrix they give
//! wACC/wTSS/wHSS/wCSI. A score whose denominator vanishes is reported as
//! [`Error::UndefinedScore`] instead of being coerced to a number.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{confusion_matrix, ConfusionMatrix, LabelSeries, MatrixMode, PredictionSeries};
use crate::weights::{weighted_matrix, WindowConfig};

pub use crate::series::MatrixMode as ScoreMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SkillScoreKind {
    Acc,
    Tss,
    Hss,
    Csi,
}

impl SkillScoreKind {
    pub const ALL: [SkillScoreKind; 4] = [
        SkillScoreKind::Acc,
        SkillScoreKind::Tss,
        SkillScoreKind::Hss,
        SkillScoreKind::Csi,
    ];
}

impl fmt::Display for SkillScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkillScoreKind::Acc => "ACC",
            SkillScoreKind::Tss => "TSS",
            SkillScoreKind::Hss => "HSS",
            SkillScoreKind::Csi => "CSI",
        })
    }
}

fn undefined(kind: SkillScoreKind, reason: &'static str) -> Error {
    Error::UndefinedScore { kind, reason }
}

/// `(tp + tn) / total`.
pub fn acc(m: &ConfusionMatrix) -> Result<f64> {
    let total = m.total();
    if total <= 0.0 {
        return Err(undefined(SkillScoreKind::Acc, "matrix is empty"));
    }
    Ok((m.tp() + m.tn()) / total)
}

/// True positive rate minus false alarm rate.
pub fn tss(m: &ConfusionMatrix) -> Result<f64> {
    let positives = m.tp() + m.fn_();
    let negatives = m.fp() + m.tn();
    if positives <= 0.0 {
        return Err(undefined(SkillScoreKind::Tss, "no observed events"));
    }
    if negatives <= 0.0 {
        return Err(undefined(SkillScoreKind::Tss, "no observed non-events"));
    }
    Ok(m.tp() / positives - m.fp() / negatives)
}

/// Heidke skill score: improvement over a random forecast.
pub fn hss(m: &ConfusionMatrix) -> Result<f64> {
    let (tp, fp, fn_, tn) = (m.tp(), m.fp(), m.fn_(), m.tn());
    let t1 = (tp + fn_) * (fn_ + tn);
    let t2 = (tp + fp) * (fp + tn);
    let denom = t1 + t2;
    if denom <= 0.0 {
        return Err(undefined(SkillScoreKind::Hss, "zero denominator"));
    }
    Ok(2.0 * (tp * tn - fn_ * fp) / denom)
}

/// Critical success index: hits over hits, misses and false alarms.
pub fn csi(m: &ConfusionMatrix) -> Result<f64> {
    let denom = m.tp() + m.fp() + m.fn_();
    if denom <= 0.0 {
        return Err(undefined(SkillScoreKind::Csi, "no events and no alarms"));
    }
    Ok(m.tp() / denom)
}

pub fn score(kind: SkillScoreKind, m: &ConfusionMatrix) -> Result<f64> {
    match kind {
        SkillScoreKind::Acc => acc(m),
        SkillScoreKind::Tss => tss(m),
        SkillScoreKind::Hss => hss(m),
        SkillScoreKind::Csi => csi(m),
    }
}

/// A score kind together with the matrix it is computed on.
///
/// Parses from `acc|tss|hss|csi` for the count matrix and `wacc|wtss|whss|wcsi`
/// for the value-weighted one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: SkillScoreKind,
    pub mode: MatrixMode,
    pub window: WindowConfig,
}

impl Objective {
    pub fn quality(kind: SkillScoreKind) -> Self {
        Self {
            kind,
            mode: MatrixMode::Quality,
            window: WindowConfig::default(),
        }
    }

    pub fn value_weighted(kind: SkillScoreKind, window: WindowConfig) -> Self {
        Self {
            kind,
            mode: MatrixMode::ValueWeighted,
            window,
        }
    }

    pub fn with_window(mut self, window: WindowConfig) -> Self {
        self.window = window;
        self
    }

    pub fn matrix(&self, y: &LabelSeries, p: &PredictionSeries) -> Result<ConfusionMatrix> {
        match self.mode {
            MatrixMode::Quality => confusion_matrix(y, p),
            MatrixMode::ValueWeighted => weighted_matrix(y, p, self.window),
        }
    }

    pub fn evaluate(&self, y: &LabelSeries, p: &PredictionSeries) -> Result<f64> {
        score(self.kind, &self.matrix(y, p)?)
    }

    /// Short name, e.g. `wtss`.
    pub fn name(&self) -> String {
        let prefix = match self.mode {
            MatrixMode::Quality => "",
            MatrixMode::ValueWeighted => "w",
        };
        format!("{prefix}{}", self.kind.to_string().to_lowercase())
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (mode, rest) = match lower.strip_prefix('w') {
            Some(rest) => (MatrixMode::ValueWeighted, rest),
            None => (MatrixMode::Quality, lower.as_str()),
        };
        let kind = match rest {
            "acc" => SkillScoreKind::Acc,
            "tss" => SkillScoreKind::Tss,
            "hss" => SkillScoreKind::Hss,
            "csi" => SkillScoreKind::Csi,
            _ => {
                return Err(Error::domain(format!(
                    "unknown score '{s}', expected one of tss|wtss|hss|whss|csi|wcsi|acc|wacc"
                )))
            }
        };
        Ok(Self {
            kind,
            mode,
            window: WindowConfig::default(),
        })
    }
}

/// One score in a report; `value` is absent when the score is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub kind: SkillScoreKind,
    pub mode: MatrixMode,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Quality and value-weighted matrices of one prediction with all eight scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub window: WindowConfig,
    pub quality: ConfusionMatrix,
    pub weighted: ConfusionMatrix,
    pub scores: Vec<ScoreEntry>,
}

impl ScoreReport {
    pub fn from_matrices(
        n: usize,
        window: WindowConfig,
        quality: ConfusionMatrix,
        weighted: ConfusionMatrix,
    ) -> Self {
        let mut scores = Vec::with_capacity(8);
        for (mode, m) in [
            (MatrixMode::Quality, &quality),
            (MatrixMode::ValueWeighted, &weighted),
        ] {
            for kind in SkillScoreKind::ALL {
                let (value, error) = match score(kind, m) {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                scores.push(ScoreEntry {
                    kind,
                    mode,
                    value,
                    error,
                });
            }
        }
        Self {
            n,
            window,
            quality,
            weighted,
            scores,
        }
    }

    pub fn get(&self, kind: SkillScoreKind, mode: MatrixMode) -> Option<f64> {
        self.scores
            .iter()
            .find(|e| e.kind == kind && e.mode == mode)
            .and_then(|e| e.value)
    }

    /// CSV with columns `score,mode,value,tp,fp,fn,tn`; undefined values are
    /// left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["score", "mode", "value", "tp", "fp", "fn", "tn"])?;
        for e in &self.scores {
            let m = match e.mode {
                MatrixMode::Quality => &self.quality,
                MatrixMode::ValueWeighted => &self.weighted,
            };
            let name = match e.mode {
                MatrixMode::Quality => e.kind.to_string(),
                MatrixMode::ValueWeighted => format!("w{}", e.kind),
            };
            w.write_record([
                name,
                e.mode.to_string(),
                e.value.map(|v| v.to_string()).unwrap_or_default(),
                m.tp().to_string(),
                m.fp().to_string(),
                m.fn_().to_string(),
                m.tn().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores `p` against `y` under both matrices. Undefined scores are recorded
/// in the report rather than failing the call.
pub fn score_report(
    y: &LabelSeries,
    p: &PredictionSeries,
    window: WindowConfig,
) -> Result<ScoreReport> {
    let quality = confusion_matrix(y, p)?;
    let weighted = weighted_matrix(y, p, window)?;
    Ok(ScoreReport::from_matrices(y.len(), window, quality, weighted))
}
